"""Command-line entry point for the wildgrad engine."""

import argparse
import json
import sys
from pathlib import Path
from typing import Optional

from pydantic import ValidationError

from app.schemas.config import ExportSpec, RunConfig
from app.schemas.report import RunReport
from app.services.config_service import load_config
from app.services.construction_service import default_base, run_construction
from app.services.export_service import RASTER_COMPONENTS, export_field, export_raster
from app.services.fixture_service import load_scenario, load_tn
from app.services.scenario_service import require_valid, validate_scenario
from app.services.tn_service import corner_weights, cyclic_coeffs
from core.config import config
from core.exceptions import ConfigException, StageBoundException, WildgradException
from core.logging import get_logger, setup_logging

logger = get_logger(__name__)

# default points per axis of a CSV export
EXPORT_GRID = 65


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg = cfg.model_copy(update={"seed": args.seed})
    return cfg


def _target(out: Path, path: str) -> Path:
    target = Path(path)
    return target if target.is_absolute() else out / target


def _write_json(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text + "\n", encoding="utf-8")
    logger.info(f"Wrote {path}")
    return path


def _construct(cfg: RunConfig):
    scenario = load_scenario(cfg.scenario)
    require_valid(validate_scenario(scenario, seed=cfg.seed))
    Omega = cfg.domain
    base = cfg.base.to_base() if cfg.base is not None else default_base(scenario)
    tree, report = run_construction(
        scenario,
        base,
        Omega,
        cfg.delta,
        cfg.K,
        seed=cfg.seed,
        grid=cfg.grid,
        mc_samples=cfg.mc_samples,
        probes=cfg.probes,
        quad_depth=cfg.quad_depth,
    )
    return scenario, Omega, tree, report


def _export(spec: ExportSpec, out: Path, scenario, Omega, tree, report: RunReport):
    target = _target(out, spec.path)
    if spec.kind == "field":
        export_field(scenario, tree, Omega, spec.grid or EXPORT_GRID, target)
    elif spec.kind == "raster":
        export_raster(tree, Omega, spec.component, target, s=scenario)
    else:
        _write_json(target, report.model_dump_json(indent=2))


def _check_passed(report: RunReport):
    if not report.passed:
        failures = report.failures()
        raise StageBoundException(
            f"{len(failures)} bound(s) failed: {', '.join(failures[:5])}", data={"failures": failures}
        )


def cmd_validate_scenario(args) -> int:
    cfg = _config(args)
    scenario = load_scenario(args.scenario or cfg.scenario)
    report = validate_scenario(scenario, samples=args.samples, seed=cfg.seed)
    _write_json(args.out / "validation.json", report.model_dump_json(indent=2))
    for row in report.checks:
        logger.info(f"{row.name}: {'ok' if row.passed else 'FAILED'} ({row.achieved:.4g} {row.relation} {row.required:.4g})")
    require_valid(report)
    return 0


def cmd_validate_tn(args) -> int:
    cfg = load_tn(args.fixture)
    coeffs = cyclic_coeffs(cfg.chis)
    summary = {
        "N": cfg.N,
        "kappas": cfg.kappas.tolist(),
        "pis": [pi.first.tolist() for pi in cfg.pis],
        "xis": [xi.first.tolist() for xi in cfg.xis],
        "coefficients": coeffs.nu.tolist(),
        "row_sums": coeffs.nu.sum(axis=1).tolist(),
        "pi_weights": [corner_weights(cfg, i, 0.0).tolist() for i in range(1, cfg.N + 1)],
    }
    _write_json(args.out / "tn.json", json.dumps(summary, indent=2))
    logger.info(f"Valid T_{cfg.N} configuration, κ = {cfg.kappas.tolist()}")
    return 0


def cmd_run(args) -> int:
    cfg = _config(args)
    scenario, Omega, tree, report = _construct(cfg)
    _write_json(args.out / "report.json", report.model_dump_json(indent=2))
    for spec in cfg.export:
        _export(spec, args.out, scenario, Omega, tree, report)
    _check_passed(report)
    logger.info(f"All bounds passed for {scenario.name}, K = {cfg.K}")
    return 0


def cmd_export_field(args) -> int:
    cfg = _config(args)
    scenario, Omega, tree, _ = _construct(cfg)
    export_field(scenario, tree, Omega, args.grid, _target(args.out, args.path))
    return 0


def cmd_export_raster(args) -> int:
    cfg = _config(args)
    scenario, Omega, tree, _ = _construct(cfg)
    export_raster(tree, Omega, args.component, _target(args.out, args.path), s=scenario)
    return 0


def cmd_report(args) -> int:
    path = Path(args.report)
    try:
        report = RunReport.model_validate_json(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigException(f"Cannot read report {path}: {exc}") from exc
    except ValidationError as exc:
        raise ConfigException(f"{path} is not a run report: {exc.error_count()} error(s)") from exc
    logger.info(f"{report.scenario}: K = {report.K}, δ = {report.delta}, seed {report.seed}")
    for row in report.rows:
        logger.info(f"{row.name}: {'ok' if row.passed else 'FAILED'} ({row.achieved:.4g} {row.relation} {row.required:.4g})")
    logger.info(f"graph L¹ by stage: {[round(value, 6) for value in report.graph_l1]}")
    _check_passed(report)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=config.APP_NAME, description="Convex integration construction engine")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="run configuration (TOML)")
    common.add_argument("--seed", type=int, default=None, help="override the configured seed")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    sub = parser.add_subparsers(dest="command", required=True)

    validate = sub.add_parser("validate-scenario", parents=[common], help="check scenario data numerically")
    validate.add_argument("--scenario", default=None, help="built-in name or fixture path")
    validate.add_argument("--samples", type=int, default=1000)
    validate.set_defaults(handler=cmd_validate_scenario)

    tn = sub.add_parser("validate-tn", parents=[common], help="validate a T_N configuration fixture")
    tn.add_argument("fixture", type=Path)
    tn.set_defaults(handler=cmd_validate_tn)

    run = sub.add_parser("run", parents=[common], help="run the construction and write the report")
    run.set_defaults(handler=cmd_run)

    field = sub.add_parser("export-field", parents=[common], help="write the constructed field as CSV")
    field.add_argument("--grid", type=int, default=EXPORT_GRID)
    field.add_argument("--path", default="field.csv")
    field.set_defaults(handler=cmd_export_field)

    raster = sub.add_parser("export-raster", parents=[common], help="write one component as a PGM image")
    raster.add_argument("--component", choices=RASTER_COMPONENTS, default="branch_label")
    raster.add_argument("--path", default="field.pgm")
    raster.set_defaults(handler=cmd_export_raster)

    report = sub.add_parser("report", parents=[common], help="summarize a written run report")
    report.add_argument("report", type=Path)
    report.set_defaults(handler=cmd_report)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except WildgradException as exc:
        logger.error(f"{exc.error_code} - {exc.message}")
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
