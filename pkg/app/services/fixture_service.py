"""Scenario and T_N configuration fixtures stored as JSON documents."""

import json
from pathlib import Path
from typing import Callable

import numpy as np
from pydantic import ValidationError

from app.models.geometry import MatrixPair, WaveVector
from app.models.scenario import Scenario
from app.models.tn_config import TNConfig
from app.schemas.fixture import GammaEntry, KappaEntry, ScenarioFixture, SigmaTable, TNFixture
from app.services.scenario_service import GraphFirstSpec, graph_first_scenario, two_branch_scenario
from app.services.tn_service import build_tn
from core.config import config
from core.exceptions import ScenarioException, ValidationException, WildgradException
from core.logging import get_logger

logger = get_logger(__name__)

BUILTIN_SCENARIOS: dict[str, Callable[[], Scenario]] = {"two-branch": two_branch_scenario}


def _read_json(path: Path, error: type[WildgradException]) -> dict:
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise error(f"Cannot read fixture {path}: {exc}", data={"path": str(path)}) from exc
    except json.JSONDecodeError as exc:
        raise error(
            f"Fixture {path} is not valid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}",
            data={"path": str(path), "line": exc.lineno, "column": exc.colno},
        ) from exc


def _validate(schema, document: dict, path: Path, error: type[WildgradException]):
    try:
        return schema.model_validate(document)
    except ValidationError as exc:
        items = [f"{'.'.join(str(part) for part in e['loc']) or 'fixture'}: {e['msg']}" for e in exc.errors()]
        raise error(f"Fixture {path} is invalid: {'; '.join(items)}", data={"errors": items}) from exc


def _kappa_map(entries: list[KappaEntry]):
    constants = np.array([entry.constant for entry in entries])
    slopes = [np.asarray(entry.slope, dtype=float) if entry.slope else None for entry in entries]

    def kappa_map(rho: MatrixPair):
        flat = rho.flat()
        return tuple(
            float(c) if slope is None else float(c + slope @ flat) for c, slope in zip(constants, slopes)
        )

    return kappa_map


def _gamma_map(entries: list[GammaEntry]):
    tables = [
        (
            np.asarray(entry.p, dtype=float),
            np.asarray(entry.a, dtype=float),
            np.asarray(entry.B, dtype=float),
            None if entry.p_slope is None else np.asarray(entry.p_slope, dtype=float),
            None if entry.B_slope is None else np.asarray(entry.B_slope, dtype=float),
        )
        for entry in entries
    ]
    constant = all(P is None and Bs is None for _, _, _, P, Bs in tables)
    fixed = tuple(WaveVector(p, a, B) for p, a, B, _, _ in tables) if constant else None

    def gamma_map(rho: MatrixPair):
        if fixed is not None:
            return fixed
        flat = rho.flat()
        gammas = []
        for p, a, B, P, Bs in tables:
            p_rho = p if P is None else p + P @ flat
            B_rho = B if Bs is None else B + np.tensordot(flat, Bs, axes=1)
            gammas.append(WaveVector(p_rho, a, B_rho))
        return tuple(gammas)

    return gamma_map


def piecewise_sigma(table: SigmaTable):
    """Entrywise σ from a piecewise-affine table; a breakpoint belongs to the piece on its right."""
    breakpoints = np.asarray(table.breakpoints, dtype=float)
    slopes = np.asarray(table.slopes, dtype=float)
    intercepts = np.asarray(table.intercepts, dtype=float)

    def sigma(A: np.ndarray) -> np.ndarray:
        piece = np.searchsorted(breakpoints, A, side="right")
        return slopes[piece] * A + intercepts[piece]

    return sigma


def scenario_from_fixture(fixture: ScenarioFixture) -> Scenario:
    kappa_map = _kappa_map(fixture.kappas)
    gamma_map = _gamma_map(fixture.gammas)
    zero = MatrixPair.zeros(fixture.m, fixture.n)
    try:
        build_tn(zero, gamma_map(zero), kappa_map(zero))
    except ValidationException as exc:
        raise ScenarioException(f"Scenario {fixture.name} has no valid configuration at ρ = 0: {exc.message}") from exc

    if fixture.sigma is None:
        spec = GraphFirstSpec(
            fixture.name, fixture.m, fixture.n, fixture.N, fixture.r0, fixture.delta1, fixture.delta2,
            kappa_map, gamma_map,
        )
        return graph_first_scenario(spec)
    return Scenario(
        name=fixture.name,
        m=fixture.m,
        n=fixture.n,
        N=fixture.N,
        r0=fixture.r0,
        delta1=fixture.delta1,
        delta2=fixture.delta2,
        kappa_map=kappa_map,
        gamma_map=gamma_map,
        sigma=piecewise_sigma(fixture.sigma),
        graph_tol=fixture.graph_tol or config.GRAPH_TOL,
    )


def load_scenario(name_or_path: str) -> Scenario:
    """A built-in scenario by name, or a scenario fixture file."""
    builtin = BUILTIN_SCENARIOS.get(name_or_path)
    if builtin is not None:
        return builtin()
    path = Path(name_or_path)
    fixture = _validate(ScenarioFixture, _read_json(path, ScenarioException), path, ScenarioException)
    scenario = scenario_from_fixture(fixture)
    logger.info(f"Loaded scenario {scenario.name} from {path} (m = {scenario.m}, n = {scenario.n}, N = {scenario.N})")
    return scenario


def tn_from_fixture(fixture: TNFixture) -> TNConfig:
    rho = MatrixPair(np.asarray(fixture.rho.first, dtype=float), np.asarray(fixture.rho.second, dtype=float))
    gammas = [WaveVector(gamma.p, gamma.a, gamma.B) for gamma in fixture.gammas]
    return build_tn(rho, gammas, fixture.kappas)


def load_tn(path) -> TNConfig:
    """Read and validate a T_N configuration; invalid algebra raises ValidationException."""
    path = Path(path)
    fixture = _validate(TNFixture, _read_json(path, ValidationException), path, ValidationException)
    return tn_from_fixture(fixture)
