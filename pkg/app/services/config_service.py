"""
Run configuration as TOML.

Grammar: a `[run]` table of scalars, a `[domain]` table whose `boxes` array
holds inline tables `{ center = [...], radius = r }`, an optional `[base]`
table and any number of `[[export]]` tables. Keys outside these are
rejected.
"""

import json
import math
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any

from pydantic import ValidationError

from app.schemas.config import RunConfig
from core.exceptions import ConfigException
from core.logging import get_logger

logger = get_logger(__name__)

SECTIONS = ("run", "domain", "base", "export")
RUN_KEYS = ("scenario", "delta", "K", "seed", "grid", "mc_samples", "probes", "quad_depth")


def _itemize(exc: ValidationError) -> list[str]:
    items = []
    for error in exc.errors():
        location = ".".join(str(part) for part in error["loc"]) or "config"
        items.append(f"{location}: {error['msg']}")
    return items


def parse_config(text: str) -> RunConfig:
    """Parse and validate configuration text, filling defaults."""
    try:
        document = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        # the decoder message ends with "(at line L, column C)"
        raise ConfigException(f"Config is not valid TOML: {exc}") from exc

    unknown = sorted(set(document) - set(SECTIONS))
    if unknown:
        raise ConfigException(f"Unknown config sections: {', '.join(unknown)}", data={"errors": unknown})

    run = document.get("run", {})
    domain = document.get("domain", {})
    if not isinstance(run, dict) or not isinstance(domain, dict):
        raise ConfigException("[run] and [domain] must be tables")
    errors = [f"run.{key}: unknown key" for key in run if key not in RUN_KEYS]
    errors += [f"domain.{key}: unknown key" for key in domain if key != "boxes"]
    if errors:
        raise ConfigException(f"Invalid config: {'; '.join(errors)}", data={"errors": errors})

    payload: dict[str, Any] = dict(run)
    if "boxes" in domain:
        payload["omega"] = domain["boxes"]
    if "base" in document:
        payload["base"] = document["base"]
    if "export" in document:
        payload["export"] = document["export"]
    try:
        cfg = RunConfig.model_validate(payload)
    except ValidationError as exc:
        items = _itemize(exc)
        raise ConfigException(f"Invalid config: {'; '.join(items)}", data={"errors": items}) from exc
    logger.debug(f"Parsed config: scenario {cfg.scenario}, δ = {cfg.delta}, K = {cfg.K}, seed {cfg.seed}")
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigException(f"Cannot read config {path}: {exc}", data={"path": str(path)}) from exc
    return parse_config(text)


def _toml_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    if isinstance(value, str):
        return json.dumps(value, ensure_ascii=False)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_value(item) for item in value) + "]"
    if isinstance(value, dict):
        return "{ " + ", ".join(f"{key} = {_toml_value(item)}" for key, item in value.items()) + " }"
    raise ConfigException(f"Cannot write {type(value).__name__} values to TOML")


def _table(values: dict[str, Any]) -> list[str]:
    return [f"{key} = {_toml_value(value)}" for key, value in values.items() if value is not None]


def serialize_config(cfg: RunConfig) -> str:
    """Write a configuration back as normalized TOML; parse_config reads it back unchanged."""
    data = cfg.model_dump()
    lines = ["[run]"]
    lines += _table({key: data[key] for key in RUN_KEYS})
    lines += ["", "[domain]", f"boxes = {_toml_value(data['omega'])}"]
    if data["base"] is not None:
        lines += ["", "[base]"] + _table(data["base"])
    for export in data["export"]:
        lines += ["", "[[export]]"] + _table(export)
    return "\n".join(lines) + "\n"


def normalize(text: str) -> str:
    return serialize_config(parse_config(text))
