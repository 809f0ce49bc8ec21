"""Run configuration: JSON documents, dotted overrides and environment settings."""

from __future__ import annotations

import copy
import json
import logging
import os
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence

from dotenv import load_dotenv

from .constants import Classification
from .errors import ConfigError
from .scenarios import scenario_schema, validate_params

load_dotenv()

logger = logging.getLogger("cbf-minphase.config")

THREADS_ENV = "CBF_MINPHASE_THREADS"
LOG_LEVEL_ENV = "CBF_MINPHASE_LOG_LEVEL"

TOP_LEVEL_KEYS = ("scenario", "params", "sim", "output_dir", "seed", "expected")
SIM_KEYS = ("dt_s", "horizon_s", "blowup", "safety_tol", "settle_tol", "drift_threshold")


@dataclass
class SimSettings:
    """Simulation overrides; None falls back to the scenario default."""

    dt_s: Optional[float] = None
    horizon_s: Optional[float] = None
    blowup: Optional[float] = None
    safety_tol: Optional[float] = None
    settle_tol: Optional[float] = None
    drift_threshold: Optional[float] = None


@dataclass
class RunConfig:
    scenario: str
    params: Dict[str, Any] = field(default_factory=dict)
    sim: SimSettings = field(default_factory=SimSettings)
    output_dir: str = "out"
    seed: int = 0
    expected: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def sweep_thread_cap() -> int:
    raw = os.getenv(THREADS_ENV)
    if raw is None or raw.strip() == "":
        return max(1, min(4, os.cpu_count() or 1))
    try:
        value = int(raw)
    except ValueError as exc:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from exc
    if value < 1:
        raise ConfigError(f"{THREADS_ENV} must be at least 1, got {value}")
    return value


def log_level() -> str:
    return os.getenv(LOG_LEVEL_ENV, "INFO").upper()


def _parse_sim(data: Any) -> SimSettings:
    if data is None:
        return SimSettings()
    if not isinstance(data, dict):
        raise ConfigError("expected an object", field="sim")
    unknown = sorted(set(data) - set(SIM_KEYS))
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown}; known: {list(SIM_KEYS)}", field=f"sim.{unknown[0]}")
    values = {}
    for key, value in data.items():
        if value is None:
            values[key] = None
            continue
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not value > 0:
            raise ConfigError(f"expected a positive number, got {value!r}", field=f"sim.{key}")
        values[key] = float(value)
    return SimSettings(**values)


def parse_config(data: Any, source: Optional[str] = None) -> RunConfig:
    """Validate a decoded config document against the scenario schema."""
    if not isinstance(data, dict):
        raise ConfigError("config document must be a JSON object", source=source)
    unknown = sorted(set(data) - set(TOP_LEVEL_KEYS))
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown}; known: {list(TOP_LEVEL_KEYS)}", field=unknown[0], source=source)
    if "scenario" not in data or not isinstance(data["scenario"], str):
        raise ConfigError("a scenario name is required", field="scenario", source=source)
    scenario = data["scenario"]
    params = data.get("params") or {}
    if not isinstance(params, dict):
        raise ConfigError("expected an object", field="params", source=source)
    try:
        scenario_schema(scenario)
        validate_params(scenario, params)
        sim = _parse_sim(data.get("sim"))
    except ConfigError as exc:
        if exc.source is None and source is not None:
            raise ConfigError(exc.message, field=exc.field, source=source) from exc
        raise

    seed = data.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"expected a nonnegative integer, got {seed!r}", field="seed", source=source)
    output_dir = data.get("output_dir", "out")
    if not isinstance(output_dir, str) or not output_dir:
        raise ConfigError("expected a directory path", field="output_dir", source=source)
    expected = data.get("expected")
    if expected is not None and expected not in [c.value for c in Classification]:
        raise ConfigError(
            f"expected one of {[c.value for c in Classification]}, got {expected!r}", field="expected", source=source
        )
    return RunConfig(
        scenario=scenario,
        params=dict(params),
        sim=sim,
        output_dir=output_dir,
        seed=seed,
        expected=expected,
    )


def load_config(path: str) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            text = handle.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", source=path) from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(exc.msg, line=exc.lineno, column=exc.colno, source=path) from exc
    return parse_config(data, source=path)


def parse_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def _resolve_path(config: RunConfig, key: str) -> List[str]:
    parts = key.split(".")
    if parts[0] in TOP_LEVEL_KEYS:
        return parts
    if len(parts) == 1:
        if key in SIM_KEYS:
            return ["sim", key]
        if key in scenario_schema(config.scenario):
            return ["params", key]
    raise ConfigError(f"unknown parameter path '{key}'", field=key)


def set_path(config: RunConfig, key: str, value: Any) -> RunConfig:
    """Return a re-validated copy of ``config`` with one dotted path replaced."""
    document = config.to_dict()
    document["sim"] = {k: v for k, v in document["sim"].items() if v is not None}
    document = copy.deepcopy(document)
    parts = _resolve_path(config, key)
    if len(parts) == 1:
        document[parts[0]] = value
    elif len(parts) == 2 and parts[0] in ("params", "sim"):
        document.setdefault(parts[0], {})[parts[1]] = value
    else:
        raise ConfigError(f"unknown parameter path '{key}'", field=key)
    logger.debug(f"override {'.'.join(parts)} = {value!r}")
    return parse_config(document)


def apply_overrides(config: RunConfig, assignments: Sequence[str]) -> RunConfig:
    for assignment in assignments:
        if "=" not in assignment:
            raise ConfigError(f"override must look like key=value, got {assignment!r}")
        key, raw = assignment.split("=", 1)
        config = set_path(config, key.strip(), parse_value(raw.strip()))
    return config
