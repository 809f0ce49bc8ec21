"""Scenario container, parameter schemas and the filter wirings shared by all scenarios."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..cbf_core import GammaSpec, OutputChain, in_S_phi
from ..constants import (
    DEFAULT_DT_S,
    DEFAULT_HORIZON_S,
    Classification,
    FilterWiring,
)
from ..errors import ConfigError, DegenerateConstraintError
from ..filters import (
    AffineConstraint,
    ClfCallbacks,
    FilterDecision,
    clf_cbf_qp,
    constrained_filter,
    min_norm_filter,
    track_kappa_ps,
    unfiltered,
)
from ..simulation import ControlAffinePlant, Trajectory

logger = logging.getLogger("cbf-minphase.scenarios")

Reference = Callable[[np.ndarray], np.ndarray]
Policy = Callable[[np.ndarray], FilterDecision]


@dataclass(frozen=True)
class ParamSpec:
    """One tunable scenario parameter with its documented range."""

    default: Any
    kind: str = "float"
    length: Optional[int] = None
    choices: Tuple[str, ...] = ()
    low: Optional[float] = None
    high: Optional[float] = None
    positive: bool = False
    nonzero: bool = False
    description: str = ""


def _check_number(name: str, value: Any, spec: ParamSpec) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {value!r}", field=name)
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError("value must be finite", field=name)
    if spec.positive and value <= 0:
        raise ConfigError(f"value must be positive, got {value}", field=name)
    if spec.nonzero and value == 0:
        raise ConfigError("value must be nonzero", field=name)
    if spec.low is not None and value < spec.low:
        raise ConfigError(f"value {value} below minimum {spec.low}", field=name)
    if spec.high is not None and value > spec.high:
        raise ConfigError(f"value {value} above maximum {spec.high}", field=name)
    return value


def coerce_param(name: str, value: Any, spec: ParamSpec) -> Any:
    path = f"params.{name}"
    if spec.kind == "float":
        return _check_number(path, value, spec)
    if spec.kind == "vector":
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"expected a list of numbers, got {value!r}", field=path)
        if spec.length is not None and len(value) != spec.length:
            raise ConfigError(f"expected {spec.length} entries, got {len(value)}", field=path)
        if not value:
            raise ConfigError("list must not be empty", field=path)
        return [_check_number(f"{path}[{i}]", item, spec) for i, item in enumerate(value)]
    if spec.kind == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"expected true or false, got {value!r}", field=path)
        return value
    if spec.kind == "choice":
        if value not in spec.choices:
            raise ConfigError(f"expected one of {list(spec.choices)}, got {value!r}", field=path)
        return value
    raise ValueError(f"Unsupported parameter kind: {spec.kind}")


def resolve_params(schema: Mapping[str, ParamSpec], overrides: Optional[Mapping[str, Any]]) -> Dict[str, Any]:
    """Defaults merged with validated overrides; unknown names are rejected."""
    overrides = dict(overrides or {})
    unknown = sorted(set(overrides) - set(schema))
    if unknown:
        raise ConfigError(f"unknown parameter(s) {unknown}; known: {sorted(schema)}", field=f"params.{unknown[0]}")
    resolved = {}
    for name, spec in schema.items():
        value = overrides.get(name, spec.default)
        resolved[name] = coerce_param(name, value, spec)
    return resolved


@dataclass(eq=False)
class Scenario:
    name: str
    plant: ControlAffinePlant
    chain: OutputChain
    spec: GammaSpec
    reference: Reference
    policy: Policy
    wiring: FilterWiring
    x0: np.ndarray
    expected: Classification
    params: Dict[str, Any]
    internal_map: Optional[Callable[[np.ndarray], np.ndarray]] = None
    dt_s: float = DEFAULT_DT_S
    horizon_s: float = DEFAULT_HORIZON_S
    drift_threshold: Optional[float] = None
    analysis: Dict[str, Any] = field(default_factory=dict)
    analyze_run: Optional[Callable[[Trajectory], Dict[str, Any]]] = None

    def describe_run(self, traj: Trajectory) -> Dict[str, Any]:
        details = dict(self.analysis)
        if self.analyze_run is not None:
            details.update(self.analyze_run(traj))
        return details


def require_safe_start(chain: OutputChain, spec: GammaSpec, x0: np.ndarray) -> None:
    if not in_S_phi(chain, spec, x0):
        raise ConfigError(f"initial state {x0.tolist()} violates the cascading constraints", field="params.x0")


def min_norm_policy(chain: OutputChain, spec: GammaSpec, reference: Reference) -> Policy:
    def policy(x: np.ndarray) -> FilterDecision:
        return min_norm_filter(chain, spec, x, reference(x))

    return policy


def kappa_policy(
    chain: OutputChain,
    spec: GammaSpec,
    kappa: Callable[[np.ndarray], float],
    reference: Reference,
    channel: Optional[int] = None,
) -> Policy:
    """Track a virtual-input law; fall back to the reference where the barrier has no authority."""

    def policy(x: np.ndarray) -> FilterDecision:
        u_ref = reference(x)
        try:
            return track_kappa_ps(chain, spec, x, kappa(x), u_ref=u_ref, channel=channel)
        except DegenerateConstraintError:
            logger.debug("barrier authority vanished, applying the reference input")
            return unfiltered(chain, spec, x, u_ref)

    return policy


def equality_policy(
    chain: OutputChain,
    spec: GammaSpec,
    reference: Reference,
    rows: Callable[[np.ndarray], Sequence[AffineConstraint]],
) -> Policy:
    def policy(x: np.ndarray) -> FilterDecision:
        return constrained_filter(chain, spec, x, reference(x), rows(x))

    return policy


def clf_policy(
    chain: OutputChain,
    spec: GammaSpec,
    reference: Reference,
    clf: ClfCallbacks,
    lam: float,
    relax: bool,
) -> Policy:
    def policy(x: np.ndarray) -> FilterDecision:
        return clf_cbf_qp(chain, spec, x, reference(x), clf, lam, relax)

    return policy


def passthrough_policy(chain: OutputChain, spec: GammaSpec, reference: Reference) -> Policy:
    def policy(x: np.ndarray) -> FilterDecision:
        return unfiltered(chain, spec, x, reference(x))

    return policy


def zero_reference(m: int) -> Reference:
    def reference(x: np.ndarray) -> np.ndarray:
        return np.zeros(m)

    return reference


def wiring_choices(*wirings: FilterWiring) -> Tuple[str, ...]:
    return tuple(w.value for w in wirings)

