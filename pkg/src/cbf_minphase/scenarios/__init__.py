"""Worked CBF scenarios and their registry."""

from __future__ import annotations

from typing import Any, Callable, Dict, List, Mapping, Optional

from ..errors import ConfigError
from .base import ParamSpec, Scenario, resolve_params
from .cartpole import (
    CARTPOLE_MI_PARAMS,
    CARTPOLE_SI_PARAMS,
    cartpole_dynamics,
    cartpole_energy,
    cartpole_internal,
    cartpole_mi,
    cartpole_momentum,
    cartpole_si,
    kappa_ps_cartpole,
    theta_d,
)
from .linear import LINEAR_MI_PARAMS, LINEAR_SI_PARAMS, linear_mi, linear_si
from .references import io_linearize_siso, lqr_reference

SCENARIOS: Dict[str, Dict[str, Any]] = {
    "linear_si": {
        "schema": LINEAR_SI_PARAMS,
        "build": lambda params: linear_si(params.get("a", -1.0), params),
        "description": "single-input linear plant, internal pole a",
    },
    "linear_mi": {
        "schema": LINEAR_MI_PARAMS,
        "build": linear_mi,
        "description": "two-input linear plant with an internal-stability equality row",
    },
    "cartpole_si": {
        "schema": CARTPOLE_SI_PARAMS,
        "build": cartpole_si,
        "description": "force-driven cart-pole with drag and a pole-angle barrier",
    },
    "cartpole_mi": {
        "schema": CARTPOLE_MI_PARAMS,
        "build": cartpole_mi,
        "description": "cart-pole with force and torque, angle regulation under the barrier",
    },
}


def scenario_schema(name: str) -> Dict[str, ParamSpec]:
    if name not in SCENARIOS:
        raise ConfigError(f"unknown scenario '{name}'; known: {sorted(SCENARIOS)}", field="scenario")
    return SCENARIOS[name]["schema"]


def validate_params(name: str, params: Optional[Mapping[str, Any]]) -> Dict[str, Any]:
    return resolve_params(scenario_schema(name), params)


def build_scenario(name: str, params: Optional[Mapping[str, Any]] = None) -> Scenario:
    scenario_schema(name)
    builder: Callable[[Dict[str, Any]], Scenario] = SCENARIOS[name]["build"]
    return builder(dict(params or {}))


def list_scenarios() -> List[Dict[str, Any]]:
    listing = []
    for name, entry in SCENARIOS.items():
        schema = entry["schema"]
        listing.append(
            {
                "name": name,
                "description": entry["description"],
                "wirings": list(schema["wiring"].choices),
                "defaults": {key: spec.default for key, spec in schema.items()},
            }
        )
    return listing


__all__ = [
    "SCENARIOS",
    "Scenario",
    "build_scenario",
    "cartpole_dynamics",
    "cartpole_energy",
    "cartpole_internal",
    "cartpole_mi",
    "cartpole_momentum",
    "cartpole_si",
    "io_linearize_siso",
    "kappa_ps_cartpole",
    "linear_mi",
    "linear_si",
    "list_scenarios",
    "lqr_reference",
    "scenario_schema",
    "theta_d",
    "validate_params",
]
