"""Linear three-state plants with the CBF ``h(x) = x1``."""

from __future__ import annotations

import logging
from typing import Any, Dict, Mapping, Optional

import numpy as np

from ..cbf_core import build_gamma_spec, eval_mu_drift, linear_output_chain
from ..constants import Classification, FilterWiring, MinPhaseVerdict
from ..errors import ConfigError
from ..filters import EQUALITY, AffineConstraint
from ..internal_analysis import (
    extract_internal_linear,
    fixed_mu_equilibrium,
    linear_relative_degree,
    multi_input_obstruction,
)
from ..simulation import ControlAffinePlant, Trajectory
from .base import (
    ParamSpec,
    Scenario,
    equality_policy,
    kappa_policy,
    min_norm_policy,
    require_safe_start,
    resolve_params,
    wiring_choices,
)
from .references import lqr_reference

logger = logging.getLogger("cbf-minphase.scenarios.linear")

EQUILIBRIUM_X1 = 1.25
CBF_ROW = np.array([1.0, 0.0, 0.0])

LINEAR_SI_PARAMS: Dict[str, ParamSpec] = {
    "a": ParamSpec(-1.0, low=-10.0, high=10.0, nonzero=True, description="internal pole of x3"),
    "gammas": ParamSpec([2.0, 3.0], kind="vector", length=2, positive=True, high=100.0),
    "x0": ParamSpec([0.5, 0.0, 1.0], kind="vector", length=3, low=-100.0, high=100.0),
    "wiring": ParamSpec("min_norm", kind="choice", choices=wiring_choices(FilterWiring.MIN_NORM, FilterWiring.KAPPA_PS)),
    "mu_e": ParamSpec(7.5, low=0.0, high=1e3, description="virtual input tracked by the kappa_ps wiring"),
    "q_weight": ParamSpec(1.0, positive=True, high=1e6),
    "r_weight": ParamSpec(1.0, positive=True, high=1e6),
}

LINEAR_MI_PARAMS: Dict[str, ParamSpec] = {
    "a": ParamSpec(1.0, low=-10.0, high=10.0, nonzero=True),
    "gammas": ParamSpec([2.0, 3.0], kind="vector", length=2, positive=True, high=100.0),
    "x0": ParamSpec([0.5, 0.0, 1.0], kind="vector", length=3, low=-100.0, high=100.0),
    "wiring": ParamSpec(
        "equality_qp", kind="choice", choices=wiring_choices(FilterWiring.EQUALITY_QP, FilterWiring.MIN_NORM)
    ),
    "eta_decay": ParamSpec(1.0, positive=True, high=100.0, description="closed-loop rate imposed on x3"),
    "q_weight": ParamSpec(1.0, positive=True, high=1e6),
    "r_weight": ParamSpec(1.0, positive=True, high=1e6),
}


def linear_plant_matrices(a: float) -> Dict[str, np.ndarray]:
    """``A(a)``, the input column ``B`` and the two-column ``B2`` of the two-input variant."""
    return {
        "A": np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 0.0], [3.0, 1.0, float(a)]]),
        "B": np.array([[0.0], [1.0], [0.0]]),
        "B2": np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
    }


def linear_equilibrium(a: float) -> np.ndarray:
    """Point on the undriven equilibrium line ``span([a, 0, -3])`` with ``x1 = 1.25``."""
    if a == 0:
        raise ConfigError("a must be nonzero for an isolated equilibrium", field="params.a")
    return (EQUILIBRIUM_X1 / a) * np.array([a, 0.0, -3.0])


def _linear_plant(name: str, a_mat: np.ndarray, b_mat: np.ndarray) -> ControlAffinePlant:
    n, m = b_mat.shape
    return ControlAffinePlant(
        n=n,
        m=m,
        f=lambda x: a_mat @ x,
        g=lambda x: b_mat,
        name=name,
        linear=(a_mat, b_mat),
    )


def _zero_dynamics_report(zd) -> Dict[str, Any]:
    return {
        "zero_dynamics": zd.min_phase.value,
        "A_eta": zd.A_eta.tolist(),
        "BGamma": zd.BGamma.tolist(),
    }


def _expected_for(min_phase: MinPhaseVerdict) -> Classification:
    if min_phase == MinPhaseVerdict.MINIMUM_PHASE:
        return Classification.BOUNDED
    return Classification.DIVERGED


def linear_si(a: float = -1.0, overrides: Optional[Mapping[str, Any]] = None) -> Scenario:
    params = resolve_params(LINEAR_SI_PARAMS, {"a": a, **dict(overrides or {})})
    mats = linear_plant_matrices(params["a"])
    a_mat, b_mat = mats["A"], mats["B"]
    r = linear_relative_degree(a_mat, b_mat, CBF_ROW)
    spec = build_gamma_spec(params["gammas"])
    chain = linear_output_chain(a_mat, b_mat, CBF_ROW, r)
    zd = extract_internal_linear(a_mat, b_mat, CBF_ROW, spec)
    x_e = linear_equilibrium(params["a"])
    _, reference = lqr_reference(a_mat, b_mat, x_e, params["q_weight"], params["r_weight"])
    x0 = np.asarray(params["x0"], dtype=float)
    require_safe_start(chain, spec, x0)

    wiring = FilterWiring(params["wiring"])
    if wiring == FilterWiring.MIN_NORM:
        policy = min_norm_policy(chain, spec, reference)
    else:
        mu_e = params["mu_e"]
        policy = kappa_policy(chain, spec, lambda x: mu_e, reference)

    def analyze_run(traj: Trajectory) -> Dict[str, Any]:
        mu_final = max(float(traj.mu[-1]), 0.0)
        return {
            "mu_final": mu_final,
            "eta_equilibrium": fixed_mu_equilibrium(zd, mu_final).tolist(),
        }

    return Scenario(
        name="linear_si",
        plant=_linear_plant("linear_si", a_mat, b_mat),
        chain=chain,
        spec=spec,
        reference=reference,
        policy=policy,
        wiring=wiring,
        x0=x0,
        expected=_expected_for(zd.min_phase),
        params=params,
        internal_map=lambda x: zd.N @ x,
        analysis={**_zero_dynamics_report(zd), "x_e": x_e.tolist()},
        analyze_run=analyze_run,
    )


def internal_stability_row(zd, chain, spec, a: float, eta_decay: float, x: np.ndarray) -> AffineConstraint:
    """``BGamma mu + u2 = -(a + rho) eta``, so the zero dynamics become ``eta' = -rho eta``."""
    slope = np.asarray(chain.lglfh(x), dtype=float)
    coeffs = zd.BGamma[0] * slope + np.array([0.0, 1.0])
    eta = float(zd.N[0] @ x)
    rhs = -(a + eta_decay) * eta - zd.BGamma[0] * eval_mu_drift(chain, spec, x)
    return AffineConstraint(EQUALITY, coeffs, rhs, "internal")


def linear_mi(overrides: Optional[Mapping[str, Any]] = None) -> Scenario:
    params = resolve_params(LINEAR_MI_PARAMS, overrides)
    a = params["a"]
    mats = linear_plant_matrices(a)
    a_mat, b_si, b_mi = mats["A"], mats["B"], mats["B2"]
    r = linear_relative_degree(a_mat, b_mi, CBF_ROW)
    spec = build_gamma_spec(params["gammas"])
    chain = linear_output_chain(a_mat, b_mi, CBF_ROW, r)
    zd = extract_internal_linear(a_mat, b_si, CBF_ROW, spec)
    x_e = linear_equilibrium(a)
    _, single = lqr_reference(a_mat, b_si, x_e, params["q_weight"], params["r_weight"])

    def reference(x: np.ndarray) -> np.ndarray:
        return np.array([single(x)[0], 0.0])

    x0 = np.asarray(params["x0"], dtype=float)
    require_safe_start(chain, spec, x0)
    wiring = FilterWiring(params["wiring"])
    if wiring == FilterWiring.EQUALITY_QP:
        eta_decay = params["eta_decay"]
        policy = equality_policy(
            chain,
            spec,
            reference,
            lambda x: [internal_stability_row(zd, chain, spec, a, eta_decay, x)],
        )
        expected = Classification.BOUNDED
    else:
        policy = min_norm_policy(chain, spec, reference)
        expected = _expected_for(zd.min_phase)

    witness = multi_input_obstruction(chain.lglfh(x0), b_mi)
    return Scenario(
        name="linear_mi",
        plant=_linear_plant("linear_mi", a_mat, b_mi),
        chain=chain,
        spec=spec,
        reference=reference,
        policy=policy,
        wiring=wiring,
        x0=x0,
        expected=expected,
        params=params,
        internal_map=lambda x: zd.N @ x,
        analysis={
            **_zero_dynamics_report(zd),
            "x_e": x_e.tolist(),
            "obstruction_direction": witness.c.tolist(),
            "obstruction_field": witness.q.tolist(),
        },
    )

