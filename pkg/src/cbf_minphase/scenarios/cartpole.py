"""Cart-pole plants with the pole-angle barrier ``h = cos(theta) - cos(theta_max)``.

State layout is ``[s, theta, s_dot, theta_dot]`` with ``theta = 0`` upright.
"""

from __future__ import annotations

import logging
import math
from typing import Any, Dict, Mapping, Optional, Sequence

import numpy as np

from ..cbf_core import GammaSpec, OutputChain, build_gamma_spec
from ..constants import CARTPOLE_GUARD_DEG, DEFAULT_DRIFT_THRESHOLD, Classification, FilterWiring
from ..errors import NonFiniteError
from ..filters import ClfCallbacks
from ..internal_analysis import local_min_phase_jacobian, multi_input_obstruction
from ..simulation import ControlAffinePlant
from .base import (
    ParamSpec,
    Scenario,
    clf_policy,
    kappa_policy,
    min_norm_policy,
    passthrough_policy,
    require_safe_start,
    resolve_params,
    wiring_choices,
    zero_reference,
)
from .references import io_linearize_siso

logger = logging.getLogger("cbf-minphase.scenarios.cartpole")

# Approximate boundary. The small-angle estimate (a non-oscillating tracked-angle
# loop iff gamma >= 8) is slightly conservative: gamma = 7.9 still stays bounded.
KAPPA_PS_GAMMA_THRESHOLD = 7.9

CARTPOLE_SI_PARAMS: Dict[str, ParamSpec] = {
    "b": ParamSpec(4.0, low=0.0, high=100.0, description="cart drag"),
    "gamma": ParamSpec(10.0, positive=True, high=1e3),
    "theta_max_deg": ParamSpec(60.0, positive=True, high=84.0),
    "x0": ParamSpec([0.1, math.pi / 6.0, 0.0, 0.0], kind="vector", length=4, low=-100.0, high=100.0),
    "wiring": ParamSpec(
        "kappa_ps", kind="choice", choices=wiring_choices(FilterWiring.KAPPA_PS, FilterWiring.BASELINE)
    ),
}

CARTPOLE_MI_PARAMS: Dict[str, ParamSpec] = {
    "gamma": ParamSpec(20.0, positive=True, high=1e3),
    "theta_max_deg": ParamSpec(60.0, positive=True, high=84.0),
    "theta_target_deg": ParamSpec(55.0, low=-84.0, high=84.0),
    "k_io": ParamSpec([25.0, 10.0], kind="vector", length=2, positive=True, high=1e4),
    "clf_lambda": ParamSpec(0.5, low=0.0, high=100.0),
    "clf_cross_weight": ParamSpec(0.0, low=0.0, high=1.99),
    "relax": ParamSpec(True, kind="bool"),
    "x0": ParamSpec([0.0, -math.pi / 18.0, 0.0, 12.0], kind="vector", length=4, low=-100.0, high=100.0),
    "wiring": ParamSpec(
        "clf_cbf_qp",
        kind="choice",
        choices=wiring_choices(FilterWiring.CLF_CBF_QP, FilterWiring.MIN_NORM, FilterWiring.UNFILTERED),
    ),
}


def _guard(x: np.ndarray) -> None:
    if not all(map(math.isfinite, x)):
        raise NonFiniteError("cart-pole state is not finite")
    if abs(x[1]) > math.radians(CARTPOLE_GUARD_DEG):
        raise NonFiniteError(f"pole angle {math.degrees(x[1]):.2f} deg beyond the {CARTPOLE_GUARD_DEG:g} deg guard")


def _free_accelerations(x: np.ndarray):
    _, theta, _, omega = x
    sin, cos = math.sin(theta), math.cos(theta)
    den = 1.0 + sin * sin
    s_acc = (-omega * omega * sin + cos * sin) / den
    theta_acc = (-omega * omega * cos * sin + 2.0 * sin) / den
    return s_acc, theta_acc, den


def _si_drift(b: float):
    def f(x: np.ndarray) -> np.ndarray:
        s_acc, theta_acc, _ = _free_accelerations(x)
        return np.array([x[2], x[3], s_acc - b * x[2] / math.cos(x[1]), theta_acc])

    return f


def _si_input(x: np.ndarray) -> np.ndarray:
    cos = math.cos(x[1])
    den = 1.0 + math.sin(x[1]) ** 2
    return np.array([[0.0], [0.0], [1.0 / den], [cos / den]])


def _mi_drift(x: np.ndarray) -> np.ndarray:
    s_acc, theta_acc, _ = _free_accelerations(x)
    return np.array([x[2], x[3], s_acc, theta_acc])


def _mi_input(x: np.ndarray) -> np.ndarray:
    cos = math.cos(x[1])
    den = 1.0 + math.sin(x[1]) ** 2
    return np.array([[0.0, 0.0], [0.0, 0.0], [1.0 / den, cos / den], [cos / den, 2.0 / den]])


def cartpole_dynamics(b: float, x, u) -> np.ndarray:
    """State derivative of the force-driven cart-pole with drag ``b``."""
    x = np.asarray(x, dtype=float)
    if math.cos(x[1]) <= 0:
        raise NonFiniteError("cart-pole dynamics undefined for |theta| >= 90 deg")
    force = float(np.atleast_1d(u)[0])
    deriv = _si_drift(b)(x) + _si_input(x)[:, 0] * force
    if not np.all(np.isfinite(deriv)):
        raise NonFiniteError("non-finite cart-pole derivative")
    return deriv


def cartpole_energy(x) -> float:
    _, theta, s_dot, omega = np.asarray(x, dtype=float)
    kinetic = 0.5 * (2.0 * s_dot * s_dot - 2.0 * math.cos(theta) * s_dot * omega + omega * omega)
    return kinetic + math.cos(theta)


def cartpole_momentum(x) -> float:
    _, theta, s_dot, omega = np.asarray(x, dtype=float)
    return 2.0 * s_dot - math.cos(theta) * omega


def cartpole_internal(x, b: float = 4.0) -> np.ndarray:
    s, theta, s_dot, omega = np.asarray(x, dtype=float)
    return np.array([s, s_dot * math.cos(theta) - omega + b * s])


def theta_d(eta2: float, theta_max: float) -> float:
    """Desired pole angle for the internal coordinate, clipped to the barrier."""
    bound = math.sin(theta_max)
    return math.asin(max(min(eta2, bound), -bound))


def kappa_ps_cartpole(eta: Sequence[float], spec: GammaSpec, theta_max: float) -> float:
    rate = float(spec.gammas[0])
    if any(abs(g - rate) > 1e-9 * rate for g in spec.gammas):
        raise ValueError("kappa_ps needs a repeated decay rate")
    target = theta_d(float(eta[1]), theta_max)
    return max(rate * rate * (math.cos(target) - math.cos(theta_max)), 0.0)


def angle_barrier_chain(theta_max: float, multi_input: bool) -> OutputChain:
    cos_max = math.cos(theta_max)

    def lf2(x: np.ndarray) -> float:
        _, theta_acc, _ = _free_accelerations(x)
        return -theta_acc * math.sin(x[1]) - x[3] * x[3] * math.cos(x[1])

    def lglfh(x: np.ndarray) -> np.ndarray:
        sin = math.sin(x[1])
        den = 1.0 + sin * sin
        if multi_input:
            return -sin * np.array([math.cos(x[1]), 2.0]) / den
        return np.array([-sin * math.cos(x[1]) / den])

    return OutputChain(
        r=2,
        lfh=[
            lambda x: math.cos(x[1]) - cos_max,
            lambda x: -x[3] * math.sin(x[1]),
            lf2,
        ],
        lglfh=lglfh,
        name="cos(theta) - cos(theta_max)",
    )


def angle_output_chain(theta_target: float) -> OutputChain:
    """``y = theta - theta_target`` on the two-input cart-pole."""

    def lf2(x: np.ndarray) -> float:
        return _free_accelerations(x)[1]

    def lglf(x: np.ndarray) -> np.ndarray:
        den = 1.0 + math.sin(x[1]) ** 2
        return np.array([math.cos(x[1]), 2.0]) / den

    return OutputChain(
        r=2,
        lfh=[lambda x: x[1] - theta_target, lambda x: x[3], lf2],
        lglfh=lglf,
        name="theta - theta_target",
    )


def feedback_zero_dynamics(b: float, theta_max: float):
    """Internal field with the pole held at the desired angle (``phi`` on the equilibrium line)."""

    def field(eta: np.ndarray, _phi: np.ndarray) -> np.ndarray:
        target = theta_d(float(eta[1]), theta_max)
        cos = math.cos(target)
        return np.array([(eta[1] - b * eta[0]) / cos, -math.sin(target)])

    return field


def cartpole_si(overrides: Optional[Mapping[str, Any]] = None) -> Scenario:
    params = resolve_params(CARTPOLE_SI_PARAMS, overrides)
    b = params["b"]
    theta_max = math.radians(params["theta_max_deg"])
    spec = build_gamma_spec([params["gamma"], params["gamma"]])
    chain = angle_barrier_chain(theta_max, multi_input=False)
    x0 = np.asarray(params["x0"], dtype=float)
    require_safe_start(chain, spec, x0)
    plant = ControlAffinePlant(n=4, m=1, f=_si_drift(b), g=_si_input, name="cartpole_si", guard=_guard)
    reference = zero_reference(1)

    wiring = FilterWiring(params["wiring"])
    if wiring == FilterWiring.KAPPA_PS:

        def kappa(x: np.ndarray) -> float:
            return kappa_ps_cartpole(cartpole_internal(x, b), spec, theta_max)

        gamma_ok = params["gamma"] >= KAPPA_PS_GAMMA_THRESHOLD
        expected = Classification.BOUNDED if gamma_ok else Classification.DIVERGED
    else:

        def kappa(x: np.ndarray) -> float:
            return 0.0

        expected = Classification.DIVERGED
    policy = kappa_policy(chain, spec, kappa, reference)

    local = local_min_phase_jacobian(feedback_zero_dynamics(b, theta_max), np.zeros(2), np.zeros(2))
    return Scenario(
        name="cartpole_si",
        plant=plant,
        chain=chain,
        spec=spec,
        reference=reference,
        policy=policy,
        wiring=wiring,
        x0=x0,
        expected=expected,
        params=params,
        internal_map=lambda x: cartpole_internal(x, b),
        horizon_s=30.0,
        drift_threshold=DEFAULT_DRIFT_THRESHOLD,
        analysis={
            "zero_dynamics_jacobian": local.jacobian.tolist(),
            "zero_dynamics": local.verdict.value,
        },
    )


def cart_clf(cross_weight: float) -> ClfCallbacks:
    """``W = s^2 + c s s_dot + s_dot^2`` on the cart's position and velocity."""

    def gradient(x: np.ndarray):
        s, s_dot = x[0], x[2]
        return 2.0 * s + cross_weight * s_dot, cross_weight * s + 2.0 * s_dot

    def w(x: np.ndarray) -> float:
        s, s_dot = x[0], x[2]
        return s * s + cross_weight * s * s_dot + s_dot * s_dot

    def lfw(x: np.ndarray) -> float:
        d_s, d_sdot = gradient(x)
        return d_s * x[2] + d_sdot * _free_accelerations(x)[0]

    def lgw(x: np.ndarray) -> np.ndarray:
        _, d_sdot = gradient(x)
        den = 1.0 + math.sin(x[1]) ** 2
        return d_sdot * np.array([1.0, math.cos(x[1])]) / den

    return ClfCallbacks(W=w, lfw=lfw, lgw=lgw)


def cartpole_mi(overrides: Optional[Mapping[str, Any]] = None) -> Scenario:
    params = resolve_params(CARTPOLE_MI_PARAMS, overrides)
    theta_max = math.radians(params["theta_max_deg"])
    spec = build_gamma_spec([params["gamma"], params["gamma"]])
    chain = angle_barrier_chain(theta_max, multi_input=True)
    output = angle_output_chain(math.radians(params["theta_target_deg"]))
    k_io = np.asarray(params["k_io"], dtype=float)
    x0 = np.asarray(params["x0"], dtype=float)
    require_safe_start(chain, spec, x0)
    plant = ControlAffinePlant(n=4, m=2, f=_mi_drift, g=_mi_input, name="cartpole_mi", guard=_guard)

    def reference(x: np.ndarray) -> np.ndarray:
        return io_linearize_siso(output, k_io, x, channel=1, m=2)

    wiring = FilterWiring(params["wiring"])
    if wiring == FilterWiring.CLF_CBF_QP:
        clf = cart_clf(params["clf_cross_weight"])
        policy = clf_policy(chain, spec, reference, clf, params["clf_lambda"], params["relax"])
        expected = Classification.BOUNDED
    elif wiring == FilterWiring.MIN_NORM:
        policy = min_norm_policy(chain, spec, reference)
        expected = Classification.DIVERGED
    else:
        policy = passthrough_policy(chain, spec, reference)
        expected = Classification.UNSAFE

    witness = multi_input_obstruction(chain.lglfh(x0), _mi_input(x0))
    return Scenario(
        name="cartpole_mi",
        plant=plant,
        chain=chain,
        spec=spec,
        reference=reference,
        policy=policy,
        wiring=wiring,
        x0=x0,
        expected=expected,
        params=params,
        internal_map=lambda x: np.array([x[0], x[2]]),
        horizon_s=20.0,
        drift_threshold=DEFAULT_DRIFT_THRESHOLD,
        analysis={
            "obstruction_direction": witness.c.tolist() if witness else None,
            "obstruction_field": witness.q.tolist() if witness else None,
            "initial_momentum": cartpole_momentum(x0),
        },
    )
