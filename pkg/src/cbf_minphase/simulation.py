"""Fixed-step closed-loop simulation, signal recording and trajectory classification."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from .cbf_core import GammaSpec, OutputChain, eval_xi
from .constants import (
    DEFAULT_BLOWUP,
    SATURATION_MU_TOL,
    SETTLE_WINDOW_S,
    Classification,
)
from .errors import CbfMinPhaseError, NonFiniteError, NonFiniteStateError, SimulationError
from .filters import FilterDecision
from .numerics import rk4_linear_propagator, rk4_step

logger = logging.getLogger("cbf-minphase.simulation")

Policy = Callable[[np.ndarray], FilterDecision]


@dataclass(frozen=True, eq=False)
class ControlAffinePlant:
    """``x' = f(x) + g(x) u`` with an optional guard raising NonFiniteError.

    ``linear = (A, B)`` marks a time-invariant linear plant; the simulator
    then steps it with the exact RK4 propagator instead of four field calls.
    """

    n: int
    m: int
    f: Callable[[np.ndarray], np.ndarray]
    g: Callable[[np.ndarray], np.ndarray]
    name: str = "plant"
    guard: Optional[Callable[[np.ndarray], None]] = None
    linear: Optional[Tuple[np.ndarray, np.ndarray]] = None

    def dynamics(self, x, u) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.guard is not None:
            self.guard(x)
        u = np.atleast_1d(np.asarray(u, dtype=float))
        return np.asarray(self.f(x), dtype=float) + np.asarray(self.g(x), dtype=float).reshape(self.n, self.m) @ u


@dataclass(eq=False)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    mu: np.ndarray
    h: np.ndarray
    xi: np.ndarray
    phi: np.ndarray
    eta: np.ndarray
    delta_phi: np.ndarray
    intervened: np.ndarray
    relaxed: np.ndarray
    dt: float
    stop_reason: Optional[str] = None

    def __len__(self) -> int:
        return int(self.times.size)

    @property
    def aborted(self) -> bool:
        return self.stop_reason is not None and self.stop_reason.startswith("aborted")


@dataclass
class Verdict:
    classification: Classification
    min_h: float
    max_state_norm: float
    saturation_fraction: float
    final_state: np.ndarray
    divergence_time: Optional[float]
    divergence_reason: Optional[str] = None
    drift: bool = False
    max_abs_eta: Optional[float] = None
    settled: Optional[bool] = None
    min_phi: Optional[float] = None
    max_abs_eta1: Optional[float] = None
    eta1_drift: bool = False
    eta1_drift_time: Optional[float] = None


Stepper = Callable[[np.ndarray, np.ndarray, float], np.ndarray]


def _stepper(plant: ControlAffinePlant, x0: np.ndarray, dt: float) -> Stepper:
    """Single-step map ``(x, u, t) -> x_next`` for a zero-order-held input."""
    if plant.linear is not None:
        prop_x, prop_u = rk4_linear_propagator(plant.linear[0], plant.linear[1], dt)

        def linear_step(x: np.ndarray, u: np.ndarray, t: float) -> np.ndarray:
            nxt = prop_x @ x + prop_u @ u
            if not np.all(np.isfinite(nxt)):
                raise NonFiniteStateError(f"non-finite state after the step from t={t:.6g}")
            return nxt

        return linear_step

    f, g, guard = plant.f, plant.g, plant.guard
    try:
        if guard is not None:
            guard(x0)
        f0, g0 = f(x0), g(x0)
    except NonFiniteError:
        f0 = g0 = None
    lean = (
        isinstance(f0, np.ndarray)
        and isinstance(g0, np.ndarray)
        and f0.shape == (plant.n,)
        and g0.shape == (plant.n, plant.m)
    )
    if not lean:
        logger.debug(f"{plant.name} returns loosely shaped f/g, using the coercing field")
        return lambda x, u, t: rk4_step(lambda state, _t: plant.dynamics(state, u), x, t, dt)

    if guard is None:
        return lambda x, u, t: rk4_step(lambda state, _t: f(state) + g(state) @ u, x, t, dt)

    def guarded(state: np.ndarray, u: np.ndarray) -> np.ndarray:
        guard(state)
        return f(state) + g(state) @ u

    return lambda x, u, t: rk4_step(lambda state, _t: guarded(state, u), x, t, dt)


def simulate(
    plant: ControlAffinePlant,
    policy: Policy,
    x0,
    dt: float,
    horizon: float,
    *,
    chain: Optional[OutputChain] = None,
    spec: Optional[GammaSpec] = None,
    internal_map: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    blowup: float = DEFAULT_BLOWUP,
) -> Trajectory:
    """Integrate under a zero-order-hold policy evaluated once per step.

    Samples ``t_0 .. t_N`` are recorded; the policy is also evaluated at the
    last sample so every row carries an input and virtual input.  Output
    derivatives the policy already evaluated (``FilterDecision.xi``) are
    reused for the recorded ``xi``.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    x = np.asarray(x0, dtype=float).copy()
    if x.size != plant.n or not np.all(np.isfinite(x)):
        raise ValueError(f"x0 must be {plant.n} finite values")
    if (chain is None) != (spec is None):
        raise ValueError("chain and spec must be given together")

    steps = int(round(horizon / dt))
    r = spec.r if spec is not None else 0
    states = np.empty((steps + 1, plant.n))
    inputs = np.empty((steps + 1, plant.m))
    mu = np.empty(steps + 1)
    xi = np.empty((steps + 1, r))
    intervened = np.zeros(steps + 1, dtype=bool)
    relaxed = np.zeros(steps + 1, dtype=bool)
    etas = []
    stop_reason: Optional[str] = None
    step = _stepper(plant, x, dt)
    logger.info(f"simulating {plant.name}: {steps} steps of {dt:g} s")

    count = 0
    for k in range(steps + 1):
        t = k * dt
        try:
            decision = policy(x)
        except CbfMinPhaseError as exc:
            raise SimulationError(k, exc) from exc
        u = np.atleast_1d(np.asarray(decision.u, dtype=float))
        states[k] = x
        inputs[k] = u
        mu[k] = decision.mu
        intervened[k] = decision.intervened
        relaxed[k] = decision.relaxed_clf
        if chain is not None:
            xi[k] = decision.xi if decision.xi is not None and decision.xi.size == r else eval_xi(chain, x)
        if internal_map is not None:
            etas.append(internal_map(x))
        count = k + 1

        if k == steps:
            break
        if np.abs(x).max() > blowup:
            stop_reason = "blowup"
            logger.info(f"state norm exceeded {blowup:g} at t={t:.3f} s, stopping early")
            break
        try:
            x = step(x, u, t)
        except NonFiniteError as exc:
            stop_reason = f"aborted: {exc}"
            logger.warning(f"{plant.name} aborted at t={t:.3f} s: {exc}")
            break

    xi_arr = xi[:count].copy()
    mu_arr = mu[:count].copy()
    phi_arr = xi_arr @ spec.T.T if spec is not None else np.zeros((count, 0))
    eta_arr = np.array(etas, dtype=float).reshape(count, -1) if etas else np.zeros((count, 0))
    gamma_vec = spec.Gamma if spec is not None else np.zeros(0)
    return Trajectory(
        times=np.arange(count, dtype=float) * dt,
        states=states[:count].copy(),
        inputs=inputs[:count].copy(),
        mu=mu_arr,
        h=xi_arr[:, 0].copy() if r else np.full(count, np.nan),
        xi=xi_arr,
        phi=phi_arr,
        eta=eta_arr,
        delta_phi=phi_arr - np.outer(mu_arr, gamma_vec),
        intervened=intervened[:count].copy(),
        relaxed=relaxed[:count].copy(),
        dt=float(dt),
        stop_reason=stop_reason,
    )


def _first_time(times: np.ndarray, mask: np.ndarray) -> Optional[float]:
    hits = np.flatnonzero(mask)
    return float(times[hits[0]]) if hits.size else None


def classify(
    traj: Trajectory,
    safety_tol: float,
    blowup: float,
    settle_tol: float,
    drift_threshold: Optional[float] = None,
) -> Verdict:
    """Unsafe > Diverged > Incomplete > Bounded."""
    if len(traj) == 0:
        raise ValueError("cannot classify an empty trajectory")
    norms = np.max(np.abs(traj.states), axis=1)
    finite_h = traj.h[np.isfinite(traj.h)]
    min_h = float(np.min(finite_h)) if finite_h.size else float("nan")
    max_norm = float(np.max(norms))
    saturation = float(np.mean(traj.mu <= SATURATION_MU_TOL))

    max_abs_eta = max_abs_eta1 = None
    drift = eta1_drift = False
    drift_time = eta1_drift_time = None
    if traj.eta.shape[1] > 0:
        eta_norms = np.max(np.abs(traj.eta), axis=1)
        eta1 = np.abs(traj.eta[:, 0])
        max_abs_eta = float(np.max(eta_norms))
        max_abs_eta1 = float(np.max(eta1))
        if drift_threshold is not None:
            drift = bool(max_abs_eta > drift_threshold)
            drift_time = _first_time(traj.times, eta_norms > drift_threshold)
            # reported only; the classification keys on the sup norm
            eta1_drift = bool(max_abs_eta1 > drift_threshold)
            eta1_drift_time = _first_time(traj.times, eta1 > drift_threshold)

    blowup_time = _first_time(traj.times, norms > blowup)
    if blowup_time is not None:
        divergence_time, reason = blowup_time, "blowup"
    elif drift:
        divergence_time, reason = drift_time, "drift"
    else:
        divergence_time, reason = None, None

    if finite_h.size and min_h < -safety_tol:
        classification = Classification.UNSAFE
    elif reason is not None:
        classification = Classification.DIVERGED
    elif traj.aborted:
        classification = Classification.INCOMPLETE
    else:
        classification = Classification.BOUNDED

    settled = None
    if classification == Classification.BOUNDED:
        lag = int(round(SETTLE_WINDOW_S / traj.dt))
        if len(traj) > lag:
            settled = bool(np.max(np.abs(traj.states[-1] - traj.states[-1 - lag])) < settle_tol)

    return Verdict(
        classification=classification,
        min_h=min_h,
        max_state_norm=max_norm,
        saturation_fraction=saturation,
        final_state=traj.states[-1].copy(),
        divergence_time=divergence_time,
        divergence_reason=reason,
        drift=drift,
        max_abs_eta=max_abs_eta,
        settled=settled,
        min_phi=float(np.min(traj.phi)) if traj.phi.size else None,
        max_abs_eta1=max_abs_eta1,
        eta1_drift=eta1_drift,
        eta1_drift_time=eta1_drift_time,
    )


def error_signal(traj: Trajectory, spec: GammaSpec) -> np.ndarray:
    """``phi(t) - Gamma mu(t)`` per sample."""
    if traj.phi.shape[1] != spec.r:
        raise ValueError("trajectory does not carry cascading coordinates for this spec")
    return traj.phi - np.outer(traj.mu, spec.Gamma)


def fit_decay_rate(times, values, window: Tuple[float, float], floor: float = 1e-12) -> float:
    """Exponential rate from a least-squares fit of ``log |value|`` over ``window``."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    norms = np.linalg.norm(values.reshape(times.size, -1), axis=1)
    mask = (times >= window[0]) & (times <= window[1]) & (norms > floor)
    if np.count_nonzero(mask) < 2:
        raise ValueError("not enough samples above the floor to fit a decay rate")
    slope, _ = np.polyfit(times[mask], np.log(norms[mask]), 1)
    return float(-slope)
