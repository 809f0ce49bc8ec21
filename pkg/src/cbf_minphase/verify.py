"""Seeded randomized property suites behind ``cbf-minphase verify``."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Dict, List, Optional

import numpy as np
from scipy.optimize import minimize

from .cbf_core import build_gamma_spec
from .constants import MinPhaseVerdict
from .errors import CbfMinPhaseError
from .filters import EQUALITY, INEQUALITY, AffineConstraint, solve_qp_small
from .internal_analysis import extract_internal_linear
from .numerics import is_hurwitz_matrix, routh_hurwitz, solve_lyapunov
from .scenarios import build_scenario
from .simulation import error_signal, fit_decay_rate, simulate

logger = logging.getLogger("cbf-minphase.verify")

Hurwitz = Callable[[np.ndarray], bool]

MAX_FAILURES = 5
GAMMA_ALGEBRA_CASES = 200
GAMMA_NORM_CASES = 1000
LYAPUNOV_CASES = 200
ROUTH_CASES = 500
QP_CASES = 500
INTERNAL_CASES = 200


@dataclass
class SuiteResult:
    name: str
    passed: bool
    cases: int
    failures: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


class _Collector:
    def __init__(self, name: str):
        self.name = name
        self.cases = 0
        self.failed = 0
        self.failures: List[str] = []

    def check(self, ok: bool, describe: Callable[[], str]) -> None:
        self.cases += 1
        if ok:
            return
        self.failed += 1
        if len(self.failures) < MAX_FAILURES:
            self.failures.append(describe())

    def result(self) -> SuiteResult:
        return SuiteResult(self.name, self.failed == 0 and self.cases > 0, self.cases, self.failures)


def negated_routh(coeffs) -> bool:
    """Deliberately wrong Hurwitz test for mutation checks of the suites."""
    return not routh_hurwitz(coeffs)


def _fmt(values) -> str:
    return str([float(f"{v:.6g}") for v in np.ravel(values)])


def _random_rates(rng: np.random.Generator, low: float, high: float, max_r: int) -> np.ndarray:
    r = int(rng.integers(1, max_r + 1))
    return rng.uniform(low, high, size=r)


def gamma_algebra(rng: np.random.Generator, hurwitz: Optional[Hurwitz] = None) -> SuiteResult:
    suite = _Collector("gamma_algebra")
    for _ in range(GAMMA_ALGEBRA_CASES):
        rates = _random_rates(rng, 0.5, 10.0, 4)
        spec = build_gamma_spec(rates)
        closed_form = np.array([np.prod(1.0 / rates[i:]) for i in range(rates.size)])
        similar = spec.T @ spec.A_k - spec.A_gamma @ spec.T
        ok = (
            np.allclose(spec.Gamma, closed_form, rtol=1e-9, atol=1e-12)
            and np.max(np.abs(similar)) <= 1e-9 * (1.0 + np.max(np.abs(spec.A_k)))
            and is_hurwitz_matrix(spec.A_gamma, hurwitz)
            and is_hurwitz_matrix(spec.A_k, hurwitz)
        )
        suite.check(ok, lambda: f"gammas={_fmt(rates)} Gamma={_fmt(spec.Gamma)}")
    return suite.result()


def gamma_norm_bound(rng: np.random.Generator, hurwitz: Optional[Hurwitz] = None) -> SuiteResult:
    """``|Gamma|_2 <= sqrt(2) / gamma_min`` whenever ``gamma_min >= sqrt(2)``."""
    suite = _Collector("gamma_norm_bound")
    for _ in range(GAMMA_NORM_CASES):
        rates = _random_rates(rng, math.sqrt(2.0), 10.0, 5)
        spec = build_gamma_spec(rates)
        norm = float(np.linalg.norm(spec.Gamma))
        bound = math.sqrt(2.0) / spec.gamma_min
        ok = norm <= bound * (1.0 + 1e-12) and is_hurwitz_matrix(spec.A_gamma, hurwitz)
        suite.check(ok, lambda: f"gammas={_fmt(rates)} norm={norm:.6g} bound={bound:.6g}")
    return suite.result()


def lyapunov_residual(rng: np.random.Generator, hurwitz: Optional[Hurwitz] = None) -> SuiteResult:
    suite = _Collector("lyapunov_residual")
    for _ in range(LYAPUNOV_CASES):
        rates = _random_rates(rng, 0.5, 10.0, 4)
        a_gamma = build_gamma_spec(rates).A_gamma
        ok = is_hurwitz_matrix(a_gamma, hurwitz)
        residual = math.inf
        if ok:
            p = solve_lyapunov(a_gamma)
            residual = float(np.max(np.abs(a_gamma.T @ p + p @ a_gamma + np.eye(rates.size))))
            ok = residual <= 1e-8 and float(np.min(np.linalg.eigvalsh(p))) > 0.0
        suite.check(ok, lambda: f"gammas={_fmt(rates)} residual={residual:.3g}")
    return suite.result()


def routh_agreement(rng: np.random.Generator, hurwitz: Optional[Hurwitz] = None) -> SuiteResult:
    """Routh verdict against the sign of the root real parts."""
    test = hurwitz or routh_hurwitz
    suite = _Collector("routh_agreement")
    for _ in range(ROUTH_CASES):
        degree = int(rng.integers(1, 7))
        roots: List[complex] = []
        while len(roots) < degree:
            real = rng.uniform(0.1, 3.0) * rng.choice([-1.0, 1.0], p=[0.7, 0.3])
            if degree - len(roots) >= 2 and rng.random() < 0.5:
                imag = rng.uniform(0.1, 3.0)
                roots.extend([complex(real, imag), complex(real, -imag)])
            else:
                roots.append(complex(real, 0.0))
        desc = np.real(np.poly(roots))
        coeffs = desc[::-1][:-1]
        expected = bool(np.all(np.real(roots) < 0.0))
        got = bool(test(coeffs))
        suite.check(got == expected, lambda: f"coeffs={_fmt(coeffs)} routh={got} roots_stable={expected}")
    return suite.result()


def _qp_instance(rng: np.random.Generator):
    m = int(rng.integers(1, 5))
    u_feasible = rng.normal(size=m)
    u_ref = rng.normal(scale=2.0, size=m)
    rows = []
    for i in range(int(rng.integers(1, 3))):
        a = rng.normal(size=m)
        rows.append(AffineConstraint(INEQUALITY, a, float(a @ u_feasible) - rng.uniform(0.0, 1.0), f"ineq{i}"))
    if m > 1 and rng.random() < 0.5:
        a = rng.normal(size=m)
        rows.append(AffineConstraint(EQUALITY, a, float(a @ u_feasible), "eq0"))
    return u_ref, rows


def _qp_oracle(u_ref: np.ndarray, rows: List[AffineConstraint]):
    constraints = [
        {
            "type": "eq" if row.kind == EQUALITY else "ineq",
            "fun": (lambda u, row=row: row.a @ u - row.b),
            "jac": (lambda u, row=row: row.a),
        }
        for row in rows
    ]
    return minimize(
        lambda u: 0.5 * float(np.sum((u - u_ref) ** 2)),
        u_ref.copy(),
        jac=lambda u: u - u_ref,
        constraints=constraints,
        method="SLSQP",
        options={"ftol": 1e-14, "maxiter": 500},
    )


def qp_kkt(rng: np.random.Generator, hurwitz: Optional[Hurwitz] = None) -> SuiteResult:
    """KKT conditions of the active-set solution plus an SLSQP cross-check."""
    suite = _Collector("qp_kkt")
    for _ in range(QP_CASES):
        u_ref, rows = _qp_instance(rng)
        try:
            decision = solve_qp_small(u_ref, rows)
        except CbfMinPhaseError as exc:
            suite.check(False, lambda: f"u_ref={_fmt(u_ref)} raised {type(exc).__name__}: {exc}")
            continue
        u = decision.u
        lam = decision.multipliers
        stationarity = u - u_ref - sum((lam.get(row.label, 0.0) * row.a for row in rows), np.zeros_like(u))
        dual_ok = all(lam.get(row.label, 0.0) >= -1e-8 for row in rows if row.kind == INEQUALITY)
        primal_ok = all(row.satisfied(u) for row in rows)
        objective = 0.5 * float(np.sum((u - u_ref) ** 2))
        oracle = _qp_oracle(u_ref, rows)
        oracle_ok = (not oracle.success) or objective <= float(oracle.fun) + 1e-6 * (1.0 + abs(float(oracle.fun)))
        ok = float(np.max(np.abs(stationarity))) <= 1e-8 * (1.0 + float(np.max(np.abs(u_ref)))) and dual_ok
        ok = ok and primal_ok and oracle_ok
        suite.check(ok, lambda: f"u_ref={_fmt(u_ref)} u={_fmt(u)} objective={objective:.6g} oracle={oracle.fun:.6g}")
    return suite.result()


def _random_normal_form(rng: np.random.Generator):
    """Single-input plant built from a known internal block, in scrambled coordinates."""
    r = int(rng.integers(1, 3))
    q = int(rng.integers(1, 4))
    n = r + q
    eigenvalues = rng.uniform(0.2, 3.0, size=q) * rng.choice([-1.0, 1.0], size=q)
    basis, _ = np.linalg.qr(rng.normal(size=(q, q)))
    a_eta = basis @ np.diag(eigenvalues) @ basis.T

    a_z = np.zeros((n, n))
    a_z[: r - 1, 1:r] = np.eye(r - 1)
    a_z[r - 1, :] = rng.normal(size=n)
    a_z[r:, :r] = rng.normal(size=(q, r))
    a_z[r:, r:] = a_eta
    b_z = np.zeros((n, 1))
    b_z[r - 1, 0] = 1.0
    c_z = np.zeros(n)
    c_z[0] = 1.0

    rotation, _ = np.linalg.qr(rng.normal(size=(n, n)))
    s = rotation @ np.diag(rng.uniform(0.5, 2.0, size=n))
    s_inv = np.linalg.inv(s)
    return s_inv @ a_z @ s, s_inv @ b_z, c_z @ s, r, bool(np.all(eigenvalues < 0.0))


def internal_equivalence(rng: np.random.Generator, hurwitz: Optional[Hurwitz] = None) -> SuiteResult:
    """Extracted zero-dynamics verdict against the known internal block."""
    suite = _Collector("internal_equivalence")
    for _ in range(INTERNAL_CASES):
        a, b, c, r, stable = _random_normal_form(rng)
        spec = build_gamma_spec(rng.uniform(0.5, 5.0, size=r))
        try:
            zd = extract_internal_linear(a, b, c, spec, hurwitz=hurwitz)
        except CbfMinPhaseError as exc:
            suite.check(False, lambda: f"r={r} n={a.shape[0]} raised {type(exc).__name__}: {exc}")
            continue
        got = zd.min_phase == MinPhaseVerdict.MINIMUM_PHASE
        suite.check(got == stable, lambda: f"r={r} n={a.shape[0]} extracted={zd.min_phase.value} stable={stable}")
    return suite.result()


def error_envelope(rng: np.random.Generator, hurwitz: Optional[Hurwitz] = None) -> SuiteResult:
    """Constant virtual input on the minimum-phase linear plant: error decays at least at 0.9 gamma_min."""
    suite = _Collector("error_envelope")
    scenario = build_scenario("linear_si", {"a": -1.0, "wiring": "kappa_ps"})
    traj = simulate(
        scenario.plant,
        scenario.policy,
        scenario.x0,
        2e-4,
        4.0,
        chain=scenario.chain,
        spec=scenario.spec,
        internal_map=scenario.internal_map,
    )
    rate = fit_decay_rate(traj.times, error_signal(traj, scenario.spec), (0.5, 4.0))
    floor = 0.9 * scenario.spec.gamma_min
    suite.check(rate >= floor, lambda: f"rate={rate:.6g} floor={floor:.6g}")
    return suite.result()


def delta_phi_bounded(rng: np.random.Generator, hurwitz: Optional[Hurwitz] = None) -> SuiteResult:
    """Tracking the cart-pole angle law keeps the error finite and non-growing."""
    suite = _Collector("delta_phi_bounded")
    scenario = build_scenario("cartpole_si", {"gamma": 10.0, "wiring": "kappa_ps"})
    traj = simulate(
        scenario.plant,
        scenario.policy,
        scenario.x0,
        scenario.dt_s,
        20.0,
        chain=scenario.chain,
        spec=scenario.spec,
        internal_map=scenario.internal_map,
    )
    norms = np.linalg.norm(error_signal(traj, scenario.spec), axis=1)
    half = traj.times[-1] / 2.0
    head = float(np.max(norms[traj.times <= half]))
    tail = float(np.max(norms[traj.times > half]))
    ok = not traj.aborted and bool(np.all(np.isfinite(norms))) and tail <= head + 1e-9
    suite.check(ok, lambda: f"sup_head={head:.6g} sup_tail={tail:.6g} stop={traj.stop_reason}")
    return suite.result()


SUITES = (
    gamma_algebra,
    gamma_norm_bound,
    lyapunov_residual,
    routh_agreement,
    qp_kkt,
    internal_equivalence,
    error_envelope,
    delta_phi_bounded,
)


def run_suites(seed: int = 0, hurwitz: Optional[Hurwitz] = None) -> List[SuiteResult]:
    streams = np.random.SeedSequence(seed).spawn(len(SUITES))
    results = []
    for suite, stream in zip(SUITES, streams):
        result = suite(np.random.default_rng(stream), hurwitz)
        level = logging.INFO if result.passed else logging.WARNING
        logger.log(level, f"{result.name}: {'pass' if result.passed else 'FAIL'} ({result.cases} cases)")
        results.append(result)
    return results


def build_verify_report(seed: int, results: List[SuiteResult]) -> Dict[str, Any]:
    return {
        "seed": seed,
        "passed": all(result.passed for result in results),
        "suites": [result.to_dict() for result in results],
    }
