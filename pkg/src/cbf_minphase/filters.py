"""Safety-filter control laws built on the barrier constraint ``mu(x, u) >= 0``."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .cbf_core import GammaSpec, OutputChain, eval_lglfh, eval_mu, eval_mu_drift, eval_xi
from .constants import (
    DEGENERATE_TOL,
    INTERVENTION_TOL,
    NONNEG_TOL,
    QP_FEAS_TOL,
    QP_ZERO_ROW_TOL,
)
from .errors import (
    DegenerateConstraintError,
    InfeasibleError,
    NegativeMuError,
    SingularMatrixError,
)
from .numerics import solve_linear

logger = logging.getLogger("cbf-minphase.filters")

INEQUALITY = "ineq"
EQUALITY = "eq"
BARRIER_LABEL = "barrier"
CLF_LABEL = "clf"

MAX_QP_INPUTS = 4
MAX_QP_ROWS_PER_KIND = 2


@dataclass(frozen=True, eq=False)
class AffineConstraint:
    """``a^T u >= b`` (inequality) or ``a^T u = b`` (equality)."""

    kind: str
    a: np.ndarray
    b: float
    label: str = ""

    def __post_init__(self):
        if self.kind not in (INEQUALITY, EQUALITY):
            raise ValueError(f"Unsupported constraint kind: {self.kind}")
        object.__setattr__(self, "a", np.atleast_1d(np.asarray(self.a, dtype=float)).ravel())
        object.__setattr__(self, "b", float(self.b))

    def residual(self, u) -> float:
        return float(self.a @ np.asarray(u, dtype=float) - self.b)

    def satisfied(self, u, tol: float = QP_FEAS_TOL) -> bool:
        res = self.residual(u)
        scaled = tol * (1.0 + abs(self.b))
        if self.kind == EQUALITY:
            return abs(res) <= scaled
        return res >= -scaled


@dataclass
class FilterDecision:
    u: np.ndarray
    mu: float
    active: Tuple[str, ...] = ()
    intervened: bool = False
    relaxed_clf: bool = False
    multipliers: Dict[str, float] = field(default_factory=dict)
    xi: Optional[np.ndarray] = None


@dataclass(frozen=True)
class ClfCallbacks:
    """Control Lyapunov function ``W`` with its Lie derivatives."""

    W: Callable[[np.ndarray], float]
    lfw: Callable[[np.ndarray], float]
    lgw: Callable[[np.ndarray], np.ndarray]


def _as_input(u) -> np.ndarray:
    return np.atleast_1d(np.asarray(u, dtype=float)).ravel().copy()


def _intervened(u: np.ndarray, u_ref: np.ndarray) -> bool:
    if u.size == 0:
        return False
    return bool(np.abs(u - u_ref).max() > INTERVENTION_TOL)


def barrier_row(chain: OutputChain, spec: GammaSpec, x, xi: Optional[np.ndarray] = None) -> AffineConstraint:
    """``L_g L_f^{r-1} h u >= -(L_f^r h + k^T xi)``."""
    return AffineConstraint(
        INEQUALITY,
        eval_lglfh(chain, x),
        -eval_mu_drift(chain, spec, x, xi),
        BARRIER_LABEL,
    )


def clf_row(clf: ClfCallbacks, x, lam: float) -> AffineConstraint:
    """``L_f W + L_g W u + lam W <= 0`` written as ``-L_g W u >= L_f W + lam W``."""
    return AffineConstraint(
        INEQUALITY,
        -np.atleast_1d(np.asarray(clf.lgw(x), dtype=float)),
        float(clf.lfw(x)) + lam * float(clf.W(x)),
        CLF_LABEL,
    )


def min_norm_filter(chain: OutputChain, spec: GammaSpec, x, u_ref) -> FilterDecision:
    """Closest input to ``u_ref`` satisfying the barrier constraint."""
    u_ref = _as_input(u_ref)
    xi = eval_xi(chain, x)
    slope = eval_lglfh(chain, x)
    drift = eval_mu_drift(chain, spec, x, xi)
    mu_ref = drift + float(slope @ u_ref)
    norm = math.sqrt(float(slope @ slope))

    if norm < DEGENERATE_TOL:
        if mu_ref >= -NONNEG_TOL:
            return FilterDecision(u=u_ref, mu=mu_ref, xi=xi)
        raise DegenerateConstraintError(
            f"barrier has no input authority (|L_g L_f^(r-1) h| = {norm:.3e}) and mu = {mu_ref:.6g} < 0"
        )

    if slope.size == 1:
        u_sat = -drift / slope[0]
        if slope[0] > 0:
            u = np.array([max(u_sat, u_ref[0])])
        else:
            u = np.array([min(u_sat, u_ref[0])])
    else:
        u = u_ref + max(0.0, -mu_ref) * slope / (norm * norm)

    intervened = _intervened(u, u_ref)
    if not intervened:
        return FilterDecision(u=u_ref, mu=mu_ref, xi=xi)
    return FilterDecision(
        u=u,
        mu=drift + float(slope @ u),
        active=(BARRIER_LABEL,),
        intervened=True,
        xi=xi,
    )


def _validate_problem(u_ref: np.ndarray, constraints: Sequence[AffineConstraint]) -> None:
    if u_ref.size > MAX_QP_INPUTS:
        raise ValueError(f"at most {MAX_QP_INPUTS} inputs supported, got {u_ref.size}")
    for kind in (INEQUALITY, EQUALITY):
        count = sum(1 for row in constraints if row.kind == kind)
        if count > MAX_QP_ROWS_PER_KIND:
            raise ValueError(f"at most {MAX_QP_ROWS_PER_KIND} {kind} rows supported, got {count}")
    for row in constraints:
        if row.a.size != u_ref.size:
            raise ValueError(f"constraint '{row.label}' has {row.a.size} entries, input has {u_ref.size}")


def _drop_vacuous_rows(constraints: Sequence[AffineConstraint]) -> List[AffineConstraint]:
    kept = []
    for row in constraints:
        if np.linalg.norm(row.a) >= QP_ZERO_ROW_TOL:
            kept.append(row)
            continue
        zeros = np.zeros_like(row.a)
        if not row.satisfied(zeros):
            raise InfeasibleError(f"constraint '{row.label}' has zero coefficients and is violated")
    return kept


def _project(u_ref: np.ndarray, rows: Sequence[AffineConstraint]) -> Optional[Tuple[np.ndarray, np.ndarray]]:
    """Minimizer of ``0.5 |u - u_ref|^2`` with every row held tight, or None if dependent."""
    if not rows:
        return u_ref.copy(), np.zeros(0)
    if len(rows) > u_ref.size:
        return None
    a = np.vstack([row.a for row in rows])
    rhs = np.array([row.b for row in rows]) - a @ u_ref
    try:
        lam = solve_linear(a @ a.T, rhs)
    except SingularMatrixError:
        return None
    return u_ref + a.T @ lam, lam


def solve_qp_small(u_ref, constraints: Sequence[AffineConstraint]) -> FilterDecision:
    """Exact ``min 0.5 |u - u_ref|^2`` over a handful of affine rows by active-set enumeration."""
    u_ref = _as_input(u_ref)
    constraints = list(constraints)
    _validate_problem(u_ref, constraints)
    rows = _drop_vacuous_rows(constraints)
    equalities = [row for row in rows if row.kind == EQUALITY]
    inequalities = [row for row in rows if row.kind == INEQUALITY]

    best: Optional[Tuple[float, np.ndarray, Tuple[AffineConstraint, ...], np.ndarray]] = None
    for size in range(len(inequalities) + 1):
        for subset in itertools.combinations(inequalities, size):
            active = tuple(equalities) + subset
            solved = _project(u_ref, active)
            if solved is None:
                continue
            u, lam = solved
            if not all(row.satisfied(u) for row in rows):
                continue
            objective = 0.5 * float(np.sum((u - u_ref) ** 2))
            if best is None or objective < best[0] - 1e-12 * (1.0 + best[0]):
                best = (objective, u, active, lam)

    if best is None:
        labels = ", ".join(row.label or row.kind for row in constraints)
        raise InfeasibleError(f"no feasible input for constraints [{labels}]")

    _, u, active, lam = best
    multipliers = {row.label or f"row{i}": float(value) for i, (row, value) in enumerate(zip(active, lam))}
    barrier = next((row for row in constraints if row.label == BARRIER_LABEL), None)
    mu = barrier.residual(u) if barrier is not None else math.nan
    intervened = _intervened(u, u_ref)
    return FilterDecision(
        u=u if intervened else u_ref,
        mu=mu,
        active=tuple(row.label for row in active),
        intervened=intervened,
        multipliers=multipliers,
    )


def constrained_filter(
    chain: OutputChain,
    spec: GammaSpec,
    x,
    u_ref,
    extra: Sequence[AffineConstraint] = (),
) -> FilterDecision:
    """Barrier row plus caller rows (for example an internal-stability equality)."""
    xi = eval_xi(chain, x)
    decision = solve_qp_small(u_ref, [barrier_row(chain, spec, x, xi), *extra])
    decision.mu = eval_mu(chain, spec, x, decision.u, xi)
    decision.xi = xi
    return decision


def clf_cbf_qp(
    chain: OutputChain,
    spec: GammaSpec,
    x,
    u_ref,
    clf: ClfCallbacks,
    lam: float,
    relax: bool = True,
) -> FilterDecision:
    if lam < 0:
        raise ValueError(f"CLF rate must be nonnegative, got {lam}")
    xi = eval_xi(chain, x)
    barrier = barrier_row(chain, spec, x, xi)
    try:
        decision = solve_qp_small(u_ref, [barrier, clf_row(clf, x, lam)])
    except InfeasibleError:
        if not relax:
            raise
        logger.debug("CLF row conflicts with the barrier row, solving barrier-only")
        decision = solve_qp_small(u_ref, [barrier])
        decision.relaxed_clf = True
    decision.mu = eval_mu(chain, spec, x, decision.u, xi)
    decision.xi = xi
    return decision


def track_kappa_ps(
    chain: OutputChain,
    spec: GammaSpec,
    x,
    kappa_value: float,
    u_ref=None,
    channel: Optional[int] = None,
) -> FilterDecision:
    """Input that makes the virtual input equal ``kappa_value`` exactly."""
    if kappa_value < 0:
        raise NegativeMuError(f"tracked virtual input must be nonnegative, got {kappa_value}")
    slope = eval_lglfh(chain, x)
    if channel is None:
        if slope.size != 1:
            raise ValueError("multi-input plants need a designated actuation channel")
        channel = 0
    base = np.zeros(slope.size) if u_ref is None else _as_input(u_ref)
    authority = slope[channel]
    if abs(authority) < DEGENERATE_TOL:
        raise DegenerateConstraintError(
            f"channel {channel} has no barrier authority (|slope| = {abs(authority):.3e})"
        )
    xi = eval_xi(chain, x)
    u = base.copy()
    others = float(slope @ base) - authority * base[channel]
    u[channel] = (kappa_value - eval_mu_drift(chain, spec, x, xi) - others) / authority
    return FilterDecision(
        u=u,
        mu=float(kappa_value),
        active=(BARRIER_LABEL,) if kappa_value == 0 else (),
        intervened=_intervened(u, base),
        xi=xi,
    )


def unfiltered(chain: OutputChain, spec: GammaSpec, x, u_ref) -> FilterDecision:
    """Pass the reference through untouched, recording its virtual input."""
    u_ref = _as_input(u_ref)
    xi = eval_xi(chain, x)
    return FilterDecision(u=u_ref, mu=eval_mu(chain, spec, x, u_ref, xi), xi=xi)
