"""CBF output-chain algebra: decay rates, cascading coordinates and the virtual input."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .constants import NONNEG_TOL
from .errors import InvalidGammaError, NegativeMuError, NonFiniteError
from .numerics import as_matrix, solve_linear

StateFn = Callable[[np.ndarray], float]
RowFn = Callable[[np.ndarray], np.ndarray]

GAMMA_ORDERS = ("given", "min_last")


def expand_gamma_polynomial(gammas: Sequence[float]) -> np.ndarray:
    """Ascending coefficients ``k1..kr`` of ``(s + g1)...(s + gr)`` without the leading 1."""
    rates = np.asarray(gammas, dtype=float).ravel()
    if rates.size < 1:
        raise InvalidGammaError("at least one decay rate is required")
    if not np.all(np.isfinite(rates)) or np.any(rates <= 0):
        raise InvalidGammaError(f"decay rates must be finite and positive, got {rates.tolist()}")
    desc = np.array([1.0])
    for rate in rates:
        desc = np.convolve(desc, [1.0, rate])
    return desc[1:][::-1].copy()


@dataclass(frozen=True, eq=False)
class GammaSpec:
    """Decay rates with the derived constraint algebra.

    ``T`` maps the output derivative vector to cascading coordinates,
    ``A_gamma = T A_k T^-1`` is upper bidiagonal and ``Gamma = -A_gamma^-1 B``
    spans the line of controlled equilibria.
    """

    gammas: np.ndarray
    k: np.ndarray
    T: np.ndarray
    A_k: np.ndarray
    A_gamma: np.ndarray
    B: np.ndarray
    Gamma: np.ndarray

    @property
    def r(self) -> int:
        return int(self.gammas.size)

    @property
    def gamma_min(self) -> float:
        return float(np.min(self.gammas))


def _cascade_transform(rates: np.ndarray) -> np.ndarray:
    r = rates.size
    t = np.zeros((r, r))
    poly = np.array([1.0])  # ascending coefficients of prod_{j<i}(s + g_j)
    for i in range(r):
        t[i, : poly.size] = poly
        if i < r - 1:
            poly = np.convolve(poly, [rates[i], 1.0])
    return t


def build_gamma_spec(gammas: Sequence[float], order: str = "given") -> GammaSpec:
    if order not in GAMMA_ORDERS:
        raise ValueError(f"Unsupported gamma order: {order}")
    rates = np.asarray(gammas, dtype=float).ravel()
    k = expand_gamma_polynomial(rates)
    if order == "min_last":
        idx = int(np.argmin(rates))
        rates = np.concatenate((np.delete(rates, idx), rates[idx : idx + 1]))
    r = rates.size

    a_k = np.zeros((r, r))
    a_k[:-1, 1:] = np.eye(r - 1)
    a_k[-1, :] = -k
    a_gamma = np.diag(-rates) + np.diag(np.ones(r - 1), 1)
    b = np.zeros(r)
    b[-1] = 1.0
    gamma_vec = solve_linear(a_gamma, -b)
    return GammaSpec(
        gammas=rates,
        k=k,
        T=_cascade_transform(rates),
        A_k=a_k,
        A_gamma=a_gamma,
        B=b,
        Gamma=gamma_vec,
    )


@dataclass(frozen=True, eq=False)
class OutputChain:
    """A CBF and its Lie-derivative chain.

    ``lfh[k]`` evaluates ``L_f^k h`` for ``k = 0..r`` and ``lglfh`` returns the
    row ``L_g L_f^{r-1} h`` of length ``m``.
    """

    r: int
    lfh: List[StateFn]
    lglfh: RowFn
    name: str = "h"

    def __post_init__(self):
        if self.r < 1:
            raise ValueError(f"relative degree must be >= 1, got {self.r}")
        if len(self.lfh) != self.r + 1:
            raise ValueError(f"expected {self.r + 1} Lie derivative callbacks, got {len(self.lfh)}")

    def h(self, x) -> float:
        return float(self.lfh[0](x))


@dataclass(frozen=True)
class CascadeState:
    xi: np.ndarray
    phi: np.ndarray
    mu: float


def _check_chain(chain: OutputChain, spec: GammaSpec) -> None:
    if chain.r != spec.r:
        raise ValueError(f"chain relative degree {chain.r} does not match spec r={spec.r}")


def eval_xi(chain: OutputChain, x) -> np.ndarray:
    values = [float(chain.lfh[k](x)) for k in range(chain.r)]
    if not all(math.isfinite(value) for value in values):
        raise NonFiniteError(f"non-finite output derivatives for {chain.name}")
    return np.array(values)


def eval_phi(chain: OutputChain, spec: GammaSpec, x) -> np.ndarray:
    _check_chain(chain, spec)
    return spec.T @ eval_xi(chain, x)


def eval_lglfh(chain: OutputChain, x) -> np.ndarray:
    row = chain.lglfh(x)
    if not (isinstance(row, np.ndarray) and row.ndim == 1 and row.dtype == float):
        row = np.atleast_1d(np.asarray(row, dtype=float)).ravel()
    if not all(map(math.isfinite, row)):
        raise NonFiniteError(f"non-finite decoupling row for {chain.name}")
    return row


def eval_mu_drift(chain: OutputChain, spec: GammaSpec, x, xi: Optional[np.ndarray] = None) -> float:
    """The input-free part ``L_f^r h + k^T xi`` of the virtual input.

    ``xi`` skips re-evaluating the output derivatives when the caller has them.
    """
    _check_chain(chain, spec)
    if xi is None:
        xi = eval_xi(chain, x)
    value = float(chain.lfh[chain.r](x)) + float(spec.k @ xi)
    if not math.isfinite(value):
        raise NonFiniteError(f"non-finite virtual input drift for {chain.name}")
    return value


def eval_mu(chain: OutputChain, spec: GammaSpec, x, u, xi: Optional[np.ndarray] = None) -> float:
    u = np.atleast_1d(np.asarray(u, dtype=float)).ravel()
    row = eval_lglfh(chain, x)
    if row.size != u.size:
        raise ValueError(f"input has {u.size} entries, decoupling row has {row.size}")
    return eval_mu_drift(chain, spec, x, xi) + float(row @ u)


def cascade_state(chain: OutputChain, spec: GammaSpec, x, u) -> CascadeState:
    xi = eval_xi(chain, x)
    return CascadeState(xi=xi, phi=spec.T @ xi, mu=eval_mu(chain, spec, x, u, xi))


def in_S_phi(chain: OutputChain, spec: GammaSpec, x) -> bool:
    return bool(np.all(eval_phi(chain, spec, x) >= -NONNEG_TOL))


def equilibria_line_point(spec: GammaSpec, mu_e: float) -> np.ndarray:
    if mu_e < 0:
        raise NegativeMuError(f"virtual input must be nonnegative, got {mu_e}")
    return spec.Gamma * float(mu_e)


def linear_output_chain(a, b, c, r: int) -> OutputChain:
    """Chain ``c A^k x`` for a linear plant ``x' = A x + B u`` with CBF ``h = c x``."""
    a = as_matrix(a, "A")
    b = as_matrix(b, "B")
    c = np.asarray(c, dtype=float).ravel()
    rows = [c]
    for _ in range(r):
        rows.append(rows[-1] @ a)
    decoupling = rows[r - 1] @ b

    def _lie(row: np.ndarray) -> StateFn:
        return lambda x: float(row @ x)

    return OutputChain(
        r=r,
        lfh=[_lie(row) for row in rows],
        lglfh=lambda x: decoupling,
        name="c x",
    )


@dataclass
class ChainCheck:
    max_rel_error: float
    min_decoupling: float
    errors: List[float] = field(default_factory=list)

    def consistent(self, tol: float = 1e-4) -> bool:
        return self.max_rel_error <= tol

    def regular(self, tol: float = 1e-9) -> bool:
        return self.min_decoupling > tol


def check_chain(chain: OutputChain, drift: Callable[[np.ndarray], np.ndarray], samples, eps: float = 1e-6) -> ChainCheck:
    """Compare ``d/dt L_f^k h`` along the drift field against ``L_f^{k+1} h`` at sample states."""
    errors: List[float] = []
    min_decoupling = np.inf
    for x in samples:
        x = np.asarray(x, dtype=float)
        direction = np.asarray(drift(x), dtype=float)
        for k in range(chain.r):
            ahead = chain.lfh[k](x + eps * direction)
            behind = chain.lfh[k](x - eps * direction)
            estimate = (ahead - behind) / (2.0 * eps)
            exact = float(chain.lfh[k + 1](x))
            errors.append(abs(estimate - exact) / (1.0 + abs(exact)))
        min_decoupling = min(min_decoupling, float(np.max(np.abs(eval_lglfh(chain, x)))))
    return ChainCheck(
        max_rel_error=max(errors) if errors else 0.0,
        min_decoupling=float(min_decoupling),
        errors=errors,
    )
