"""Small dense linear algebra and integration kernels (n <= 6 throughout)."""

from __future__ import annotations

import logging
import warnings
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.linalg import LinAlgWarning, lu_factor, lu_solve
from scipy.signal import place_poles

from .constants import LQR_MAX_ITER, LQR_TOL, PIVOT_TOL
from .errors import (
    NoConvergenceError,
    NonFiniteStateError,
    NotStabilizingError,
    SingularMatrixError,
)

logger = logging.getLogger("cbf-minphase.numerics")

VectorField = Callable[[np.ndarray, float], np.ndarray]


def as_matrix(values, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite 2-D float array."""
    arr = np.atleast_2d(np.asarray(values, dtype=float))
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


def _require_square(a: np.ndarray, name: str) -> int:
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    return a.shape[0]


def solve_linear(a, b) -> np.ndarray:
    """Solve ``a @ x = b`` by LU with partial pivoting.

    ``b`` may be a vector or a matrix of right-hand sides.
    """
    a = as_matrix(a, "A")
    n = _require_square(a, "A")
    b = np.asarray(b, dtype=float)
    if b.shape[0] != n:
        raise ValueError(f"right-hand side has {b.shape[0]} rows, expected {n}")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LinAlgWarning)
        lu, piv = lu_factor(a)
    pivots = np.abs(np.diag(lu))
    if pivots.min() < PIVOT_TOL:
        raise SingularMatrixError(f"pivot magnitude {pivots.min():.3e} below {PIVOT_TOL:g}")
    return lu_solve((lu, piv), b)


def solve_lyapunov(a, q=None) -> np.ndarray:
    """Solve ``A^T P + P A = -Q`` by vectorization (``Q = I`` when omitted)."""
    a = as_matrix(a, "A")
    n = _require_square(a, "A")
    q = np.eye(n) if q is None else as_matrix(q, "Q")
    if q.shape != (n, n):
        raise ValueError(f"Q must be {n}x{n}, got {q.shape}")
    eye = np.eye(n)
    # row-major vec: vec(A^T P) = (A^T kron I) vec(P), vec(P A) = (I kron A^T) vec(P)
    system = np.kron(a.T, eye) + np.kron(eye, a.T)
    p = solve_linear(system, -q.reshape(-1)).reshape(n, n)
    return 0.5 * (p + p.T)


def char_poly(a) -> np.ndarray:
    """Monic characteristic polynomial coefficients ``c0..c_{n-1}`` (Faddeev-LeVerrier)."""
    a = as_matrix(a, "A")
    n = _require_square(a, "A")
    coeffs = np.zeros(n + 1)
    coeffs[n] = 1.0
    m = np.zeros((n, n))
    for k in range(1, n + 1):
        m = a @ m + coeffs[n - k + 1] * np.eye(n)
        coeffs[n - k] = -np.trace(a @ m) / k
    return coeffs[:n]


def routh_array(coeffs: Sequence[float]) -> np.ndarray:
    """Routh table of the monic polynomial with ascending coefficients ``c0..c_{d-1}``.

    Construction stops early at a zero pivot; the truncated table is returned.
    """
    c = np.asarray(coeffs, dtype=float)
    if c.ndim != 1 or c.size < 1:
        raise ValueError("polynomial degree must be at least 1")
    desc = np.concatenate(([1.0], c[::-1]))
    degree = desc.size - 1
    width = (degree + 2) // 2
    table = np.zeros((degree + 1, width))
    even, odd = desc[0::2], desc[1::2]
    table[0, : even.size] = even
    table[1, : odd.size] = odd
    scale = np.max(np.abs(desc))
    for i in range(2, degree + 1):
        pivot = table[i - 1, 0]
        if abs(pivot) <= 1e-14 * scale:
            return table[:i]
        for j in range(width - 1):
            table[i, j] = (pivot * table[i - 2, j + 1] - table[i - 2, 0] * table[i - 1, j + 1]) / pivot
    return table


def routh_hurwitz(coeffs: Sequence[float]) -> bool:
    """True iff every root of the monic polynomial has strictly negative real part."""
    c = np.asarray(coeffs, dtype=float)
    if c.size < 1 or not np.all(np.isfinite(c)):
        return False
    table = routh_array(c)
    if table.shape[0] < c.size + 1:
        return False
    scale = max(1.0, float(np.max(np.abs(c))))
    return bool(np.all(table[:, 0] > 1e-14 * scale))


def is_hurwitz_matrix(a, hurwitz: Optional[Callable[[np.ndarray], bool]] = None) -> bool:
    test = hurwitz or routh_hurwitz
    return bool(test(char_poly(a)))


def pole_placement_gain(a, b, poles: Sequence[float]) -> np.ndarray:
    """Stabilizing state-feedback gain with ``eig(A - B K) = poles``."""
    a = as_matrix(a, "A")
    b = as_matrix(b, "B")
    if b.shape[0] != a.shape[0]:
        b = b.T
    result = place_poles(a, b, np.asarray(poles, dtype=float))
    return np.asarray(result.gain_matrix, dtype=float)


def lqr_gain(a, b, q, r, k0) -> np.ndarray:
    """Continuous-time LQR gain by Kleinman-Newton iteration from a stabilizing ``k0``."""
    a = as_matrix(a, "A")
    b = as_matrix(b, "B")
    if b.shape[0] != a.shape[0]:
        b = b.T
    q = as_matrix(q, "Q")
    r = as_matrix(r, "R")
    gain = as_matrix(k0, "K0")
    if gain.shape != (b.shape[1], a.shape[0]):
        raise ValueError(f"K0 must have shape {(b.shape[1], a.shape[0])}, got {gain.shape}")

    if not is_hurwitz_matrix(a - b @ gain):
        raise NotStabilizingError("A - B K0 is not Hurwitz")

    for iteration in range(1, LQR_MAX_ITER + 1):
        closed = a - b @ gain
        p = solve_lyapunov(closed, q + gain.T @ r @ gain)
        updated = solve_linear(r, b.T @ p)
        step = float(np.max(np.abs(updated - gain)))
        gain = updated
        if step <= LQR_TOL:
            logger.debug(f"Kleinman iteration converged after {iteration} steps")
            if not is_hurwitz_matrix(a - b @ gain):
                raise NotStabilizingError("converged gain does not stabilize A - B K")
            return gain
    raise NoConvergenceError(f"LQR iteration did not converge in {LQR_MAX_ITER} steps")


def rk4_step(f: VectorField, x, t: float, dt: float) -> np.ndarray:
    """One classical fourth-order Runge-Kutta step of ``x' = f(x, t)``."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    x = np.asarray(x, dtype=float)
    half = 0.5 * dt
    k1 = f(x, t)
    k2 = f(x + half * k1, t + half)
    k3 = f(x + half * k2, t + half)
    k4 = f(x + dt * k3, t + dt)
    nxt = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    # a non-finite stage always poisons the combined update
    if not np.all(np.isfinite(nxt)):
        raise NonFiniteStateError(f"non-finite state after the step from t={t:.6g}")
    return nxt


def rk4_linear_propagator(a, b, dt: float):
    """Matrices ``(M, N)`` such that one RK4 step of ``x' = A x + B u`` is ``M x + N u``."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    a = as_matrix(a, "A")
    b = as_matrix(b, "B")
    n = _require_square(a, "A")
    ha = dt * a
    series = np.eye(n) + ha / 2.0 + ha @ ha / 6.0 + ha @ ha @ ha / 24.0
    return np.eye(n) + dt * series @ a, dt * series @ b
