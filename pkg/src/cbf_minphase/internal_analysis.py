"""Internal and zero-dynamics analysis: linear extraction, local checks, obstruction witness."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field as dataclass_field
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy.linalg import null_space

from .cbf_core import GammaSpec, OutputChain, eval_lglfh, eval_xi
from .constants import (
    FD_REL_STEP,
    RANK_TOL,
    MinPhaseVerdict,
    SufficiencyVerdict,
)
from .errors import (
    DependentColumnsError,
    InvalidCertificateError,
    NoRelativeDegreeError,
    NonFiniteError,
    SingularCoordinatesError,
)
from .filters import ClfCallbacks
from .numerics import as_matrix, char_poly, is_hurwitz_matrix, routh_hurwitz, solve_linear, solve_lyapunov

logger = logging.getLogger("cbf-minphase.internal_analysis")

InternalField = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _verdict(is_stable: bool) -> MinPhaseVerdict:
    return MinPhaseVerdict.MINIMUM_PHASE if is_stable else MinPhaseVerdict.NON_MINIMUM_PHASE


def _rank(rows: np.ndarray) -> int:
    if rows.size == 0:
        return 0
    sv = np.linalg.svd(rows, compute_uv=False)
    return int(np.sum(sv > RANK_TOL * max(1.0, sv[0])))


def linear_relative_degree(a, b, c) -> int:
    a = as_matrix(a, "A")
    b = as_matrix(b, "B")
    row = np.asarray(c, dtype=float).ravel()
    for k in range(a.shape[0]):
        if np.max(np.abs(row @ b)) > RANK_TOL:
            return k + 1
        row = row @ a
    raise NoRelativeDegreeError("c A^k B vanishes for every k < n")


@dataclass(frozen=True, eq=False)
class ZeroDynamicsLinear:
    """Internal dynamics ``eta' = A_eta eta + B_eta phi`` with ``eta = N x``."""

    A_eta: np.ndarray
    B_eta: np.ndarray
    BGamma: np.ndarray
    N: np.ndarray
    coordinates: np.ndarray
    min_phase: MinPhaseVerdict


def _complete_left_null_space(dxi: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Rows annihilating ``B`` that complete ``dxi`` to a basis, unit rows first."""
    n = dxi.shape[1]
    projector = np.eye(n) - b @ np.linalg.pinv(b)
    candidates: List[np.ndarray] = []
    for j in range(n):
        unit = np.eye(n)[j]
        if np.max(np.abs(unit @ b)) <= RANK_TOL:
            candidates.append(unit)
    for j in range(n):
        projected = projector[j]
        norm = np.linalg.norm(projected)
        if norm > RANK_TOL:
            candidates.append(projected / norm)

    rows = list(dxi)
    chosen: List[np.ndarray] = []
    for candidate in candidates:
        if len(rows) == n:
            break
        trial = np.vstack(rows + [candidate])
        if _rank(trial) == len(rows) + 1:
            rows.append(candidate)
            chosen.append(candidate)
    if len(rows) < n:
        raise SingularCoordinatesError(
            f"only {len(rows) - dxi.shape[0]} of {n - dxi.shape[0]} internal rows annihilate B"
        )
    return np.vstack(chosen)


def extract_internal_linear(
    a, b, c, spec: GammaSpec, hurwitz: Optional[Callable[[np.ndarray], bool]] = None
) -> ZeroDynamicsLinear:
    """Split a linear plant into cascading outputs and internal states.

    ``hurwitz`` replaces the Routh test applied to the internal block.
    """
    a = as_matrix(a, "A")
    b = as_matrix(b, "B")
    if b.shape[0] != a.shape[0]:
        b = b.T
    n = a.shape[0]
    r = linear_relative_degree(a, b, c)
    if r != spec.r:
        raise ValueError(f"plant relative degree {r} does not match spec r={spec.r}")
    if r >= n:
        raise ValueError(f"relative degree {r} leaves no internal coordinates for n={n}")

    row = np.asarray(c, dtype=float).ravel()
    dxi_rows = []
    for _ in range(r):
        dxi_rows.append(row)
        row = row @ a
    dxi = np.vstack(dxi_rows)
    n_rows = _complete_left_null_space(dxi, b)
    coordinates = np.vstack((dxi, n_rows))
    if not np.isfinite(np.linalg.cond(coordinates)) or np.linalg.cond(coordinates) > 1e12:
        raise SingularCoordinatesError("stacked output and internal rows are singular")

    # eta' = N A x = N A Phi^-1 [xi; eta]
    mixed = solve_linear(coordinates.T, (n_rows @ a).T).T
    m_xi, a_eta = mixed[:, :r], mixed[:, r:]
    b_eta = solve_linear(spec.T.T, m_xi.T).T
    b_gamma = b_eta @ spec.Gamma
    verdict = _verdict(is_hurwitz_matrix(a_eta, hurwitz))
    logger.debug(f"internal block eigenvalues {np.linalg.eigvals(a_eta)} -> {verdict.value}")
    return ZeroDynamicsLinear(
        A_eta=a_eta,
        B_eta=b_eta,
        BGamma=b_gamma,
        N=n_rows,
        coordinates=coordinates,
        min_phase=verdict,
    )


def fixed_mu_equilibrium(zd: ZeroDynamicsLinear, mu_e: float) -> np.ndarray:
    return -solve_linear(zd.A_eta, zd.BGamma * float(mu_e))


@dataclass(frozen=True, eq=False)
class LocalMinPhase:
    verdict: MinPhaseVerdict
    jacobian: np.ndarray


def _field_jacobian(fn: Callable[[np.ndarray], np.ndarray], point: np.ndarray) -> np.ndarray:
    point = np.asarray(point, dtype=float)
    columns = []
    for i in range(point.size):
        step = FD_REL_STEP * max(1.0, abs(point[i]))
        ahead = point.copy()
        behind = point.copy()
        ahead[i] += step
        behind[i] -= step
        columns.append((np.asarray(fn(ahead), dtype=float) - np.asarray(fn(behind), dtype=float)) / (2.0 * step))
    jac = np.column_stack(columns)
    if not np.all(np.isfinite(jac)):
        raise NonFiniteError("non-finite finite-difference Jacobian")
    return np.atleast_2d(jac)


def local_min_phase_jacobian(internal_field: InternalField, eta_e, phi_e) -> LocalMinPhase:
    """Hurwitz check of ``d q(eta, phi_e) / d eta`` at ``eta_e``."""
    phi_e = np.asarray(phi_e, dtype=float)
    jac = _field_jacobian(lambda eta: internal_field(eta, phi_e), np.atleast_1d(eta_e))
    return LocalMinPhase(verdict=_verdict(routh_hurwitz(char_poly(jac))), jacobian=jac)


@dataclass(frozen=True, eq=False)
class ObstructionWitness:
    """Input direction ``c`` invisible to the barrier and its state-space image ``q = g c``."""

    c: np.ndarray
    q: np.ndarray


def multi_input_obstruction(lglfh_row, g_cols) -> Optional[ObstructionWitness]:
    row = np.atleast_1d(np.asarray(lglfh_row, dtype=float)).ravel()
    g = as_matrix(g_cols, "g")
    if g.shape[1] != row.size:
        raise ValueError(f"g has {g.shape[1]} columns, decoupling row has {row.size}")
    m = row.size
    if m < 1:
        raise ValueError("at least one input required")
    if _rank(g) < m:
        raise DependentColumnsError(f"input columns have rank {_rank(g)} < {m}")
    if m == 1:
        return None
    basis = null_space(row[None, :], rcond=RANK_TOL)
    c = basis[:, 0]
    lead = c[np.argmax(np.abs(c) > RANK_TOL)]
    if lead < 0:
        c = -c
    c = c / np.linalg.norm(c)
    return ObstructionWitness(c=c, q=g @ c)


@dataclass(frozen=True)
class MinPhaseCertificate:
    """Quadratic Lyapunov sandwich and decay constants for the CBF zero dynamics.

    ``alpha1 |eta|^2 <= V <= alpha2 |eta|^2``, ``|dV/deta| <= alpha3 |eta|`` and
    ``dV/deta q <= -alpha4 |eta|^2``; ``l_phi`` bounds the internal field's
    sensitivity to the cascading coordinates.  ``lyapunov`` is the matrix of
    ``V`` when the certificate was estimated.
    """

    alpha1: float
    alpha2: float
    alpha3: float
    alpha4: float
    l_phi: float
    gamma_min: float
    lyapunov: Optional[np.ndarray] = dataclass_field(default=None, compare=False)

    def validate(self) -> None:
        for name in ("alpha1", "alpha2", "alpha3", "alpha4", "l_phi", "gamma_min"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise InvalidCertificateError(f"{name} must be positive, got {value}")


def gamma_min_sufficiency(cert: MinPhaseCertificate) -> SufficiencyVerdict:
    cert.validate()
    if cert.alpha4 > (cert.alpha3 * cert.l_phi / 2.0) ** 2:
        return SufficiencyVerdict.PASS
    return SufficiencyVerdict.FAIL_ALPHA


def quartic_margin(alpha4: float, c1: float, c2: float, c3: float, c4: float, gamma_min: float) -> float:
    """``alpha4 g^4 - c1 alpha4 g^2 - (c2 + c3 g + c4 g^2)^2`` at ``g = gamma_min``."""
    g = float(gamma_min)
    return alpha4 * g**4 - c1 * alpha4 * g**2 - (c2 + c3 * g + c4 * g * g) ** 2


def minimum_gamma_for_margin(alpha4: float, c1: float, c2: float, c3: float, c4: float) -> Optional[float]:
    """Smallest rate above ``sqrt(c1)`` beyond which the quartic margin stays positive.

    Returns None when the leading coefficient ``alpha4 - c4^2`` is not positive.
    """
    lead = alpha4 - c4 * c4
    if lead <= 0:
        return None
    coeffs = [lead, -2.0 * c3 * c4, -(c1 * alpha4 + c3 * c3 + 2.0 * c2 * c4), -2.0 * c2 * c3, -c2 * c2]
    roots = np.roots(coeffs)
    real = [float(z.real) for z in roots if abs(z.imag) <= 1e-9 * max(1.0, abs(z))]
    floor = float(np.sqrt(max(c1, 0.0)))
    return max([floor] + real)


def estimate_certificate(
    field: InternalField,
    zero_phi: Callable[[np.ndarray], np.ndarray],
    eta_samples: Sequence[np.ndarray],
    gamma_min: float,
    eta_e=None,
) -> MinPhaseCertificate:
    """Sample-based certificate around the closed-loop zero-dynamics equilibrium.

    ``zero_phi`` maps internal states to the cascading coordinates imposed by
    the virtual-input law (``Gamma * kappa(eta)``).  ``V`` is the quadratic form
    solving the Lyapunov equation of the local Jacobian.
    """
    samples = [np.atleast_1d(np.asarray(eta, dtype=float)) for eta in eta_samples]
    if not samples:
        raise ValueError("at least one internal-state sample is required")
    center = np.zeros_like(samples[0]) if eta_e is None else np.atleast_1d(np.asarray(eta_e, dtype=float))

    def closed(eta: np.ndarray) -> np.ndarray:
        return np.asarray(field(eta, zero_phi(eta)), dtype=float)

    jac = _field_jacobian(closed, center)
    if not routh_hurwitz(char_poly(jac)):
        raise InvalidCertificateError("closed-loop zero dynamics are not locally exponentially stable")
    p = solve_lyapunov(jac)
    eig = np.linalg.eigvalsh(p)

    decay = np.inf
    l_phi = 0.0
    for eta in samples:
        delta = eta - center
        norm_sq = float(delta @ delta)
        if norm_sq > 0:
            decay = min(decay, -2.0 * float(delta @ p @ closed(eta)) / norm_sq)
        phi = np.asarray(zero_phi(eta), dtype=float)
        sens = _field_jacobian(lambda ph: field(eta, ph), phi)
        l_phi = max(l_phi, float(np.linalg.norm(sens, 2)))

    return MinPhaseCertificate(
        alpha1=float(eig[0]),
        alpha2=float(eig[-1]),
        alpha3=2.0 * float(eig[-1]),
        alpha4=float(decay),
        l_phi=l_phi,
        gamma_min=float(gamma_min),
        lyapunov=p,
    )


def _directional(fn: Callable[[np.ndarray], np.ndarray], point: np.ndarray, direction: np.ndarray) -> np.ndarray:
    """Central difference of ``fn`` along ``direction``, stepped a fixed distance along its unit vector."""
    norm = float(np.linalg.norm(direction))
    if norm == 0.0:
        return np.zeros_like(np.atleast_1d(np.asarray(fn(point), dtype=float)))
    unit = direction / norm
    ahead = np.asarray(fn(point + FD_REL_STEP * unit), dtype=float)
    behind = np.asarray(fn(point - FD_REL_STEP * unit), dtype=float)
    return np.atleast_1d((ahead - behind) * (norm / (2.0 * FD_REL_STEP)))


def composite_clf(
    chain: OutputChain,
    spec: GammaSpec,
    drift: Callable[[np.ndarray], np.ndarray],
    input_map: Callable[[np.ndarray], np.ndarray],
    internal_map: Callable[[np.ndarray], np.ndarray],
    kappa: Callable[[np.ndarray], float],
    p_eta,
    eta_e=None,
) -> ClfCallbacks:
    """``W = dphi^T P dphi + (eta - eta_e)^T P_eta (eta - eta_e)`` with ``dphi = phi - Gamma kappa(eta)``.

    ``P`` solves the Lyapunov equation of ``A_gamma`` and ``P_eta`` is a
    certificate's quadratic form.  The cascading part is differentiated
    exactly through the output chain; ``eta`` and ``kappa`` by directional
    differences along ``f`` and the columns of ``g``.
    """
    p_phi = solve_lyapunov(spec.A_gamma)
    p_eta = as_matrix(p_eta, "P_eta")
    center = None if eta_e is None else np.atleast_1d(np.asarray(eta_e, dtype=float))
    last_col = spec.T[:, -1]

    def parts(x: np.ndarray):
        x = np.asarray(x, dtype=float)
        eta = np.atleast_1d(np.asarray(internal_map(x), dtype=float))
        dphi = spec.T @ eval_xi(chain, x) - spec.Gamma * float(kappa(eta))
        deta = eta if center is None else eta - center
        return x, eta, dphi, deta

    def rate(x: np.ndarray, eta: np.ndarray, dphi: np.ndarray, deta: np.ndarray, field, phi_dot) -> float:
        eta_dot = _directional(internal_map, x, field)
        kappa_dot = float(_directional(kappa, eta, eta_dot)[0])
        return 2.0 * float(dphi @ p_phi @ (phi_dot - spec.Gamma * kappa_dot)) + 2.0 * float(deta @ p_eta @ eta_dot)

    def w(x) -> float:
        _, _, dphi, deta = parts(x)
        return float(dphi @ p_phi @ dphi + deta @ p_eta @ deta)

    def lfw(x) -> float:
        x, eta, dphi, deta = parts(x)
        phi_dot = spec.T @ np.array([float(chain.lfh[k + 1](x)) for k in range(chain.r)])
        return rate(x, eta, dphi, deta, np.asarray(drift(x), dtype=float), phi_dot)

    def lgw(x) -> np.ndarray:
        x, eta, dphi, deta = parts(x)
        g = np.asarray(input_map(x), dtype=float).reshape(x.size, -1)
        row = eval_lglfh(chain, x)
        return np.array([rate(x, eta, dphi, deta, g[:, j], last_col * row[j]) for j in range(g.shape[1])])

    return ClfCallbacks(W=w, lfw=lfw, lgw=lgw)
