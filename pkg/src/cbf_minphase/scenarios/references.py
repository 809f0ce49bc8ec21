"""Reference controllers the safety filters sit on top of."""

from __future__ import annotations

import logging
from typing import Optional, Sequence, Tuple

import numpy as np

from ..cbf_core import OutputChain, eval_lglfh, eval_xi
from ..constants import DEGENERATE_TOL
from ..errors import DegenerateConstraintError
from ..numerics import lqr_gain, pole_placement_gain
from .base import Reference

logger = logging.getLogger("cbf-minphase.scenarios.references")

INITIAL_POLES = (-1.0, -2.0, -3.0)


def lqr_reference(
    a: np.ndarray,
    b: np.ndarray,
    x_e: np.ndarray,
    q_weight: float = 1.0,
    r_weight: float = 1.0,
    poles: Sequence[float] = INITIAL_POLES,
) -> Tuple[np.ndarray, Reference]:
    """LQR regulator toward ``x_e``, initialized from a pole-placement gain."""
    n = a.shape[0]
    m = b.shape[1]
    k0 = pole_placement_gain(a, b, poles[:n])
    gain = lqr_gain(a, b, q_weight * np.eye(n), r_weight * np.eye(m), k0)
    logger.info(f"LQR gain {np.round(gain, 4).tolist()} toward {x_e.tolist()}")
    target = np.asarray(x_e, dtype=float).copy()

    def reference(x: np.ndarray) -> np.ndarray:
        return -gain @ (x - target)

    return gain, reference


def io_linearize_siso(
    chain: OutputChain,
    k_io: Sequence[float],
    x,
    channel: Optional[int] = None,
    m: Optional[int] = None,
) -> np.ndarray:
    """``u = (L_g L_f^{r-1} y)^-1 (-L_f^r y - k^T xi)`` on one input channel."""
    gains = np.asarray(k_io, dtype=float).ravel()
    if gains.size != chain.r:
        raise ValueError(f"expected {chain.r} output gains, got {gains.size}")
    row = eval_lglfh(chain, x)
    index = 0 if channel is None else channel
    authority = row[index]
    if abs(authority) < DEGENERATE_TOL:
        raise DegenerateConstraintError(f"output has no authority on channel {index}")
    u = np.zeros(row.size if m is None else m)
    nu = -float(gains @ eval_xi(chain, x))
    u[index] = (-float(chain.lfh[chain.r](x)) + nu) / authority
    return u
