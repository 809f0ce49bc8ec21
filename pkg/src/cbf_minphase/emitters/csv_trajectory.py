"""Trajectory CSV export with round-trippable 17-significant-digit floats."""

from __future__ import annotations

import csv
import io
from typing import Dict, List

import numpy as np

from ..constants import CSV_SIGNIFICANT_DIGITS
from ..simulation import Trajectory


def trajectory_header(traj: Trajectory) -> List[str]:
    n = traj.states.shape[1]
    m = traj.inputs.shape[1]
    r = traj.phi.shape[1]
    q = traj.eta.shape[1]
    return (
        ["t"]
        + [f"x{i + 1}" for i in range(n)]
        + [f"u{i + 1}" for i in range(m)]
        + ["mu", "h"]
        + [f"phi{i + 1}" for i in range(r)]
        + [f"eta{i + 1}" for i in range(q)]
        + [f"dphi{i + 1}" for i in range(r)]
    )


def format_value(value: float) -> str:
    return format(float(value), f".{CSV_SIGNIFICANT_DIGITS}g")


def build_trajectory_csv(traj: Trajectory) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(trajectory_header(traj))
    table = np.column_stack(
        (
            traj.times,
            traj.states,
            traj.inputs,
            traj.mu,
            traj.h,
            traj.phi,
            traj.eta,
            traj.delta_phi,
        )
    )
    for row in table:
        writer.writerow([format_value(v) for v in row])
    return buffer.getvalue()


def parse_trajectory_csv(text: str) -> Dict[str, np.ndarray]:
    """Column name to values, the inverse of ``build_trajectory_csv``."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    rows = [[float(cell) for cell in row] for row in reader if row]
    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return {name: data[:, i] for i, name in enumerate(header)}
