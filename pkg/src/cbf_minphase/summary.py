"""Run summary record written next to each trajectory."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from . import __version__
from .simulation import Trajectory, Verdict


def _plain(value: Any) -> Any:
    """Convert numpy scalars/arrays and enums into JSON-ready values."""
    if isinstance(value, dict):
        return {key: _plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(item) for item in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    if hasattr(value, "value") and isinstance(getattr(value, "value"), str):
        return value.value
    return value


@dataclass
class RunSummary:
    scenario: str
    wiring: str
    classification: str
    expected: str
    matched: bool
    verdict: Dict[str, Any]
    extrema: Dict[str, Any]
    final: Dict[str, Any]
    analysis: Dict[str, Any]
    config: Dict[str, Any]
    samples: int
    stop_reason: Optional[str] = None
    version: str = __version__
    wall_clock_s: Optional[float] = field(default=None, compare=False)

    def to_dict(self, include_timing: bool = False) -> Dict[str, Any]:
        data = asdict(self)
        if not include_timing:
            data.pop("wall_clock_s")
        return _plain(data)


def build_summary(
    scenario_name: str,
    wiring: str,
    traj: Trajectory,
    verdict: Verdict,
    expected: str,
    analysis: Dict[str, Any],
    config: Dict[str, Any],
) -> RunSummary:
    relaxations = int(np.count_nonzero(traj.relaxed))
    interventions = float(np.mean(traj.intervened)) if len(traj) else 0.0
    final_eta: List[float] = traj.eta[-1].tolist() if traj.eta.shape[1] else []
    return RunSummary(
        scenario=scenario_name,
        wiring=wiring,
        classification=verdict.classification.value,
        expected=expected,
        matched=verdict.classification.value == expected,
        verdict={
            "classification": verdict.classification.value,
            "divergence_time_s": verdict.divergence_time,
            "divergence_reason": verdict.divergence_reason,
            "drift": verdict.drift,
            "eta1_drift": verdict.eta1_drift,
            "eta1_drift_time_s": verdict.eta1_drift_time,
            "settled": verdict.settled,
        },
        extrema={
            "min_h": verdict.min_h,
            "min_phi": verdict.min_phi,
            "max_state_norm": verdict.max_state_norm,
            "max_abs_eta": verdict.max_abs_eta,
            "max_abs_eta1": verdict.max_abs_eta1,
            "saturation_fraction": verdict.saturation_fraction,
            "intervention_fraction": interventions,
            "relaxation_count": relaxations,
        },
        final={
            "t_s": float(traj.times[-1]),
            "state": verdict.final_state.tolist(),
            "input": traj.inputs[-1].tolist(),
            "mu": float(traj.mu[-1]),
            "eta": final_eta,
        },
        analysis=analysis,
        config=config,
        samples=len(traj),
        stop_reason=traj.stop_reason,
    )
