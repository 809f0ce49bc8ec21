"""Run and sweep pipelines: scenario -> trajectory -> CSV + summary files."""

from __future__ import annotations

import json
import logging
import os
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Dict, List, Optional, Sequence

from .config import RunConfig, set_path, sweep_thread_cap
from .constants import (
    DEFAULT_BLOWUP,
    DEFAULT_SAFETY_TOL,
    DEFAULT_SETTLE_TOL,
    SUMMARY_JSON_FILE,
    SUMMARY_TEXT_FILE,
    SWEEP_INDEX_FILE,
    TRAJECTORY_FILE,
)
from .emitters import build_trajectory_csv
from .errors import CbfMinPhaseError
from .report import build_summary_text, serialize_summary_json
from .scenarios import build_scenario
from .simulation import classify, simulate
from .summary import build_summary

logger = logging.getLogger("cbf-minphase.runner")

EXIT_MATCHED = 0
EXIT_ERROR = 1
EXIT_MISMATCH = 2


def _ensure_output_dir(output_dir: str) -> None:
    os.makedirs(output_dir, exist_ok=True)


def _write_text(path: str, text: str) -> None:
    directory = os.path.dirname(path) or "."
    handle = tempfile.NamedTemporaryFile(
        "w", encoding="utf-8", newline="", dir=directory, prefix=".tmp-", delete=False
    )
    try:
        with handle:
            handle.write(text)
        os.replace(handle.name, path)
    except BaseException:
        if os.path.exists(handle.name):
            os.unlink(handle.name)
        raise


def _config_echo(config: RunConfig) -> Dict[str, Any]:
    echo = config.to_dict()
    echo.pop("output_dir")
    echo["sim"] = {key: value for key, value in echo["sim"].items() if value is not None}
    return echo


def run_scenario(config: RunConfig, output_dir: Optional[str] = None) -> Dict[str, Any]:
    """Simulate one configured scenario and write its trajectory and summaries.

    Every artifact is rendered in memory before anything touches the disk, and
    each file lands through a rename, so a failing run leaves no partial files.
    """
    started = time.perf_counter()
    output_dir = output_dir or config.output_dir
    scenario = build_scenario(config.scenario, config.params)
    sim = config.sim
    dt = sim.dt_s or scenario.dt_s
    horizon = sim.horizon_s or scenario.horizon_s
    blowup = sim.blowup or DEFAULT_BLOWUP
    drift_threshold = sim.drift_threshold or scenario.drift_threshold

    traj = simulate(
        scenario.plant,
        scenario.policy,
        scenario.x0,
        dt,
        horizon,
        chain=scenario.chain,
        spec=scenario.spec,
        internal_map=scenario.internal_map,
        blowup=blowup,
    )
    verdict = classify(
        traj,
        safety_tol=sim.safety_tol or DEFAULT_SAFETY_TOL,
        blowup=blowup,
        settle_tol=sim.settle_tol or DEFAULT_SETTLE_TOL,
        drift_threshold=drift_threshold,
    )
    expected = config.expected or scenario.expected.value
    summary = build_summary(
        scenario.name,
        scenario.wiring.value,
        traj,
        verdict,
        expected,
        scenario.describe_run(traj),
        _config_echo(config),
    )
    summary_data = summary.to_dict()
    artifacts = {
        TRAJECTORY_FILE: build_trajectory_csv(traj),
        SUMMARY_JSON_FILE: serialize_summary_json(summary_data),
        SUMMARY_TEXT_FILE: build_summary_text(summary_data),
    }

    _ensure_output_dir(output_dir)
    files: List[str] = []
    for name, text in artifacts.items():
        path = os.path.join(output_dir, name)
        _write_text(path, text)
        files.append(path)

    summary.wall_clock_s = time.perf_counter() - started
    logger.info(
        f"{scenario.name}/{scenario.wiring.value}: {verdict.classification.value} "
        f"(expected {expected}) in {summary.wall_clock_s:.2f} s"
    )
    return {
        "files": files,
        "summary": summary.to_dict(include_timing=True),
        "matched": summary.matched,
        "exit_code": EXIT_MATCHED if summary.matched else EXIT_MISMATCH,
    }


def value_label(value: Any) -> str:
    if isinstance(value, str):
        return value
    return json.dumps(value, separators=(",", ":"))


def _sweep_entry(config: RunConfig, param: str, value: Any, output_dir: str) -> Dict[str, Any]:
    entry: Dict[str, Any] = {"value": value, "output_dir": output_dir}
    try:
        result = run_scenario(set_path(config, param, value), output_dir)
    except (CbfMinPhaseError, ValueError, OSError) as exc:
        logger.error(f"sweep {param}={value_label(value)} failed: {exc}")
        entry.update({"classification": None, "matched": False, "error": str(exc)})
        return entry
    summary = result["summary"]
    entry.update(
        {
            "classification": summary["classification"],
            "expected": summary["expected"],
            "matched": result["matched"],
            "drift": summary["verdict"]["drift"],
            "divergence_reason": summary["verdict"]["divergence_reason"],
            "min_phase": summary["analysis"].get("zero_dynamics"),
        }
    )
    return entry


def run_sweep(
    config: RunConfig,
    param: str,
    values: Sequence[Any],
    output_dir: Optional[str] = None,
    max_workers: Optional[int] = None,
) -> Dict[str, Any]:
    """One run per value in ``<out>/<leaf>=<value>/``, then ``sweep_index.json``."""
    if not values:
        raise ValueError("sweep needs at least one value")
    output_dir = output_dir or config.output_dir
    set_path(config, param, values[0])
    leaf = param.split(".")[-1]
    targets = [os.path.join(output_dir, f"{leaf}={value_label(value)}") for value in values]
    workers = max(1, min(max_workers or sweep_thread_cap(), len(values)))
    logger.info(f"sweeping {param} over {len(values)} value(s) with {workers} worker(s)")

    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(_sweep_entry, config, param, value, target) for value, target in zip(values, targets)
        ]
        entries = [future.result() for future in futures]

    index = {
        "scenario": config.scenario,
        "param": param,
        "runs": [{**entry, "output_dir": os.path.relpath(entry["output_dir"], output_dir)} for entry in entries],
    }
    _ensure_output_dir(output_dir)
    index_path = os.path.join(output_dir, SWEEP_INDEX_FILE)
    _write_text(index_path, json.dumps(index, indent=2) + "\n")

    if any("error" in entry for entry in entries):
        exit_code = EXIT_ERROR
    elif all(entry["matched"] for entry in entries):
        exit_code = EXIT_MATCHED
    else:
        exit_code = EXIT_MISMATCH
    logger.info(f"sweep finished: exit {exit_code}")
    return {"index": index_path, "runs": index["runs"], "exit_code": exit_code}
