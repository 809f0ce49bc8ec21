import json
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "src"))

from cbf_minphase.cli import main
from cbf_minphase.config import (
    THREADS_ENV,
    apply_overrides,
    load_config,
    parse_config,
    sweep_thread_cap,
)
from cbf_minphase.emitters import build_trajectory_csv, parse_trajectory_csv, trajectory_header
from cbf_minphase.errors import ConfigError
from cbf_minphase.report import build_summary_text
from cbf_minphase.scenarios import build_scenario
from cbf_minphase.simulation import simulate
from cbf_minphase.verify import gamma_algebra, gamma_norm_bound, internal_equivalence, negated_routh, qp_kkt


def read(path):
    with open(path, "rb") as handle:
        return handle.read()


def write_config(tmp_path, document, name="run.json"):
    path = tmp_path / name
    path.write_text(document if isinstance(document, str) else json.dumps(document), encoding="utf-8")
    return str(path)


def test_parse_config_defaults():
    config = parse_config({"scenario": "linear_si", "params": {"a": 1.0}})
    assert config.scenario == "linear_si"
    assert config.params == {"a": 1.0}
    assert config.sim.dt_s is None
    assert config.output_dir == "out"
    assert config.seed == 0


@pytest.mark.parametrize(
    "document, field",
    [
        ({"scenario": "linear_si", "colour": 1}, "colour"),
        ({"params": {}}, "scenario"),
        ({"scenario": "linear_si", "params": {"b": 1.0}}, "params.b"),
        ({"scenario": "linear_si", "sim": {"dt": 0.1}}, "sim.dt"),
        ({"scenario": "linear_si", "sim": {"dt_s": -0.1}}, "sim.dt_s"),
        ({"scenario": "linear_si", "seed": -1}, "seed"),
        ({"scenario": "linear_si", "expected": "Fine"}, "expected"),
    ],
)
def test_parse_config_rejects(document, field):
    with pytest.raises(ConfigError) as info:
        parse_config(document, source="run.json")
    assert info.value.field == field
    assert "run.json" in str(info.value)


def test_load_config_reports_json_position(tmp_path):
    path = write_config(tmp_path, '{\n  "scenario": "linear_si",\n  "params": {"a": }\n}')
    with pytest.raises(ConfigError) as info:
        load_config(path)
    assert info.value.line == 3
    assert "line 3" in str(info.value)


def test_apply_overrides():
    config = parse_config({"scenario": "cartpole_si"})
    config = apply_overrides(config, ["gamma=2", "sim.horizon_s=5", "params.wiring=baseline", "expected=Diverged"])
    assert config.params["gamma"] == 2
    assert config.params["wiring"] == "baseline"
    assert config.sim.horizon_s == 5.0
    assert config.expected == "Diverged"
    with pytest.raises(ConfigError):
        apply_overrides(config, ["colour=red"])
    with pytest.raises(ConfigError):
        apply_overrides(config, ["gamma"])
    with pytest.raises(ConfigError):
        apply_overrides(config, ["gamma=-3"])


def test_sweep_thread_cap(monkeypatch):
    monkeypatch.setenv(THREADS_ENV, "3")
    assert sweep_thread_cap() == 3
    monkeypatch.setenv(THREADS_ENV, "0")
    with pytest.raises(ConfigError):
        sweep_thread_cap()
    monkeypatch.setenv(THREADS_ENV, "many")
    with pytest.raises(ConfigError):
        sweep_thread_cap()
    monkeypatch.delenv(THREADS_ENV)
    assert 1 <= sweep_thread_cap() <= 4


def test_trajectory_csv_round_trip():
    scenario = build_scenario("linear_si")
    traj = simulate(
        scenario.plant,
        scenario.policy,
        scenario.x0,
        1e-3,
        0.5,
        chain=scenario.chain,
        spec=scenario.spec,
        internal_map=scenario.internal_map,
    )
    text = build_trajectory_csv(traj)
    assert "\r" not in text
    header = text.split("\n", 1)[0].split(",")
    assert header == trajectory_header(traj)
    assert header == ["t", "x1", "x2", "x3", "u1", "mu", "h", "phi1", "phi2", "eta1", "dphi1", "dphi2"]
    columns = parse_trajectory_csv(text)
    np.testing.assert_array_equal(columns["t"], traj.times)
    np.testing.assert_array_equal(columns["x3"], traj.states[:, 2])
    np.testing.assert_array_equal(columns["mu"], traj.mu)
    np.testing.assert_array_equal(columns["dphi2"], traj.delta_phi[:, 1])


def test_summary_text_sections():
    text = build_summary_text(
        {
            "scenario": "linear_si",
            "wiring": "min_norm",
            "classification": "Bounded",
            "expected": "Bounded",
            "matched": True,
            "verdict": {"drift": False},
            "extrema": {"min_h": 0.5},
            "version": "0.1.0",
        }
    )
    assert text.startswith("scenario: linear_si\n")
    assert "[extrema]\nmin_h: 0.5\n" in text
    assert text.endswith("version: 0.1.0\n")


def test_run_minimum_phase_linear(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["run", "--scenario", "linear_si", "--out", str(out)]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["matched"] is True
    assert payload["summary"]["wall_clock_s"] >= 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["classification"] == "Bounded"
    assert "wall_clock_s" not in summary
    assert summary["final"]["state"] == pytest.approx([1.25, 0.0, 3.75], abs=1e-2)
    assert summary["analysis"]["eta_equilibrium"] == pytest.approx([3.75], abs=1e-2)
    assert (out / "trajectory.csv").exists()
    assert (out / "summary.txt").read_text().startswith("scenario: linear_si")
    assert not [name for name in os.listdir(out) if name.startswith(".tmp-")]


def test_run_non_minimum_phase_linear_matches_expectation(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["run", "--scenario", "linear_si", "--set", "a=1", "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["classification"] == "Diverged"
    assert summary["verdict"]["divergence_reason"] == "blowup"
    assert summary["extrema"]["min_h"] >= -1e-6


def test_run_mismatch_exit_code(tmp_path, capsys):
    args = ["run", "--scenario", "linear_si", "--set", "a=1", "--set", "expected=Bounded", "--out", str(tmp_path)]
    assert main(args) == 2


def test_run_is_deterministic(tmp_path, capsys):
    config = write_config(tmp_path, {"scenario": "linear_si", "params": {"wiring": "kappa_ps"}, "sim": {"horizon_s": 2}})
    assert main(["run", "--config", config, "--out", str(tmp_path / "a")]) == 0
    assert main(["run", "--config", config, "--out", str(tmp_path / "b")]) == 0
    for name in ("trajectory.csv", "summary.json", "summary.txt"):
        assert read(tmp_path / "a" / name) == read(tmp_path / "b" / name)


def test_run_malformed_config(tmp_path, capsys):
    config = write_config(tmp_path, '{"scenario": "linear_si",')
    assert main(["run", "--config", config, "--out", str(tmp_path / "out")]) == 1
    assert "line 1" in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


def test_run_unknown_parameter(tmp_path, capsys):
    config = write_config(tmp_path, {"scenario": "linear_si", "params": {"drag": 1}})
    assert main(["run", "--config", config]) == 1
    assert "params.drag" in capsys.readouterr().err


def test_sweep_linear_internal_pole(tmp_path, capsys):
    out = tmp_path / "sweep"
    args = ["sweep", "--scenario", "linear_si", "--param", "a", "--values", "[-2, -1, 1, 2]", "--out", str(out)]
    assert main(args) == 0
    index = json.loads((out / "sweep_index.json").read_text())
    verdicts = {run["value"]: run["min_phase"] for run in index["runs"]}
    assert verdicts == {-2: "MinimumPhase", -1: "MinimumPhase", 1: "NonMinimumPhase", 2: "NonMinimumPhase"}
    assert [run["output_dir"] for run in index["runs"]] == ["a=-2", "a=-1", "a=1", "a=2"]
    assert (out / "a=1" / "trajectory.csv").exists()


def test_sweep_cartpole_rates(tmp_path, capsys):
    out = tmp_path / "sweep"
    assert main(["sweep", "--scenario", "cartpole_si", "--param", "gamma", "--values", "2,10", "--out", str(out)]) == 0
    runs = json.loads((out / "sweep_index.json").read_text())["runs"]
    assert runs[0]["drift"] is True
    assert runs[0]["divergence_reason"] == "drift"
    assert runs[1]["classification"] == "Bounded"


def test_sweep_empty_values(tmp_path, capsys):
    assert main(["sweep", "--scenario", "linear_si", "--param", "a", "--values", "", "--out", str(tmp_path)]) == 1


def test_sweep_unknown_parameter(tmp_path, capsys):
    assert main(["sweep", "--scenario", "linear_si", "--param", "drag", "--values", "1", "--out", str(tmp_path)]) == 1


def test_list_scenarios(capsys):
    assert main(["list-scenarios"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert {entry["name"] for entry in payload["scenarios"]} == {"linear_si", "linear_mi", "cartpole_si", "cartpole_mi"}


def test_property_suites_are_seeded():
    first = gamma_algebra(np.random.default_rng(7))
    second = gamma_algebra(np.random.default_rng(7))
    assert first == second
    assert first.passed
    assert qp_kkt(np.random.default_rng(7)).passed


def test_negated_routh_breaks_suites():
    assert not gamma_norm_bound(np.random.default_rng(0), hurwitz=negated_routh).passed
    result = internal_equivalence(np.random.default_rng(0), hurwitz=negated_routh)
    assert not result.passed
    assert 0 < len(result.failures) <= 5


def test_verify_default_seed(capsys):
    assert main(["verify"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["passed"]
    assert [suite["name"] for suite in report["suites"]] == [
        "gamma_algebra",
        "gamma_norm_bound",
        "lyapunov_residual",
        "routh_agreement",
        "qp_kkt",
        "internal_equivalence",
        "error_envelope",
        "delta_phi_bounded",
    ]


@pytest.mark.parametrize(
    "name", sorted(os.listdir(os.path.join(os.path.dirname(__file__), "configs")))
)
def test_shipped_configs_load(name):
    config = load_config(os.path.join(os.path.dirname(__file__), "configs", name))
    assert config.expected is not None
    assert config.output_dir.startswith("out/")
