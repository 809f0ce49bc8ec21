import math
import os
import sys
import time

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "src"))

from cbf_minphase.constants import Classification
from cbf_minphase.cbf_core import eval_xi
from cbf_minphase.errors import DegenerateConstraintError, NonFiniteError, SimulationError
from cbf_minphase.filters import FilterDecision
from cbf_minphase.scenarios import build_scenario, cartpole_dynamics, cartpole_energy, cartpole_momentum
from cbf_minphase.simulation import ControlAffinePlant, Trajectory, classify, error_signal, fit_decay_rate, simulate


def make_trajectory(states, h=None, eta=None, stop_reason=None, dt=1.0):
    states = np.asarray(states, dtype=float)
    count = states.shape[0]
    h = np.zeros(count) if h is None else np.asarray(h, dtype=float)
    eta = np.zeros((count, 0)) if eta is None else np.asarray(eta, dtype=float).reshape(count, -1)
    return Trajectory(
        times=np.arange(count) * dt,
        states=states,
        inputs=np.zeros((count, 1)),
        mu=np.ones(count),
        h=h,
        xi=h.reshape(count, 1),
        phi=h.reshape(count, 1),
        eta=eta,
        delta_phi=np.zeros((count, 1)),
        intervened=np.zeros(count, dtype=bool),
        relaxed=np.zeros(count, dtype=bool),
        dt=dt,
        stop_reason=stop_reason,
    )


def zero_policy(m):
    def policy(x):
        return FilterDecision(u=np.zeros(m), mu=0.0)

    return policy


def run(scenario, **kwargs):
    return simulate(
        scenario.plant,
        scenario.policy,
        scenario.x0,
        kwargs.pop("dt", scenario.dt_s),
        kwargs.pop("horizon", scenario.horizon_s),
        chain=scenario.chain,
        spec=scenario.spec,
        internal_map=scenario.internal_map,
    )


def test_control_affine_plant_dynamics():
    plant = ControlAffinePlant(n=2, m=1, f=lambda x: np.array([x[1], 0.0]), g=lambda x: np.array([[0.0], [1.0]]))
    np.testing.assert_allclose(plant.dynamics([1.0, 2.0], [3.0]), [2.0, 3.0])


def test_simulate_records_every_sample():
    plant = ControlAffinePlant(n=1, m=1, f=lambda x: -x, g=lambda x: np.zeros((1, 1)))
    traj = simulate(plant, zero_policy(1), [1.0], 0.01, 1.0)
    assert len(traj) == 101
    assert traj.times[-1] == pytest.approx(1.0)
    assert traj.states[-1, 0] == pytest.approx(math.exp(-1.0), abs=1e-8)
    assert traj.phi.shape == (101, 0)
    assert np.all(np.isnan(traj.h))
    assert traj.stop_reason is None


def test_simulate_rejects_bad_arguments():
    plant = ControlAffinePlant(n=1, m=1, f=lambda x: -x, g=lambda x: np.zeros((1, 1)))
    with pytest.raises(ValueError):
        simulate(plant, zero_policy(1), [1.0], 0.0, 1.0)
    with pytest.raises(ValueError):
        simulate(plant, zero_policy(1), [1.0, 2.0], 0.1, 1.0)
    with pytest.raises(ValueError):
        simulate(plant, zero_policy(1), [float("nan")], 0.1, 1.0)


def test_simulate_wraps_policy_errors():
    plant = ControlAffinePlant(n=1, m=1, f=lambda x: -x, g=lambda x: np.zeros((1, 1)))

    def failing(x):
        raise DegenerateConstraintError("no authority")

    with pytest.raises(SimulationError) as info:
        simulate(plant, failing, [1.0], 0.1, 1.0)
    assert info.value.step == 0
    assert isinstance(info.value.cause, DegenerateConstraintError)


def test_simulate_stops_on_blowup():
    plant = ControlAffinePlant(n=1, m=1, f=lambda x: 5.0 * x, g=lambda x: np.zeros((1, 1)))
    traj = simulate(plant, zero_policy(1), [1.0], 0.01, 10.0, blowup=100.0)
    assert traj.stop_reason == "blowup"
    assert abs(traj.states[-1, 0]) > 100.0
    assert traj.times[-1] < 10.0


def test_classify_precedence():
    unsafe = make_trajectory([[0.0], [1e5]], h=[0.0, -1.0])
    assert classify(unsafe, 1e-6, 1e4, 1e-3).classification == Classification.UNSAFE

    diverged = make_trajectory([[0.0], [1e5]], h=[0.0, 0.0])
    verdict = classify(diverged, 1e-6, 1e4, 1e-3)
    assert verdict.classification == Classification.DIVERGED
    assert verdict.divergence_reason == "blowup"
    assert verdict.divergence_time == 1.0

    aborted = make_trajectory([[0.0], [1.0]], stop_reason="aborted: guard")
    assert classify(aborted, 1e-6, 1e4, 1e-3).classification == Classification.INCOMPLETE

    bounded = make_trajectory([[0.0], [1.0], [1.0]])
    verdict = classify(bounded, 1e-6, 1e4, 1e-3)
    assert verdict.classification == Classification.BOUNDED
    assert verdict.settled is True


def test_classify_drift():
    traj = make_trajectory(np.zeros((3, 1)), eta=[[0.0], [5.0], [12.0]])
    verdict = classify(traj, 1e-6, 1e4, 1e-3, drift_threshold=10.0)
    assert verdict.classification == Classification.DIVERGED
    assert verdict.drift
    assert verdict.divergence_reason == "drift"
    assert verdict.divergence_time == 2.0
    assert verdict.max_abs_eta == 12.0
    quiet = classify(traj, 1e-6, 1e4, 1e-3)
    assert quiet.classification == Classification.BOUNDED
    assert not quiet.drift


def test_classify_reports_first_internal_coordinate_separately():
    traj = make_trajectory(np.zeros((4, 1)), eta=[[0.0, 0.0], [1.0, 12.0], [4.0, 13.0], [11.0, 13.0]])
    verdict = classify(traj, 1e-6, 1e4, 1e-3, drift_threshold=10.0)
    assert verdict.drift
    assert verdict.divergence_time == 1.0
    assert verdict.max_abs_eta1 == 11.0
    assert verdict.eta1_drift
    assert verdict.eta1_drift_time == 3.0

    lagging = make_trajectory(np.zeros((3, 1)), eta=[[0.0, 0.0], [2.0, 12.0], [-3.0, 15.0]])
    verdict = classify(lagging, 1e-6, 1e4, 1e-3, drift_threshold=10.0)
    assert verdict.classification == Classification.DIVERGED
    assert verdict.max_abs_eta1 == 3.0
    assert not verdict.eta1_drift
    assert verdict.eta1_drift_time is None


def test_classify_saturation_fraction():
    traj = make_trajectory(np.zeros((4, 1)))
    traj.mu[:] = [0.0, 0.0, 1.0, 1.0]
    assert classify(traj, 1e-6, 1e4, 1e-3).saturation_fraction == pytest.approx(0.5)


def test_fit_decay_rate():
    times = np.linspace(0.0, 5.0, 501)
    values = np.exp(-2.0 * times)[:, None] * np.array([1.0, -0.5])
    assert fit_decay_rate(times, values, (0.0, 5.0)) == pytest.approx(2.0, rel=1e-9)
    with pytest.raises(ValueError):
        fit_decay_rate(times, values, (10.0, 11.0))


def test_linear_minimum_phase_run_settles():
    scenario = build_scenario("linear_si", {"a": -1.0})
    traj = run(scenario)
    verdict = classify(traj, 1e-6, 1e4, 1e-3)
    assert verdict.classification == Classification.BOUNDED
    np.testing.assert_allclose(traj.states[-1], [1.25, 0.0, 3.75], atol=1e-2)
    assert verdict.min_h >= -1e-6
    assert float(np.min(traj.phi)) >= -1e-6
    np.testing.assert_allclose(error_signal(traj, scenario.spec), traj.delta_phi)


def test_linear_non_minimum_phase_run_blows_up_safely():
    scenario = build_scenario("linear_si", {"a": 1.0})
    traj = run(scenario)
    verdict = classify(traj, 1e-6, 1e4, 1e-3)
    assert verdict.classification == Classification.DIVERGED
    assert verdict.divergence_reason == "blowup"
    assert abs(traj.states[-1, 2]) > 1e4
    assert verdict.min_h >= -1e-6


def test_error_signal_decays_under_constant_virtual_input():
    scenario = build_scenario("linear_si", {"a": -1.0, "wiring": "kappa_ps"})
    traj = run(scenario, dt=2e-4, horizon=4.0)
    np.testing.assert_allclose(traj.mu, 7.5)
    rate = fit_decay_rate(traj.times, error_signal(traj, scenario.spec), (0.5, 4.0))
    assert rate >= 0.9 * scenario.spec.gamma_min


def test_cartpole_energy_and_momentum_conserved_without_drag():
    scenario = build_scenario("cartpole_si", {"b": 0.0})
    x0 = np.array([0.0, 0.1, 0.5, 0.2])
    traj = simulate(scenario.plant, zero_policy(1), x0, 1e-4, 1.0)
    assert traj.stop_reason is None
    energies = np.array([cartpole_energy(x) for x in traj.states])
    momenta = np.array([cartpole_momentum(x) for x in traj.states])
    assert np.max(np.abs(energies - energies[0])) < 1e-8
    assert np.max(np.abs(momenta - momenta[0])) < 1e-8


def test_cartpole_guard_aborts_run():
    scenario = build_scenario("cartpole_si", {"b": 0.0})
    traj = simulate(scenario.plant, zero_policy(1), [0.0, 1.2, 0.0, 3.0], 1e-3, 5.0)
    assert traj.aborted
    verdict = classify(traj, 1e-6, 1e4, 1e-3)
    assert verdict.classification == Classification.INCOMPLETE


def test_cartpole_dynamics_reference_states():
    np.testing.assert_allclose(cartpole_dynamics(4.0, [0.0, 0.0, 0.0, 0.0], [0.0]), np.zeros(4), atol=1e-15)
    np.testing.assert_allclose(cartpole_dynamics(4.0, [0.0, 0.0, 1.0, 0.0], [0.0]), [1.0, 0.0, -4.0, 0.0], atol=1e-15)
    # upright: the force splits evenly between cart and pole accelerations
    np.testing.assert_allclose(cartpole_dynamics(0.0, [0.0, 0.0, 0.0, 0.0], [2.0]), [0.0, 0.0, 2.0, 2.0], atol=1e-15)
    with pytest.raises(NonFiniteError):
        cartpole_dynamics(4.0, [0.0, 2.0, 0.0, 0.0], [0.0])


def test_cartpole_dynamics_matches_scenario_plant():
    scenario = build_scenario("cartpole_si", {"b": 2.5})
    x = np.array([0.3, 0.4, -0.7, 1.1])
    np.testing.assert_allclose(cartpole_dynamics(2.5, x, [1.5]), scenario.plant.dynamics(x, [1.5]), rtol=1e-12)


def test_linear_plant_steps_like_generic_field():
    scenario = build_scenario("linear_si")
    a_mat, b_mat = scenario.plant.linear
    generic = ControlAffinePlant(n=3, m=1, f=lambda x: a_mat @ x, g=lambda x: b_mat)
    fast = run(scenario, horizon=2.0)
    slow = simulate(
        generic,
        scenario.policy,
        scenario.x0,
        scenario.dt_s,
        2.0,
        chain=scenario.chain,
        spec=scenario.spec,
    )
    np.testing.assert_allclose(fast.states, slow.states, rtol=0, atol=1e-10)


def test_recorded_outputs_match_fresh_evaluation():
    scenario = build_scenario("cartpole_si")
    traj = run(scenario, horizon=0.5)
    fresh = np.array([eval_xi(scenario.chain, x) for x in traj.states])
    np.testing.assert_allclose(traj.xi, fresh, rtol=0, atol=1e-12)
    np.testing.assert_allclose(traj.h, fresh[:, 0], rtol=0, atol=1e-12)
    np.testing.assert_allclose(traj.phi, fresh @ scenario.spec.T.T, rtol=0, atol=1e-12)


@pytest.mark.parametrize("name, params, budget_s", [("linear_si", {}, 1.0), ("cartpole_si", {"gamma": 10.0}, 5.0)])
def test_default_run_within_time_budget(name, params, budget_s):
    scenario = build_scenario(name, params)
    start = time.perf_counter()
    traj = run(scenario)
    elapsed = time.perf_counter() - start
    assert traj.times[-1] == pytest.approx(scenario.horizon_s)
    assert elapsed < budget_s


def test_halving_step_converges_at_first_order():
    scenario = build_scenario("linear_si")
    finals = [run(scenario, dt=dt).states[-1] for dt in (1e-3, 5e-4, 2.5e-4)]
    coarse = float(np.max(np.abs(finals[0] - finals[1])))
    fine = float(np.max(np.abs(finals[1] - finals[2])))
    assert coarse <= 2e-4
    assert fine <= 0.6 * coarse + 1e-9
