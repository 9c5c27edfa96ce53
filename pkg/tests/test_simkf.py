import numpy as np
import pytest
from pydantic import ValidationError
from PMonitor.errors import InputError, InsufficientRuns
from PMonitor.graph import MonitoringGraph
from PMonitor.models import Scenario
from PMonitor.riccati import steady_state_cycle
from PMonitor.schedule import AgentSchedule, to_target_view
from PMonitor.simkf import (
    SimConfig, cycle_grid, empirical_error_stats, simulate, simulate_batch, target_rng,
)
from tests.conftest import scalar_target, two_node_graph


@pytest.fixture
def scenario():
    return Scenario(
        targets=(scalar_target(id=1, a=0.5, q=1.0, r=1.0), scalar_target(id=2, a=0.3, q=0.5, r=2.0)),
        graph=two_node_graph(0.25),
    )

@pytest.fixture
def schedule(scenario):
    # period 1.0: dwell 0.25, travel 0.25, dwell 0.25, travel 0.25
    return AgentSchedule(visits=(1, 2), dwell=(0.25, 0.25), graph=scenario.graph)

def test_sim_config_validation():
    """Too few cycles and unknown fields are rejected"""
    with pytest.raises(ValidationError):
        SimConfig(cycles=2)
    with pytest.raises(ValidationError):
        SimConfig(dt=0.1)

def test_cycle_grid_alignment(schedule):
    """Steps tile every event; the observed time equals the dwell time"""
    grid = cycle_grid(schedule, 1e-3)
    assert grid.period == pytest.approx(1.0)
    assert grid.h.sum() == pytest.approx(1.0, rel=1e-12)
    assert grid.observed_time(1) == pytest.approx(0.25, rel=1e-12)
    assert grid.observed_time(2) == pytest.approx(0.25, rel=1e-12)
    assert grid.observed_time(0) == pytest.approx(0.5, rel=1e-12)
    assert list(grid.t[grid.event_starts]) == pytest.approx([0.0, 0.25, 0.5, 0.75])
    assert np.all(grid.h <= 1e-3 + 1e-15)

def test_target_streams_are_distinct():
    """Different (seed, target, run) triples give different draws"""
    a = target_rng(1, 1, 0).standard_normal(4)
    b = target_rng(1, 2, 0).standard_normal(4)
    c = target_rng(1, 1, 1).standard_normal(4)
    assert not np.allclose(a, b)
    assert not np.allclose(a, c)
    np.testing.assert_array_equal(a, target_rng(1, 1, 0).standard_normal(4))

def test_noise_free_error_is_zero(scenario, schedule):
    """Without noise the state and the estimate stay at zero"""
    trace = simulate(scenario, schedule, SimConfig(noise=False, cycles=3))
    for tr in trace.targets.values():
        assert np.all(tr.error == 0)
        assert np.all(tr.innovation == 0)

def test_same_seed_same_trace(scenario, schedule):
    """Same seed and run index reproduce the trace exactly"""
    cfg = SimConfig(seed=7, cycles=3)
    a = simulate(scenario, schedule, cfg).frame()
    b = simulate(scenario, schedule, cfg).frame()
    assert a.equals(b)
    c = simulate(scenario, schedule, SimConfig(seed=8, cycles=3)).frame()
    assert not a.equals(c)

def test_batching_does_not_change_runs(scenario, schedule):
    """Run r is the same whether simulated alone or in a batch"""
    cfg = SimConfig(seed=3, cycles=3)
    batch = simulate_batch(scenario, schedule, cfg, [0, 1, 2])
    single = simulate(scenario, schedule, cfg, run=1)
    for tid in (1, 2):
        np.testing.assert_allclose(batch[1].targets[tid].phi, single.targets[tid].phi, rtol=1e-12, atol=0)
        np.testing.assert_allclose(batch[1].targets[tid].phi_hat, single.targets[tid].phi_hat, rtol=1e-12, atol=0)

def test_threads_do_not_change_runs(scenario, schedule):
    """Worker threads only change scheduling"""
    cfg = SimConfig(seed=5, cycles=3)
    a = simulate(scenario, schedule, cfg, threads=1).frame()
    b = simulate(scenario, schedule, cfg, threads=2).frame()
    assert a.equals(b)

def test_filter_covariance_matches_limit_cycle(scenario, schedule):
    """Over the final cycle the filter covariance follows the periodic steady state"""
    cfg = SimConfig(cycles=30, noise=False)
    trace = simulate(scenario, schedule, cfg)
    start = (cfg.cycles - 1) * 1.0
    for tl in to_target_view(schedule, scenario.ids):
        traj = steady_state_cycle(scenario.target(tl.target_id), tl, scenario.solver)
        sim = trace.targets[tl.target_id]
        np.testing.assert_allclose(sim.omega_at(start), traj.omega0, rtol=1e-4)
        for tau, upper in zip(tl.tau_start, traj.upper):
            np.testing.assert_allclose(sim.omega_at(start + tau), upper, rtol=1e-4)

def test_eta_follows_schedule(scenario, schedule):
    """The recorded indicator is 1 only while the target is watched"""
    trace = simulate(scenario, schedule, SimConfig(cycles=3, noise=False))
    tr = trace.targets[1]
    phase = np.mod(tr.times, 1.0)
    watched = tr.eta == 1
    assert np.all(phase[watched] < 0.25 + 1e-9)
    assert np.any(watched) and np.any(~watched)

def test_horizon(scenario, schedule):
    """The horizon truncates the run; it must cover three cycles"""
    trace = simulate(scenario, schedule, SimConfig(horizon=3.5, noise=False))
    assert trace.targets[1].times[-1] == pytest.approx(3.5, abs=1e-9)
    with pytest.raises(InputError):
        simulate(scenario, schedule, SimConfig(horizon=2.0))

def test_control_input_needs_b(scenario, schedule):
    """A control input on a target without B is rejected"""
    with pytest.raises(InputError):
        simulate(scenario, schedule, SimConfig(cycles=3), inputs={1: lambda t: np.array([1.0])})

def test_control_input_does_not_change_error():
    """A known input shifts state and estimate alike"""
    s = Scenario(targets=(scalar_target(id=1, B=1.0),), graph=MonitoringGraph(d=np.zeros((1, 1))))
    sched = AgentSchedule(visits=(1,), dwell=(0.5,), graph=s.graph)
    cfg = SimConfig(cycles=3, noise=False)
    trace = simulate(s, sched, cfg, inputs={1: lambda t: np.array([1.0])})
    tr = trace.targets[1]
    assert tr.phi[-1, 0] > 0
    np.testing.assert_allclose(tr.error, 0.0, atol=1e-12)

def test_insufficient_runs(scenario, schedule):
    """Error statistics need two runs"""
    with pytest.raises(InsufficientRuns):
        empirical_error_stats(scenario, schedule, SimConfig(cycles=3), n_runs=1)

def test_error_covariance_calibration(scenario, schedule):
    """The sample error variance across runs matches the filter covariance"""
    cfg = SimConfig(seed=11, cycles=4)
    stats = empirical_error_stats(scenario, schedule, cfg, n_runs=500, phase=0.3, target_ids=[1])
    st = stats[1]
    assert st.n_runs == 500
    assert st.phase == pytest.approx(0.3, abs=1e-3)
    assert 0.8 <= st.normalized_variance[0] <= 1.2
    assert abs(st.covariance[0, 0] - st.omega[0, 0]) <= 3 * st.std_error[0, 0]
    d = st.to_dict()
    assert d["target_id"] == 1 and len(d["covariance"]) == 1

def test_initial_covariance_is_forgotten(scenario, schedule):
    """Starting from I or 100 I ends on the same final cycle"""
    a = simulate(scenario, schedule, SimConfig(cycles=40, noise=False, omega0_scale=1.0))
    b = simulate(scenario, schedule, SimConfig(cycles=40, noise=False, omega0_scale=100.0))
    for tid in (1, 2):
        assert b.targets[tid].omega[0, 0, 0] == pytest.approx(100.0)
        start = 39 * 1.0
        for tau in (0.0, 0.25, 0.5, 0.75):
            np.testing.assert_allclose(
                b.targets[tid].omega_at(start + tau), a.targets[tid].omega_at(start + tau), rtol=1e-6
            )
