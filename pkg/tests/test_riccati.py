import itertools
import math
import numpy as np
import pytest
from PMonitor.config import SolverSettings
from PMonitor.errors import NoObservation, StepBlowup
from PMonitor.graph import MonitoringGraph, Tour, solve_tsp_exact, tour_travel_time
from PMonitor.models import Scenario, TargetModel
from PMonitor.riccati import (
    PeakSet, algebraic_riccati, cost, cycle_peaks, extract_peaks, peak_sensitivity_fd,
    peaks_frame, propagate, sequence_cost, steady_state_cycle, trajectory_frame,
)
from PMonitor.schedule import AgentSchedule, TargetTimeline, single_visit_schedule, to_target_view
from tests.conftest import random_scalar_scenario, scalar_target, two_node_graph

TIGHT = SolverSettings(cycle_tol=1e-12)

def timeline(t_on: float, t_off: float, tau: float = 0.0, target_id: int = 1) -> TargetTimeline:
    return TargetTimeline(
        target_id=target_id, t_on=(t_on,), t_off=(t_off,), tau_start=(tau,), period=t_on + t_off
    )

def scalar_are(a: float, q: float, r: float) -> float:
    g = 1.0 / r
    return (a + math.sqrt(a * a + q * g)) / g

def random_spd(rng, L: int) -> np.ndarray:
    X = rng.normal(size=(L, L))
    return X @ X.T + 0.1 * np.eye(L)

def test_propagate_unobserved_closed_form():
    """Linear Lyapunov flow: (omega0 + q/2a) e^{2at} - q/2a"""
    m = scalar_target(a=0.5, q=1.0)
    out = propagate(np.array([[1.0]]), m, observed=False, dt=1.0)
    assert out[0, 0] == pytest.approx(2 * math.e - 1, rel=1e-6)
    out = propagate(np.array([[1.0]]), m, observed=False, dt=1.0, step=1e-3)
    assert out[0, 0] == pytest.approx(2 * math.e - 1, rel=1e-6)

def test_propagate_zero_duration():
    """dt = 0 returns the start value"""
    m = scalar_target()
    omega0 = np.array([[3.0]])
    assert np.array_equal(propagate(omega0, m, observed=True, dt=0.0), omega0)

def test_propagate_observed_converges_to_are():
    """Continuous observation drives any start value to the stabilizing root"""
    m = scalar_target(a=0.3487, q=1.1924, r=2.3140)
    expected = scalar_are(0.3487, 1.1924, 2.3140)
    assert expected == pytest.approx(2.653, abs=1e-3)
    for omega0 in (0.1, 1.0, 50.0):
        out = propagate(np.array([[omega0]]), m, observed=True, dt=50.0)
        assert out[0, 0] == pytest.approx(expected, rel=1e-6)
    assert algebraic_riccati(m)[0, 0] == pytest.approx(expected, rel=1e-10)

def test_rk4_order():
    """Halving the step cuts the error about sixteen-fold"""
    m = scalar_target(a=0.5, q=1.0)
    exact = 2 * math.e - 1
    coarse = abs(propagate(np.array([[1.0]]), m, False, 1.0, step=0.2)[0, 0] - exact)
    fine = abs(propagate(np.array([[1.0]]), m, False, 1.0, step=0.1)[0, 0] - exact)
    assert 12.0 <= coarse / fine <= 20.0

def test_propagate_matrix_symmetric_pd():
    """2 x 2 propagation stays symmetric positive definite"""
    m = TargetModel(id=1, A=[[0.3, 0.05], [0.05, 0.1]], H=np.eye(2), Q=np.eye(2), R=np.eye(2))
    omega = np.eye(2)
    for observed in (False, True, False):
        omega = propagate(omega, m, observed, 0.7)
        assert np.allclose(omega, omega.T, atol=1e-10)
        assert np.min(np.linalg.eigvalsh(omega)) > 0

def test_step_blowup():
    """Fast unobserved growth trips the overflow guard"""
    m = scalar_target(a=5.0)
    with pytest.raises(StepBlowup):
        propagate(np.array([[1.0]]), m, observed=False, dt=10.0)

def test_no_observation():
    """A timeline without positive dwell time has no limit cycle"""
    with pytest.raises(NoObservation):
        steady_state_cycle(scalar_target(), timeline(0.0, 1.0))

def test_single_node_is_constant():
    """Always observed: the limit cycle is the algebraic Riccati solution"""
    m = scalar_target(a=0.3487, q=1.1924, r=2.3140)
    traj = steady_state_cycle(m, timeline(2.0, 0.0))
    expected = scalar_are(0.3487, 1.1924, 2.3140)
    assert np.allclose(traj.omegas[:, 0, 0], expected, rtol=1e-8)
    assert traj.defect < 1e-8

def test_limit_cycle_uniqueness(five_targets):
    """Random SPD starts reach the same fixed point"""
    rng = np.random.default_rng(3)
    tour = solve_tsp_exact(five_targets.graph)
    period = 2.0 * tour.travel_time + 1.0
    t_on = [(period - tour.travel_time) / 5] * 5
    timelines = to_target_view(single_visit_schedule(tour, t_on, five_targets.graph))
    for tl in timelines:
        m = five_targets.target(tl.target_id)
        fixed = [
            cycle_peaks(m, tl, settings=TIGHT, omega0=random_spd(rng, 1) * s)[1]
            for s in (0.1, 1.0, 10.0, 100.0, 1000.0)
        ]
        for X in fixed[1:]:
            assert np.linalg.norm(X - fixed[0], 2) <= 1e-8

def test_limit_cycle_uniqueness_matrix():
    """Same for a 2 x 2 target"""
    rng = np.random.default_rng(4)
    m = TargetModel(id=1, A=[[0.3, 0.05], [0.05, 0.1]], H=np.eye(2), Q=np.eye(2), R=np.eye(2))
    tl = timeline(0.6, 1.4)
    fixed = [cycle_peaks(m, tl, settings=TIGHT, omega0=random_spd(rng, 2))[1] for _ in range(5)]
    for X in fixed[1:]:
        assert np.linalg.norm(X - fixed[0], 2) <= 1e-8

def test_monotone_segments_and_peak_dominance():
    """Covariance rises while unobserved, falls while observed; the maximum sits at a visit start"""
    m = scalar_target(a=0.3, q=1.0, r=2.0)
    tl = timeline(0.4, 1.2, tau=0.3)
    traj = steady_state_cycle(m, tl)
    values = traj.omegas[:, 0, 0]
    assert np.all(values > 0)
    for seg in tl.segments():
        idx = np.where((traj.times >= seg.start - 1e-12) & (traj.times <= seg.end + 1e-12))[0]
        diffs = np.diff(values[idx])
        if seg.eta:
            assert np.all(diffs < 0)
        else:
            assert np.all(diffs > 0)
    peaks = extract_peaks(traj, tl, m)
    assert len(peaks.upper) == 1 and len(peaks.lower) == 1
    assert peaks.upper[0][0, 0] > peaks.lower[0][0, 0]
    assert values.max() <= peaks.max_weighted + 1e-9
    assert traj.times[np.argmax(values)] == pytest.approx(tl.tau_start[0], abs=tl.t_on[0] / 200 + 1e-12)

def test_matrix_monotone_segments():
    """Loewner order along the 2 x 2 limit cycle"""
    m = TargetModel(id=1, A=[[0.3, 0.05], [0.05, 0.1]], H=np.eye(2), Q=np.eye(2), R=np.eye(2))
    tl = timeline(0.5, 1.0)
    traj = steady_state_cycle(m, tl)
    for seg in tl.segments():
        idx = np.where((traj.times >= seg.start - 1e-12) & (traj.times <= seg.end + 1e-12))[0]
        for k0, k1 in zip(idx[:-1], idx[1:]):
            eig = np.linalg.eigvalsh(traj.omegas[k1] - traj.omegas[k0])
            if seg.eta:
                assert eig.max() < 0
            else:
                assert eig.min() > 0
    assert np.all([np.allclose(X, X.T, atol=1e-10) for X in traj.omegas])

def test_revisit_peaks():
    """[1, 2, 1] with unequal gaps: two upper peaks, the larger after the longer gap"""
    s = Scenario(targets=(scalar_target(id=1), scalar_target(id=2)), graph=two_node_graph(0.5))
    schedule = AgentSchedule(visits=(1, 2, 1), dwell=(1.0, 1.0, 1.0), graph=s.graph)
    tl1 = to_target_view(schedule)[0]
    peaks, _ = cycle_peaks(s.target(1), tl1)
    assert len(peaks.upper) == 2
    # the visit after the 2-unit gap starts at t = 3
    assert peaks.upper[1][0, 0] > peaks.upper[0][0, 0]
    assert peaks.max_weighted == pytest.approx(peaks.upper[1][0, 0])

def test_cost():
    """Largest weighted peak over targets"""
    one = PeakSet(1, (np.array([[4.0]]),), (np.array([[1.0]]),), (4.0,))
    two = PeakSet(2, (np.array([[1.0]]),), (np.array([[0.5]]),), (1.0,))
    assert cost([one]) == 4.0
    assert cost([one, two]) == 4.0
    with pytest.raises(ValueError):
        cost([])

@pytest.mark.parametrize("seed", range(20))
def test_sensitivity_signs_scalar(seed):
    """More dwell lowers the peak, more off time raises it"""
    rng = np.random.default_rng(seed)
    m = scalar_target(a=rng.uniform(0.1, 0.5), q=rng.uniform(0.5, 2.0), r=rng.uniform(1.0, 8.0))
    tl = timeline(rng.uniform(0.2, 1.0), rng.uniform(0.2, 2.0))
    assert peak_sensitivity_fd(m, tl, "t_on", 0, 1e-3)[0, 0] < -1e-8
    assert peak_sensitivity_fd(m, tl, "t_off", 0, 1e-3)[0, 0] > 1e-8

@pytest.mark.parametrize("seed", range(5))
def test_sensitivity_signs_matrix(seed):
    """Definiteness of the finite-difference derivative for 2 x 2 targets"""
    rng = np.random.default_rng(100 + seed)
    A = np.diag(rng.uniform(0.1, 0.4, 2)) + 0.05 * (1 - np.eye(2))
    m = TargetModel(id=1, A=A, H=np.eye(2), Q=random_spd(rng, 2), R=random_spd(rng, 2))
    tl = timeline(rng.uniform(0.3, 1.0), rng.uniform(0.3, 1.5))
    d_on = peak_sensitivity_fd(m, tl, "t_on", 0, 1e-3)
    d_off = peak_sensitivity_fd(m, tl, "t_off", 0, 1e-3)
    assert np.allclose(d_on, d_on.T)
    assert np.linalg.eigvalsh(d_on).max() < -1e-8
    assert np.linalg.eigvalsh(d_off).min() > 1e-8
    # Richardson check: halving h changes the estimate only at second order
    d_half = peak_sensitivity_fd(m, tl, "t_on", 0, 5e-4)
    assert np.allclose(d_on, d_half, rtol=1e-4, atol=1e-8)

def test_sensitivity_interior_only():
    """The perturbed duration must exceed h"""
    with pytest.raises(ValueError):
        peak_sensitivity_fd(scalar_target(), timeline(1e-4, 1.0), "t_on", 0, 1e-3)

@pytest.mark.parametrize("seed", range(5))
def test_shortest_tour_has_lowest_cost(seed):
    """At equal dwell times, every other single-visit order costs at least as much"""
    s = random_scalar_scenario(seed, 5)
    best = solve_tsp_exact(s.graph)
    t_on = [0.3] * 5
    best_cost = sequence_cost(s, single_visit_schedule(best, t_on, s.graph))
    seen = set()
    for perm in itertools.permutations(range(2, 6)):
        order = (1,) + perm
        key = min(order[1:], order[1:][::-1])
        if key in seen:
            continue
        seen.add(key)
        tour = Tour(order=order, travel_time=tour_travel_time(s.graph.closure, order))
        other = sequence_cost(s, single_visit_schedule(tour, t_on, s.graph))
        assert best_cost <= other * (1 + 1e-9)
    assert len(seen) == 12

def test_frames():
    """Trajectory and peak tables"""
    m = scalar_target()
    tl = timeline(0.5, 0.5)
    traj = steady_state_cycle(m, tl, settings=SolverSettings(dense_samples=10))
    df = trajectory_frame(traj, m)
    assert list(df.columns) == ["target_id", "t", "omega_1_1", "weighted"]
    assert df["t"].iloc[0] == 0.0
    assert df["t"].iloc[-1] == pytest.approx(1.0)
    assert len(df) == 1 + 10 * len(tl.segments())
    peaks = peaks_frame([extract_peaks(traj, tl, m)])
    assert list(peaks["visit"]) == [1]
