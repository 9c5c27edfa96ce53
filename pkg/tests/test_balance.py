import math
import numpy as np
import pytest
from PMonitor.balance import (
    BalanceStatus, balance_step, balance_until_converged, check_tour, clamp_to_floor, equalized_cost,
    evaluate_allocation, geometric_mean,
)
from PMonitor.config import SolverSettings
from PMonitor.errors import InputError, NonpositivePeak, PeriodTooShort, ScenarioError
from PMonitor.graph import MonitoringGraph, Tour, solve_tsp
from PMonitor.models import Scenario
from PMonitor.riccati import algebraic_riccati, cost
from tests.conftest import random_scalar_scenario, scalar_target, two_node_graph

LN2 = math.log(2.0)

def test_balance_step_two_targets():
    """Peaks (4, 1): g_avg = 2, dwell moves by +-k_p ln 2"""
    new = balance_step([1.0, 1.0], [4.0, 1.0], 0.01)
    assert new == pytest.approx([1.0 + 0.01 * LN2, 1.0 - 0.01 * LN2], abs=1e-12)
    assert new.sum() == pytest.approx(2.0, rel=1e-15)

def test_balance_step_three_targets():
    """Peaks (1, 2, 4): g_avg = 2"""
    assert geometric_mean([1.0, 2.0, 4.0]) == pytest.approx(2.0)
    new = balance_step([1.0, 1.0, 1.0], [1.0, 2.0, 4.0], 0.01)
    assert new - 1.0 == pytest.approx([-0.01 * LN2, 0.0, 0.01 * LN2], abs=1e-12)

def test_balance_step_fixed_point():
    """Equal peaks leave the allocation unchanged"""
    t_on = np.array([0.3, 0.5, 0.2])
    assert np.array_equal(balance_step(t_on, [2.5, 2.5, 2.5], 0.01), t_on)

def test_balance_step_errors():
    """Peaks and dwell times must be positive"""
    with pytest.raises(NonpositivePeak):
        balance_step([1.0, 1.0], [0.0, 1.0], 0.01)
    with pytest.raises(NonpositivePeak):
        balance_step([1.0, 1.0], [np.nan, 1.0], 0.01)
    with pytest.raises(InputError):
        balance_step([0.0, 1.0], [1.0, 1.0], 0.01)

def test_clamp_to_floor():
    """Components below the floor are raised, the total is kept"""
    t_on, hit = clamp_to_floor([-0.1, 0.6, 0.5], 0.01)
    assert hit
    assert t_on.min() >= 0.01 - 1e-15
    assert t_on.sum() == pytest.approx(1.0, rel=1e-15)
    same, hit = clamp_to_floor([0.2, 0.8], 0.01)
    assert not hit
    assert same == pytest.approx([0.2, 0.8])

def test_clamp_to_floor_without_room():
    """A total below one floor per target cannot be clamped"""
    with pytest.raises(PeriodTooShort):
        clamp_to_floor([1e-7, 2e-7], 1e-6)

def test_single_target():
    """M = 1 converges at once; f(T) is the always-observed peak"""
    s = Scenario(targets=(scalar_target(a=0.3487, q=1.1924, r=2.3140),), graph=MonitoringGraph(d=np.zeros((1, 1))))
    tour = solve_tsp(s.graph)
    trace = balance_until_converged(s, tour, 2.0)
    assert trace.status is BalanceStatus.CONVERGED
    assert trace.iterations == 0
    assert trace.final.spread == 0.0
    expected = algebraic_riccati(s.target(1))[0, 0]
    assert equalized_cost(s, tour, 2.0) == pytest.approx(expected, rel=1e-8)

def test_identical_targets_stay_balanced():
    """Symmetric two-target instance is balanced from the start"""
    s = Scenario(targets=(scalar_target(id=1), scalar_target(id=2)), graph=two_node_graph(0.5))
    tour = solve_tsp(s.graph)
    trace = balance_until_converged(s, tour, 3.0)
    assert trace.status is BalanceStatus.CONVERGED
    assert trace.final.t_on[0] == pytest.approx(trace.final.t_on[1])
    assert equalized_cost(s, tour, 3.0) == pytest.approx(trace.final.peaks[0], rel=1e-6)

def test_period_too_short():
    """No dwell time left"""
    s = Scenario(targets=(scalar_target(id=1), scalar_target(id=2)), graph=two_node_graph(0.5))
    tour = solve_tsp(s.graph)
    with pytest.raises(PeriodTooShort):
        balance_until_converged(s, tour, 1.0)

def test_tour_must_visit_each_target_once():
    """Repeated or missing targets and a wrong travel time are rejected"""
    s = Scenario(targets=(scalar_target(id=1), scalar_target(id=2)), graph=two_node_graph(0.5))
    for order in [(1, 2, 1), (1,), (1, 3)]:
        tour = Tour(order=order, travel_time=1.0)
        with pytest.raises(ScenarioError) as e:
            balance_until_converged(s, tour, 3.0)
        assert e.value.codes == ["InvalidSchedule"]
    with pytest.raises(ScenarioError):
        balance_until_converged(s, Tour(order=(1, 2), travel_time=0.4), 3.0)
    assert check_tour(s, solve_tsp(s.graph)).order == (1, 2)

def test_bad_start():
    """Starting allocation must fill the free time"""
    s = Scenario(targets=(scalar_target(id=1), scalar_target(id=2)), graph=two_node_graph(0.5))
    tour = solve_tsp(s.graph)
    with pytest.raises(InputError):
        balance_until_converged(s, tour, 3.0, t_on0=[1.0, 1.5])

def test_five_targets_equal_peaks(five_targets):
    """Balancing equalizes the five weighted peaks with unequal dwell times"""
    tour = solve_tsp(five_targets.graph)
    period = 2.0 * tour.travel_time
    trace = balance_until_converged(five_targets, tour, period)
    assert trace.status is BalanceStatus.CONVERGED
    final = trace.final
    assert final.rel_spread <= 1e-6
    assert max(final.t_on) - min(final.t_on) > 1e-3
    # conservation and monotone minimax
    total = period - tour.travel_time
    costs = [st.cost for st in trace.states]
    for st in trace.states:
        assert abs(sum(st.t_on) - total) <= 1e-12 * total
    assert all(b <= a * (1 + 1e-12) for a, b in zip(costs, costs[1:]))
    assert final.cost == pytest.approx(cost(trace.peak_sets))
    assert final.g_avg == pytest.approx(final.cost, rel=1e-6)

def test_conservation_over_many_iterations(five_targets):
    """At least 200 iterations keep the dwell budget to 1e-12"""
    tour = solve_tsp(five_targets.graph)
    period = 2.5 * tour.travel_time
    trace = balance_until_converged(five_targets, tour, period, kp=1e-3, max_iters=200, tol=0.0)
    assert len(trace.states) >= 150
    total = sum(trace.states[0].t_on)
    assert all(abs(sum(st.t_on) - total) <= 1e-12 * total for st in trace.states)

@pytest.mark.parametrize("seed", range(10))
def test_monotone_max_peak(seed):
    """The recorded largest peak never rises"""
    M = 2 + seed % 5
    s = random_scalar_scenario(seed, M)
    tour = solve_tsp(s.graph)
    trace = balance_until_converged(s, tour, 1.5 * tour.travel_time + 0.5, kp=0.05, max_iters=60)
    costs = [st.cost for st in trace.states]
    assert all(b <= a * (1 + 1e-12) for a, b in zip(costs, costs[1:]))

def test_start_independence():
    """Two starting allocations reach the same balanced allocation"""
    s = random_scalar_scenario(5, 3)
    tour = solve_tsp(s.graph)
    period = 2.0 * tour.travel_time + 1.0
    free = period - tour.travel_time
    tol = 1e-7
    a = balance_until_converged(s, tour, period, t_on0=[free / 3] * 3, tol=tol, kp=0.05)
    b = balance_until_converged(s, tour, period, t_on0=[0.6 * free, 0.3 * free, 0.1 * free], tol=tol, kp=0.05)
    assert a.status is BalanceStatus.CONVERGED and b.status is BalanceStatus.CONVERGED
    assert np.allclose(a.final.t_on, b.final.t_on, atol=1e-4)

def test_balanced_allocation_is_minimax():
    """Grid over the split of a two-target budget finds nothing better"""
    s = random_scalar_scenario(8, 2)
    tour = solve_tsp(s.graph)
    period = tour.travel_time + 1.5
    trace = balance_until_converged(s, tour, period, tol=1e-8, kp=0.05)
    balanced = trace.final.cost
    free = period - tour.travel_time
    for frac in np.linspace(0.02, 0.98, 49):
        peaks, _ = evaluate_allocation(s, tour, [frac * free, (1 - frac) * free], s.solver)
        assert cost(peaks) >= balanced * (1 - 1e-6)

def test_trace_frame():
    """Iteration table has per-target columns"""
    s = random_scalar_scenario(1, 2)
    tour = solve_tsp(s.graph)
    trace = balance_until_converged(s, tour, tour.travel_time + 1.0, max_iters=5)
    df = trace.frame()
    assert list(df.columns) == [
        "iteration", "t_on_1", "t_on_2", "peak_1", "peak_2", "g_avg", "spread", "cost", "kp",
    ]
    assert trace.to_dict()["status"] in {"Converged", "MaxIters", "FloorHit"}
