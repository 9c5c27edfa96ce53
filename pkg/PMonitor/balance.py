"""
Dwell-time balancing for single-visit cycles.

Each target's dwell time moves by k_p times the log-ratio of its weighted peak to the
geometric mean of all peaks. The log-ratios sum to zero, so the total dwell time (and
with it the period) is conserved, and the fixed point is the allocation with equal peaks.
"""
# import
## batteries
import logging
from enum import Enum
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple
## 3rd party
import numpy as np
import pandas as pd
## package
from PMonitor.config import SolverSettings
from PMonitor.errors import InputError, Issue, NonpositivePeak, PeriodTooShort, ScenarioError
from PMonitor.graph import Tour, tour_travel_time
from PMonitor.models import Scenario
from PMonitor.riccati import PeakSet, cycle_peaks
from PMonitor.schedule import single_visit_schedule, to_target_view
from PMonitor.utils import map_concurrent

logger = logging.getLogger(__name__)

# relative slack before a rise of the largest peak counts as an increase
MONOTONE_TOL = 1e-12
# fixed-point tolerance of the inner solves; peak noise must stay below the step size
INNER_CYCLE_TOL = 1e-12
# iterations between progress lines
LOG_EVERY = 100

# classes
class BalanceStatus(Enum):
    CONVERGED = "Converged"
    MAX_ITERS = "MaxIters"
    FLOOR_HIT = "FloorHit"


@dataclass(frozen=True)
class BalanceState:
    """One accepted iterate; vectors are ordered by target id."""
    iteration: int
    t_on: Tuple[float, ...]
    peaks: Tuple[float, ...]
    g_avg: float
    spread: float
    cost: float
    kp: float

    @property
    def rel_spread(self) -> float:
        return self.spread / self.g_avg

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "t_on": list(self.t_on),
            "peaks": list(self.peaks),
            "g_avg": self.g_avg,
            "spread": self.spread,
            "cost": self.cost,
            "kp": self.kp,
        }


@dataclass
class BalanceTrace:
    """Accepted iterates of one balancing run at a fixed period."""
    target_ids: Tuple[int, ...]
    period: float
    tour: Tour
    states: List[BalanceState] = field(default_factory=list)
    status: BalanceStatus = BalanceStatus.MAX_ITERS
    peak_sets: Tuple[PeakSet, ...] = ()
    omegas: Dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def final(self) -> BalanceState:
        return self.states[-1]

    @property
    def iterations(self) -> int:
        return self.final.iteration

    def allocation(self) -> Dict[int, float]:
        """Terminal dwell time per target id."""
        return dict(zip(self.target_ids, self.final.t_on))

    def frame(self) -> pd.DataFrame:
        """Iteration table: dwell time and weighted peak per target, g_avg, spread."""
        rows = []
        for st in self.states:
            row = {"iteration": st.iteration}
            row.update({f"t_on_{i}": t for i, t in zip(self.target_ids, st.t_on)})
            row.update({f"peak_{i}": p for i, p in zip(self.target_ids, st.peaks)})
            row.update({"g_avg": st.g_avg, "spread": st.spread, "cost": st.cost, "kp": st.kp})
            rows.append(row)
        return pd.DataFrame(rows)

    def to_dict(self) -> dict:
        return {
            "status": self.status.value,
            "period": self.period,
            "tour": self.tour.to_dict(),
            "target_ids": list(self.target_ids),
            "iterations": self.iterations,
            "final": self.final.to_dict(),
        }

# functions
def geometric_mean(values: Sequence[float]) -> float:
    return float(np.exp(np.mean(np.log(values))))

def balance_step(t_on: Sequence[float], peaks: Sequence[float], kp: float) -> np.ndarray:
    """
    One consensus update t_on,i += k_p * log(g_i / g_avg).
    Args:
        t_on: current dwell times (all > 0)
        peaks: weighted peaks g_i(||P_i||) (all > 0)
        kp: gain
    Returns:
        New dwell times with the same sum
    Raises:
        NonpositivePeak: a weighted peak is zero, negative or not finite
    """
    t_on = np.array(t_on, dtype=float)
    peaks = np.array(peaks, dtype=float)
    if t_on.shape != peaks.shape:
        raise InputError(f"{t_on.size} dwell times but {peaks.size} peaks")
    if not np.all(np.isfinite(peaks)) or np.any(peaks <= 0):
        raise NonpositivePeak(f"weighted peaks must be positive, got {peaks.tolist()}")
    if np.any(t_on <= 0):
        raise InputError(f"dwell times must be positive, got {t_on.tolist()}")
    logs = np.log(peaks)
    if np.ptp(logs) == 0:
        return t_on.copy()
    new = t_on + kp * (logs - logs.mean())
    return _conserve(new, t_on.sum())

def _conserve(t_on: np.ndarray, total: float) -> np.ndarray:
    return t_on + (total - t_on.sum()) / t_on.size

def clamp_to_floor(t_on: Sequence[float], floor: float) -> Tuple[np.ndarray, bool]:
    """
    Raise components below the floor to it, taking the difference from the others in
    proportion to their slack above the floor.
    Returns:
        (dwell times, whether the floor was hit)
    Raises:
        PeriodTooShort: the total is below one floor per component
    """
    t_on = np.array(t_on, dtype=float)
    total = t_on.sum()
    if total < t_on.size * floor:
        raise PeriodTooShort(
            f"free time {total:g} cannot give {t_on.size} dwell times of at least {floor:g}"
        )
    low = t_on < floor
    if not low.any():
        return t_on, False
    deficit = float(np.sum(floor - t_on[low]))
    slack = np.where(low, 0.0, t_on - floor)
    t_on = np.where(low, floor, t_on - deficit * slack / slack.sum())
    return _conserve(t_on, total), True

def evaluate_allocation(
    scenario: Scenario,
    tour: Tour,
    t_on: Sequence[float],
    settings: SolverSettings,
    omegas: Optional[Dict[int, np.ndarray]] = None,
    threads: int = 1,
) -> Tuple[List[PeakSet], Dict[int, np.ndarray]]:
    """
    Steady-state peaks of every target for a single-visit allocation.
    Args:
        t_on: dwell time per target, ordered by target id
        omegas: per-target warm starts of the fixed-point iteration
    Returns:
        (peak sets ordered by target id, fixed-point covariance per target id)
    """
    schedule = single_visit_schedule(tour, t_on, scenario.graph)
    timelines = to_target_view(schedule, scenario.ids)
    omegas = omegas or {}
    results = map_concurrent(
        lambda tl: cycle_peaks(
            scenario.target(tl.target_id), tl, scenario.norm, settings, omegas.get(tl.target_id)
        ),
        timelines, threads,
    )
    return [r[0] for r in results], {p.target_id: om for p, om in results}

def _state(iteration: int, t_on: np.ndarray, peak_sets: Sequence[PeakSet], kp: float) -> BalanceState:
    peaks = [p.max_weighted for p in peak_sets]
    return BalanceState(
        iteration=iteration,
        t_on=tuple(float(t) for t in t_on),
        peaks=tuple(peaks),
        g_avg=geometric_mean(peaks),
        spread=float(max(peaks) - min(peaks)),
        cost=float(max(peaks)),
        kp=kp,
    )

def check_tour(scenario: Scenario, tour: Tour) -> Tour:
    """
    Single-visit precondition: the order is a permutation of the target ids and the
    travel time matches the metric closure of the graph.
    Raises:
        ScenarioError: InvalidSchedule otherwise
    """
    if sorted(tour.order) != sorted(scenario.ids):
        raise ScenarioError([Issue(
            "InvalidSchedule",
            f"tour {list(tour.order)} must visit each of the targets {scenario.ids} exactly once",
        )])
    travel = tour_travel_time(scenario.graph.closure, tour.order)
    if abs(travel - tour.travel_time) > 1e-9 * max(1.0, travel):
        raise ScenarioError([Issue(
            "InvalidSchedule",
            f"tour travel time {tour.travel_time:g} differs from the graph value {travel:g}",
        )])
    return tour

def initial_allocation(scenario: Scenario, tour: Tour, period: float) -> np.ndarray:
    """Equal dwell times filling the free time of the cycle."""
    free = period - tour.travel_time
    if free <= 0:
        raise PeriodTooShort(
            f"period {period:g} does not exceed the tour travel time {tour.travel_time:g}"
        )
    return np.full(scenario.M, free / scenario.M)

def balance_until_converged(
    scenario: Scenario,
    tour: Tour,
    period: float,
    t_on0: Optional[Sequence[float]] = None,
    kp: Optional[float] = None,
    tol: Optional[float] = None,
    max_iters: Optional[int] = None,
    settings: Optional[SolverSettings] = None,
    omega0: Optional[Dict[int, np.ndarray]] = None,
    threads: int = 1,
) -> BalanceTrace:
    """
    Iterate the consensus update at a fixed period until the weighted peaks are equal.
    A step that raises the largest peak is retried with k_p halved; k_p doubles back
    (up to its configured value) after step_recovery clean iterations.
    Args:
        scenario: validated scenario
        tour: single-visit cycle through every target
        period: cycle period T (> tour travel time)
        t_on0: starting dwell times by target id (default: equal split of the free time)
        kp: gain (default settings.kp)
        tol: relative spread at which to stop (default settings.balance_tol)
        max_iters: bound on update attempts (default settings.max_iters)
        settings: solver settings (default: the scenario's)
        omega0: per-target warm starts for the first evaluation
        threads: worker threads for per-target solves
    Returns:
        BalanceTrace of accepted iterates
    Raises:
        PeriodTooShort: period <= travel time
        ScenarioError: the tour is not a single-visit cycle of the scenario
    """
    settings = settings or scenario.solver
    kp0 = settings.kp if kp is None else kp
    tol = settings.balance_tol if tol is None else tol
    max_iters = settings.max_iters if max_iters is None else max_iters
    inner = settings.updated(cycle_tol=min(settings.cycle_tol, INNER_CYCLE_TOL))
    if kp0 <= 0:
        raise InputError(f"kp must be positive, got {kp0}")
    check_tour(scenario, tour)

    start = initial_allocation(scenario, tour, period)
    free = float(start.sum())
    if t_on0 is not None:
        t_on0 = np.array(t_on0, dtype=float)
        if t_on0.shape != (scenario.M,) or np.any(t_on0 <= 0):
            raise InputError(f"starting dwell times must be {scenario.M} positive values")
        if abs(t_on0.sum() - free) > 1e-9 * free:
            raise InputError(
                f"starting dwell times sum to {t_on0.sum():g}, the free time is {free:g}"
            )
        start = _conserve(t_on0, free)
    floor = settings.floor_frac * period

    trace = BalanceTrace(target_ids=tuple(scenario.ids), period=period, tour=tour)
    t_on = start
    peak_sets, omegas = evaluate_allocation(scenario, tour, t_on, inner, omega0, threads)
    kp_now = kp0
    trace.states.append(_state(0, t_on, peak_sets, kp_now))

    clean = 0
    attempts = 0
    status = None
    while status is None:
        current = trace.final
        if scenario.M == 1 or current.rel_spread <= tol:
            status = BalanceStatus.CONVERGED
            break
        if attempts >= max_iters:
            status = BalanceStatus.MAX_ITERS
            break
        attempts += 1
        candidate = balance_step(t_on, current.peaks, kp_now)
        candidate, floor_hit = clamp_to_floor(candidate, floor)
        cand_sets, cand_omegas = evaluate_allocation(scenario, tour, candidate, inner, omegas, threads)
        cand_state = _state(current.iteration + 1, candidate, cand_sets, kp_now)
        if cand_state.cost > current.cost * (1 + MONOTONE_TOL):
            kp_now /= 2
            clean = 0
            logger.info(f"Balance step raised the peak; k_p halved to {kp_now:.3e}")
            if kp_now < kp0 * 1e-12:
                logger.warning("Step size underflow; stopping the balance iterations")
                status = BalanceStatus.MAX_ITERS
            continue
        t_on, peak_sets, omegas = candidate, cand_sets, cand_omegas
        trace.states.append(cand_state)
        if floor_hit:
            logger.warning(f"A dwell time reached the floor {floor:.3e}; stopping")
            status = BalanceStatus.FLOOR_HIT
            break
        clean += 1
        if clean >= settings.step_recovery and kp_now < kp0:
            kp_now = min(kp0, 2 * kp_now)
            clean = 0
        if cand_state.iteration % LOG_EVERY == 0:
            logger.info(
                f"Balance iteration {cand_state.iteration}: "
                f"relative spread {cand_state.rel_spread:.3e}, cost {cand_state.cost:.6g}"
            )

    if status is BalanceStatus.MAX_ITERS:
        logger.warning(
            f"Balancing stopped after {attempts} attempts with relative spread "
            f"{trace.final.rel_spread:.3e} (tol {tol:g})"
        )
    trace.status = status
    trace.peak_sets = tuple(peak_sets)
    trace.omegas = omegas
    return trace

def equalized_cost(
    scenario: Scenario,
    tour: Tour,
    period: float,
    **kwargs,
) -> float:
    """
    Balanced peak f(T): g_avg at the terminal iteration.
    Keyword arguments are passed to balance_until_converged.
    """
    return balance_until_converged(scenario, tour, period, **kwargs).final.g_avg
