"""
Outer search over the cycle period and the end-to-end pipeline
(tour, balanced allocation per period, golden-section search over the period).
"""
# import
## batteries
import math
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple
## 3rd party
import numpy as np
import pandas as pd
## package
from PMonitor.balance import BalanceStatus, BalanceTrace, balance_until_converged
from PMonitor.config import SolverSettings
from PMonitor.errors import InvalidBracket, PMonitorError
from PMonitor.graph import Tour, solve_tsp
from PMonitor.models import Scenario
from PMonitor.riccati import CovTrajectory, PeakSet, steady_state_cycle
from PMonitor.schedule import AgentSchedule, single_visit_schedule, to_target_view
from PMonitor.utils import map_concurrent

logger = logging.getLogger(__name__)

GOLDEN_RATIO = (1 + math.sqrt(5)) / 2
# relative spread below which the terminal peaks count as equal
EQUAL_PEAKS_RTOL = 1e-4

# classes
@dataclass
class PeriodSearchResult:
    t_star: float
    f_star: float
    samples: List[Tuple[float, float]]
    bracket: Tuple[float, float]
    iterations: int
    brackets: List[Tuple[float, float]] = field(default_factory=list)

    @property
    def evaluations(self) -> int:
        return len(self.samples)

    def sample_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [{"sample": k, "T": t, "f": f} for k, (t, f) in enumerate(self.samples, start=1)],
            columns=["sample", "T", "f"],
        )

    def to_dict(self) -> dict:
        return {
            "t_star": self.t_star,
            "f_star": self.f_star,
            "bracket": list(self.bracket),
            "iterations": self.iterations,
            "evaluations": self.evaluations,
            "samples": [{"T": t, "f": f} for t, f in self.samples],
        }


@dataclass
class OptimizationReport:
    tour: Tour
    period: float
    allocation: Dict[int, float]
    peaks: Tuple[PeakSet, ...]
    cost: float
    trace: BalanceTrace
    search: PeriodSearchResult
    bracket_adjusted: bool = False
    boundary: bool = False
    trajectories: Dict[int, CovTrajectory] = field(default_factory=dict)

    @property
    def rel_spread(self) -> float:
        return self.trace.final.rel_spread

    @property
    def equal_peaks(self) -> bool:
        return self.rel_spread <= EQUAL_PEAKS_RTOL

    def schedule(self, scenario: Scenario) -> AgentSchedule:
        t_on = [self.allocation[i] for i in scenario.ids]
        return single_visit_schedule(self.tour, t_on, scenario.graph)

    def schedule_dict(self) -> dict:
        """Schedule file contents: visits in tour order with their dwell times."""
        return {
            "visits": list(self.tour.order),
            "dwell": [self.allocation[i] for i in self.tour.order],
        }

    def summary_rows(self) -> List[dict]:
        return [
            {"target_id": p.target_id, "t_on": self.allocation[p.target_id], "peak": p.max_weighted}
            for p in self.peaks
        ]

    def to_dict(self) -> dict:
        return {
            "tour": self.tour.to_dict(),
            "period": self.period,
            "allocation": {str(k): v for k, v in self.allocation.items()},
            "peaks": [p.to_dict() for p in self.peaks],
            "cost": self.cost,
            "f_star": self.search.f_star,
            "rel_spread": self.rel_spread,
            "equal_peaks": self.equal_peaks,
            "balance_status": self.trace.status.value,
            "balance_iterations": self.trace.iterations,
            "bracket_adjusted": self.bracket_adjusted,
            "boundary": self.boundary,
            "search": self.search.to_dict(),
        }


class EqualizedCost:
    """
    f(T) for a fixed tour: the balanced peak at period T.
    Each evaluation warm-starts from the terminal allocation of the nearest period
    already evaluated, rescaled to the new free time.
    """
    def __init__(
        self,
        scenario: Scenario,
        tour: Tour,
        settings: Optional[SolverSettings] = None,
        threads: int = 1,
        kp: Optional[float] = None,
        tol: Optional[float] = None,
        max_iters: Optional[int] = None,
    ):
        self.scenario = scenario
        self.tour = tour
        self.settings = settings or scenario.solver
        self.threads = threads
        self.balance_kwargs = {"kp": kp, "tol": tol, "max_iters": max_iters}
        self.traces: Dict[float, BalanceTrace] = {}

    def warm_start(self, period: float):
        if not self.traces:
            return None, None
        nearest = min(self.traces, key=lambda t: (abs(t - period), t))
        trace = self.traces[nearest]
        travel = self.tour.travel_time
        scale = (period - travel) / (nearest - travel)
        return np.array(trace.final.t_on) * scale, trace.omegas

    def __call__(self, period: float) -> float:
        t_on0, omegas = self.warm_start(period)
        try:
            trace = balance_until_converged(
                self.scenario, self.tour, period, t_on0=t_on0, settings=self.settings,
                omega0=omegas, threads=self.threads, **self.balance_kwargs,
            )
        except PMonitorError as e:
            logger.error(f"Evaluating the balanced peak at T={period:.6g} failed: {e}")
            e.context = {"search_period": period}
            raise
        self.traces[period] = trace
        value = trace.final.g_avg
        logger.info(
            f"f({period:.6g}) = {value:.8g} after {trace.iterations} iterations ({trace.status.value})"
        )
        return value

# functions
def golden_section(
    f: Callable[[float], float], t_min: float, t_max: float, eps: float
) -> PeriodSearchResult:
    """
    Golden-section minimization of a unimodal function on [t_min, t_max].
    Loops while the bracket is at least eps wide; every iteration costs one new
    evaluation. Returns the midpoint of the final bracket.
    Raises:
        InvalidBracket: t_max <= t_min, t_min < 0, eps <= 0, or a non-finite value
    """
    if not all(math.isfinite(v) for v in (t_min, t_max, eps)):
        raise InvalidBracket(f"bracket [{t_min}, {t_max}] and eps {eps} must be finite")
    if t_min < 0 or t_max <= t_min:
        raise InvalidBracket(f"invalid bracket [{t_min}, {t_max}]")
    if eps <= 0:
        raise InvalidBracket(f"eps must be positive, got {eps}")

    cache: Dict[float, float] = {}
    samples: List[Tuple[float, float]] = []

    def ev(t: float) -> float:
        if t not in cache:
            cache[t] = float(f(t))
            samples.append((t, cache[t]))
        return cache[t]

    a, b = t_min, t_max
    brackets = [(a, b)]
    iterations = 0
    if b - a >= eps:
        t1 = b - (b - a) / GOLDEN_RATIO
        t2 = a + (b - a) / GOLDEN_RATIO
        f1, f2 = ev(t1), ev(t2)
        while b - a >= eps:
            iterations += 1
            if f1 <= f2:
                b, t2, f2 = t2, t1, f1
                t1 = b - (b - a) / GOLDEN_RATIO
                brackets.append((a, b))
                if b - a < eps:
                    break
                f1 = ev(t1)
            else:
                a, t1, f1 = t1, t2, f2
                t2 = a + (b - a) / GOLDEN_RATIO
                brackets.append((a, b))
                if b - a < eps:
                    break
                f2 = ev(t2)
    t_star = 0.5 * (a + b)
    f_star = ev(t_star)
    return PeriodSearchResult(
        t_star=t_star, f_star=f_star, samples=samples, bracket=(t_min, t_max),
        iterations=iterations, brackets=brackets,
    )

def period_bracket(
    tour: Tour, settings: SolverSettings,
    tmin_scale: Optional[float] = None, tmax_scale: Optional[float] = None,
) -> Tuple[float, float, bool]:
    """
    Search bracket [tmin_scale * t_travel, tmax_scale * t_travel], with the lower end
    raised to lower_margin * t_travel when it would leave no dwell time.
    Returns:
        (t_min, t_max, whether the lower end was raised)
    """
    travel = tour.travel_time
    if travel <= 0:
        low, high = settings.fallback_bracket
        return float(low), float(high), False
    lo = (settings.tmin_scale if tmin_scale is None else tmin_scale) * travel
    hi = (settings.tmax_scale if tmax_scale is None else tmax_scale) * travel
    floor = settings.lower_margin * travel
    adjusted = lo < floor
    if adjusted:
        logger.info(f"Raising the lower period bound from {lo:.6g} to {floor:.6g}")
        lo = floor
    if hi <= lo:
        raise InvalidBracket(f"upper period bound {hi:g} is not above the lower bound {lo:g}")
    return lo, hi, adjusted

def sweep_period(f: Callable[[float], float], grid: Sequence[float]) -> pd.DataFrame:
    """f evaluated at every period of the grid, in grid order."""
    return pd.DataFrame([{"T": float(t), "f": float(f(t))} for t in grid], columns=["T", "f"])

def optimize_period(
    scenario: Scenario,
    tour: Tour,
    eps: Optional[float] = None,
    tmin_scale: Optional[float] = None,
    tmax_scale: Optional[float] = None,
    settings: Optional[SolverSettings] = None,
    threads: int = 1,
    kp: Optional[float] = None,
    tol: Optional[float] = None,
    max_iters: Optional[int] = None,
) -> OptimizationReport:
    """
    Golden-section search of the balanced peak over the period.
    Args:
        scenario: validated scenario
        tour: single-visit cycle
        eps: bracket width at which the search stops (default eps_scale * t_travel)
        tmin_scale, tmax_scale: bracket as multiples of the travel time
        settings: solver settings (default: the scenario's)
        threads: worker threads for per-target solves
        kp, tol, max_iters: balance overrides
    Returns:
        OptimizationReport at the optimal period
    """
    settings = settings or scenario.solver
    t_min, t_max, adjusted = period_bracket(tour, settings, tmin_scale, tmax_scale)
    if eps is None:
        width = tour.travel_time if tour.travel_time > 0 else t_max - t_min
        eps = settings.eps_scale * width
    f = EqualizedCost(scenario, tour, settings, threads, kp=kp, tol=tol, max_iters=max_iters)
    logger.info(f"Searching the period over [{t_min:.6g}, {t_max:.6g}] with eps {eps:.3g}")
    search = golden_section(f, t_min, t_max, eps)
    trace = f.traces[search.t_star]
    if trace.status is not BalanceStatus.CONVERGED:
        logger.warning(f"Balancing at the optimal period ended with {trace.status.value}")
    boundary = (search.t_star - t_min <= eps) or (t_max - search.t_star <= eps)
    if boundary:
        logger.warning(f"Optimal period {search.t_star:.6g} lies at the edge of the bracket")
    return OptimizationReport(
        tour=tour,
        period=search.t_star,
        allocation=trace.allocation(),
        peaks=trace.peak_sets,
        cost=trace.final.cost,
        trace=trace,
        search=search,
        bracket_adjusted=adjusted,
        boundary=boundary,
    )

def final_trajectories(
    scenario: Scenario, report: OptimizationReport, threads: int = 1
) -> Dict[int, CovTrajectory]:
    """Dense limit cycle of every target on the optimized schedule."""
    timelines = to_target_view(report.schedule(scenario), scenario.ids)
    trajs = map_concurrent(
        lambda tl: steady_state_cycle(
            scenario.target(tl.target_id), tl, scenario.solver, report.trace.omegas.get(tl.target_id)
        ),
        timelines, threads,
    )
    return {tr.target_id: tr for tr in trajs}

def run_pipeline(
    scenario: Scenario,
    eps: Optional[float] = None,
    tmin_scale: Optional[float] = None,
    tmax_scale: Optional[float] = None,
    threads: int = 1,
    dense: bool = True,
    **balance_kwargs,
) -> OptimizationReport:
    """
    Tour (exact up to tsp_exact_cap nodes), period search, then the dense limit cycle
    at the optimum.
    """
    settings = scenario.solver
    tour = solve_tsp(scenario.graph, cap=settings.tsp_exact_cap)
    logger.info(f"Tour {list(tour.order)} with travel time {tour.travel_time:.6g}")
    report = optimize_period(
        scenario, tour, eps=eps, tmin_scale=tmin_scale, tmax_scale=tmax_scale,
        settings=settings, threads=threads, **balance_kwargs,
    )
    if dense:
        report.trajectories = final_trajectories(scenario, report, threads)
    return report
