"""
Periodic Riccati covariance under intermittent observation.

The covariance obeys
    dOmega/dt = A Omega + Omega A' + Q - eta(t) Omega G Omega,   G = H' R^-1 H,
with eta in {0, 1} piecewise constant over the target's timeline. Writing
Omega = Y X^-1 turns this into the linear system
    d/dt [X; Y] = [[-A', eta G], [Q, A]] [X; Y],
which is integrated with fixed-step classical Runge-Kutta. For a linear system one
RK4 step is the matrix I + hH + (hH)^2/2 + (hH)^3/6 + (hH)^4/24, so a stretch of n
steps is a matrix power and the covariance is recovered by the fractional map
Omega -> (S21 + S22 Omega)(S11 + S12 Omega)^-1.
"""
# import
## batteries
import math
import logging
from functools import lru_cache
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple
## 3rd party
import numpy as np
import pandas as pd
from scipy.linalg import solve_continuous_are
## package
from PMonitor.config import SolverSettings
from PMonitor.errors import NoObservation, NonConvergence, StepBlowup
from PMonitor.models import Norm, Scenario, TargetModel, matrix_norm
from PMonitor.schedule import AgentSchedule, Segment, TargetTimeline, to_target_view
from PMonitor.utils import flatten_matrix, map_concurrent

logger = logging.getLogger(__name__)

# largest growth (rho * h * steps) folded into one matrix power
MAX_CHUNK_SPAN = 4.0
# one-period propagators with larger entries are not used for the fixed-point iteration
PERIOD_MATRIX_LIMIT = 1e8

# classes
@dataclass(frozen=True, eq=False)
class SegmentMap:
    """RK4 propagator of a constant-eta stretch: `steps` steps of size h."""
    eta: int
    steps: int
    h: float
    step_matrix: np.ndarray
    rho: float

    def __post_init__(self):
        chunk = self.steps if self.rho == 0 else int(MAX_CHUNK_SPAN / (self.rho * self.h))
        chunk = max(1, min(self.steps, chunk))
        reps, rest = divmod(self.steps, chunk)
        chunks = [(np.linalg.matrix_power(self.step_matrix, chunk), reps)]
        if rest:
            chunks.append((np.linalg.matrix_power(self.step_matrix, rest), 1))
        object.__setattr__(self, "_chunks", tuple(chunks))

    def apply(self, omega: np.ndarray, guard: float) -> np.ndarray:
        for S, reps in self._chunks:
            for _ in range(reps):
                omega = _lft(S, omega)
                if not np.all(np.isfinite(omega)) or np.max(np.abs(omega)) > guard:
                    raise StepBlowup(
                        f"covariance exceeded {guard:g} (eta={self.eta}, step {self.h:g}); "
                        "the unobserved stretch is too long for this drift"
                    )
        return omega

    def matrix(self) -> np.ndarray:
        """The whole stretch as one propagator."""
        out = np.eye(self.step_matrix.shape[0])
        for S, reps in self._chunks:
            out = np.linalg.matrix_power(S, reps) @ out
        return out

    def subdivide(self, parts: int) -> "SegmentMap":
        """One of `parts` equal pieces; steps must be divisible by parts."""
        if self.steps % parts:
            raise ValueError(f"{self.steps} steps cannot be split into {parts} parts")
        return SegmentMap(
            eta=self.eta, steps=self.steps // parts, h=self.h,
            step_matrix=self.step_matrix, rho=self.rho,
        )


@dataclass(frozen=True, eq=False)
class CovTrajectory:
    """Converged periodic covariance over one cycle [0, period]."""
    target_id: int
    period: float
    times: np.ndarray            # (n,)
    omegas: np.ndarray           # (n, L, L)
    tau_start: Tuple[float, ...]
    tau_end: Tuple[float, ...]
    upper: Tuple[np.ndarray, ...]
    lower: Tuple[np.ndarray, ...]
    cycles: int
    defect: float

    @property
    def omega0(self) -> np.ndarray:
        return self.omegas[0]


@dataclass(frozen=True, eq=False)
class PeakSet:
    """Upper peaks (visit starts), lower peaks (visit ends) and weighted upper peaks."""
    target_id: int
    upper: Tuple[np.ndarray, ...]
    lower: Tuple[np.ndarray, ...]
    weighted: Tuple[float, ...]

    @property
    def max_weighted(self) -> float:
        return max(self.weighted)

    def to_dict(self) -> dict:
        return {
            "target_id": self.target_id,
            "upper": [u.tolist() for u in self.upper],
            "lower": [l.tolist() for l in self.lower],
            "weighted": list(self.weighted),
        }

# functions
def hamiltonian(m: TargetModel, eta: int) -> np.ndarray:
    return np.block([[-m.A.T, eta * m.G], [m.Q, m.A]])

def _rk4_matrix(Hm: np.ndarray, h: float) -> np.ndarray:
    Z = h * Hm
    Z2 = Z @ Z
    Z3 = Z2 @ Z
    return np.eye(Hm.shape[0]) + Z + Z2 / 2.0 + Z3 / 6.0 + Z3 @ Z / 24.0

def _lft(S: np.ndarray, omega: np.ndarray) -> np.ndarray:
    L = omega.shape[0]
    num = S[L:, :L] + S[L:, L:] @ omega
    den = S[:L, :L] + S[:L, L:] @ omega
    out = np.linalg.solve(den.T, num.T).T
    return 0.5 * (out + out.T)

@lru_cache(maxsize=1024)
def characteristic_rate(m: TargetModel) -> float:
    """Fastest rate among the drift and the observed Hamiltonian."""
    drift = float(np.max(np.abs(np.linalg.eigvals(m.A).real)))
    observed = float(np.max(np.abs(np.linalg.eigvals(hamiltonian(m, 1)))))
    return max(drift, observed)

def step_count(m: TargetModel, length: float, settings: SolverSettings, align: int = 1) -> int:
    """
    Number of RK4 steps over a stretch: step <= length / min_steps_per_segment and
    step <= char_step_frac / rate, rounded up to a multiple of align.
    """
    if length <= 0:
        return 0
    dt_max = length / settings.min_steps_per_segment
    rate = characteristic_rate(m)
    if rate > 0:
        dt_max = min(dt_max, settings.char_step_frac / rate)
    n = max(1, math.ceil(length / dt_max - 1e-9))
    return align * math.ceil(n / align)

def segment_map(m: TargetModel, eta: int, length: float, steps: int) -> SegmentMap:
    """RK4 propagator over `length` split into `steps` equal steps."""
    Hm = hamiltonian(m, eta)
    h = length / steps
    return SegmentMap(
        eta=eta, steps=steps, h=h,
        step_matrix=_rk4_matrix(Hm, h),
        rho=float(np.max(np.abs(np.linalg.eigvals(Hm)))),
    )

def propagate(
    omega0: np.ndarray,
    m: TargetModel,
    observed: bool,
    dt: float,
    step: Optional[float] = None,
    settings: Optional[SolverSettings] = None,
) -> np.ndarray:
    """
    Integrate the covariance ODE over dt with the observation indicator held fixed.
    Args:
        omega0: symmetric positive semidefinite start value
        m: target model
        observed: eta = 1 if True
        dt: duration (>= 0)
        step: RK4 step; defaults to the settings' step rule
        settings: solver settings (overflow guard, step rule)
    Returns:
        Symmetrized covariance after dt
    Raises:
        StepBlowup: an entry exceeded the overflow guard
    """
    settings = settings or SolverSettings()
    omega = np.atleast_2d(np.array(omega0, dtype=float))
    if dt < 0:
        raise ValueError(f"dt must be nonnegative, got {dt}")
    if dt == 0:
        return 0.5 * (omega + omega.T)
    eta = 1 if observed else 0
    steps = math.ceil(dt / step - 1e-9) if step else step_count(m, dt, settings)
    return segment_map(m, eta, dt, max(1, steps)).apply(omega, settings.overflow_guard)

def algebraic_riccati(m: TargetModel) -> np.ndarray:
    """Stationary covariance under continuous observation."""
    X = solve_continuous_are(m.A.T, m.H.T, m.Q, m.R)
    return 0.5 * (X + X.T)

def timeline_maps(
    m: TargetModel, tl: TargetTimeline, settings: SolverSettings
) -> List[Tuple[Segment, SegmentMap]]:
    """Per-segment propagators; step counts are multiples of the dense sample count."""
    if not any(t > 0 for t in tl.t_on):
        raise NoObservation(f"target {tl.target_id} is never observed for a positive time")
    maps = []
    for seg in tl.segments():
        n = step_count(m, seg.length, settings, align=settings.dense_samples)
        maps.append((seg, segment_map(m, seg.eta, seg.length, n)))
    return maps

def cycle_map(
    omega: np.ndarray, maps: Sequence[Tuple[Segment, SegmentMap]], guard: float
) -> np.ndarray:
    """Covariance one period later."""
    for _, smap in maps:
        omega = smap.apply(omega, guard)
    return omega

def period_matrix(maps: Sequence[Tuple[Segment, SegmentMap]]) -> Optional[np.ndarray]:
    """
    One-period propagator (product of the segment propagators), or None when its
    entries exceed PERIOD_MATRIX_LIMIT.
    """
    n = maps[0][1].step_matrix.shape[0]
    Phi = np.eye(n)
    for _, smap in maps:
        Phi = smap.matrix() @ Phi
        if not np.all(np.isfinite(Phi)) or np.max(np.abs(Phi)) > PERIOD_MATRIX_LIMIT:
            return None
    return Phi

def _fixed_point(
    maps: Sequence[Tuple[Segment, SegmentMap]],
    omega0: np.ndarray,
    settings: SolverSettings,
    target_id: int,
) -> Tuple[np.ndarray, int]:
    """Iterate the cycle map, in one step when the one-period propagator is well scaled."""
    Phi = period_matrix(maps)
    omega = omega0
    gap = math.inf
    for cycle in range(1, settings.max_cycles + 1):
        if Phi is None:
            nxt = cycle_map(omega, maps, settings.overflow_guard)
        else:
            nxt = _lft(Phi, omega)
            if not np.all(np.isfinite(nxt)) or np.max(np.abs(nxt)) > settings.overflow_guard:
                raise StepBlowup(f"target {target_id}: covariance exceeded {settings.overflow_guard:g}")
        gap = float(np.linalg.norm(nxt - omega, "fro"))
        omega = nxt
        if gap <= settings.cycle_tol * (1.0 + np.linalg.norm(omega, "fro")):
            return omega, cycle
    raise NonConvergence(
        f"target {target_id}: cycle map not converged after {settings.max_cycles} cycles "
        f"(last change {gap:.3e})"
    )

def _initial(m: TargetModel, omega0: Optional[np.ndarray]) -> np.ndarray:
    if omega0 is None:
        return np.eye(m.L)
    return np.atleast_2d(np.array(omega0, dtype=float))

def _walk(
    maps: Sequence[Tuple[Segment, SegmentMap]],
    omega: np.ndarray,
    settings: SolverSettings,
    dense: bool,
) -> Tuple[List[Tuple[float, np.ndarray]], List[float], List[np.ndarray]]:
    """One pass over the cycle, recording segment boundaries (and dense samples)."""
    boundaries = [(0.0, omega)]
    times, samples = [0.0], [omega]
    for seg, smap in maps:
        if dense:
            parts = settings.dense_samples
            sub = smap.subdivide(parts)
            for j in range(1, parts + 1):
                omega = sub.apply(omega, settings.overflow_guard)
                times.append(seg.start + seg.length * j / parts)
                samples.append(omega)
        else:
            omega = smap.apply(omega, settings.overflow_guard)
        boundaries.append((seg.end, omega))
    return boundaries, times, samples

def _at(boundaries: List[Tuple[float, np.ndarray]], t: float) -> np.ndarray:
    k = int(np.argmin([abs(b - t) for b, _ in boundaries]))
    return boundaries[k][1]

def _peaks_from(
    boundaries: List[Tuple[float, np.ndarray]], tl: TargetTimeline
) -> Tuple[Tuple[np.ndarray, ...], Tuple[np.ndarray, ...]]:
    upper = tuple(_at(boundaries, t) for t in tl.tau_start)
    lower = tuple(_at(boundaries, t) for t in tl.tau_end)
    return upper, lower

def steady_state_cycle(
    m: TargetModel,
    tl: TargetTimeline,
    settings: Optional[SolverSettings] = None,
    omega0: Optional[np.ndarray] = None,
) -> CovTrajectory:
    """
    Periodic steady-state covariance: fixed point of the cycle map, then one dense pass.
    Args:
        m: target model
        tl: the target's timeline
        settings: solver settings
        omega0: start of the fixed-point iteration (identity by default)
    Raises:
        NoObservation: every t_on is zero
        NonConvergence: max_cycles exhausted
    """
    settings = settings or SolverSettings()
    maps = timeline_maps(m, tl, settings)
    omega, cycles = _fixed_point(maps, _initial(m, omega0), settings, tl.target_id)
    boundaries, times, samples = _walk(maps, omega, settings, dense=True)
    upper, lower = _peaks_from(boundaries, tl)
    defect = float(np.linalg.norm(samples[-1] - samples[0], "fro"))
    return CovTrajectory(
        target_id=tl.target_id,
        period=tl.period,
        times=np.array(times),
        omegas=np.array(samples),
        tau_start=tl.tau_start,
        tau_end=tl.tau_end,
        upper=upper,
        lower=lower,
        cycles=cycles,
        defect=defect,
    )

def extract_peaks(
    traj: CovTrajectory, tl: TargetTimeline, m: TargetModel, norm: Norm = Norm.TRACE
) -> PeakSet:
    """Covariance at every visit start (upper) and end (lower), plus g(||upper||)."""
    if traj.target_id != tl.target_id:
        raise ValueError(f"trajectory of target {traj.target_id} given with timeline of {tl.target_id}")
    return PeakSet(
        target_id=tl.target_id,
        upper=traj.upper,
        lower=traj.lower,
        weighted=tuple(m.weight(matrix_norm(P, norm)) for P in traj.upper),
    )

def cycle_peaks(
    m: TargetModel,
    tl: TargetTimeline,
    norm: Norm = Norm.TRACE,
    settings: Optional[SolverSettings] = None,
    omega0: Optional[np.ndarray] = None,
) -> Tuple[PeakSet, np.ndarray]:
    """
    Peaks of the periodic steady state without dense output.
    Returns:
        (peaks, fixed-point covariance at the start of the cycle) - the latter
        warm-starts the next solve
    """
    settings = settings or SolverSettings()
    maps = timeline_maps(m, tl, settings)
    omega, _ = _fixed_point(maps, _initial(m, omega0), settings, tl.target_id)
    boundaries, _, _ = _walk(maps, omega, settings, dense=False)
    upper, lower = _peaks_from(boundaries, tl)
    peaks = PeakSet(
        target_id=tl.target_id,
        upper=upper,
        lower=lower,
        weighted=tuple(m.weight(matrix_norm(P, norm)) for P in upper),
    )
    return peaks, omega

def cost(peaks: Sequence[PeakSet]) -> float:
    """Minimax cost: the largest weighted upper peak over all targets."""
    if not peaks:
        raise ValueError("cost needs at least one target")
    return max(p.max_weighted for p in peaks)

def sequence_cost(
    scenario: Scenario,
    schedule: AgentSchedule,
    settings: Optional[SolverSettings] = None,
    threads: int = 1,
) -> float:
    """Cost of an arbitrary (possibly multi-visit) schedule."""
    settings = settings or scenario.solver
    timelines = to_target_view(schedule, scenario.ids)
    peaks = map_concurrent(
        lambda tl: cycle_peaks(scenario.target(tl.target_id), tl, scenario.norm, settings)[0],
        timelines, threads,
    )
    return cost(peaks)

def peak_sensitivity_fd(
    m: TargetModel,
    tl: TargetTimeline,
    which: str,
    index: int,
    h: float,
    peak: int = 0,
    settings: Optional[SolverSettings] = None,
) -> np.ndarray:
    """
    Central finite difference of the upper peak `peak` with respect to t_on[index]
    or t_off[index].
    Args:
        which: "t_on" or "t_off"
        index: visit index (0-based) whose duration is perturbed
        h: perturbation
        peak: visit index (0-based) of the peak being differentiated
    Returns:
        Symmetric matrix estimate of the derivative
    """
    base = tl.t_on[index] if which == "t_on" else tl.t_off[index]
    if base <= h:
        raise ValueError(f"{which}[{index}] = {base} must exceed the step h = {h}")
    settings = (settings or SolverSettings()).updated(
        cycle_tol=min((settings or SolverSettings()).cycle_tol, 1e-13)
    )
    plus, omega = cycle_peaks(m, tl.perturbed(which, index, h), settings=settings)
    minus, _ = cycle_peaks(m, tl.perturbed(which, index, -h), settings=settings, omega0=omega)
    D = (plus.upper[peak] - minus.upper[peak]) / (2.0 * h)
    return 0.5 * (D + D.T)

def trajectory_frame(traj: CovTrajectory, m: TargetModel, norm: Norm = Norm.TRACE) -> pd.DataFrame:
    """Dense trajectory as rows (target_id, t, omega entries, weighted norm)."""
    rows = []
    for t, X in zip(traj.times, traj.omegas):
        row = {"target_id": traj.target_id, "t": float(t)}
        row.update(flatten_matrix(X))
        row["weighted"] = m.weight(matrix_norm(X, norm))
        rows.append(row)
    return pd.DataFrame(rows)

def peaks_frame(peaks: Sequence[PeakSet], norm: Norm = Norm.TRACE) -> pd.DataFrame:
    rows = []
    for p in peaks:
        for k, (U, Lo, w) in enumerate(zip(p.upper, p.lower, p.weighted), start=1):
            rows.append({
                "target_id": p.target_id, "visit": k,
                "upper_norm": matrix_norm(U, norm), "lower_norm": matrix_norm(Lo, norm),
                "weighted_peak": w,
            })
    return pd.DataFrame(rows)
