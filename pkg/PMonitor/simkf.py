"""
Monte-Carlo simulation of the targets, their continuous measurements and the
Kalman-Bucy filter driven by the agent's schedule.

The state is integrated with Euler-Maruyama, the filter with an explicit step whose
gain is taken at the start of each step, and the filter covariance with the same RK4
propagator as the riccati module. Steps are aligned to every dwell and travel boundary,
so the observation indicator never switches inside a step. Each (seed, target, run)
triple owns its own random stream.
"""
# import
## batteries
import math
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence
## 3rd party
import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field
## package
from PMonitor.errors import InputError, InsufficientRuns, StepBlowup
from PMonitor.models import Scenario, TargetModel
from PMonitor.riccati import characteristic_rate, segment_map
from PMonitor.schedule import AgentSchedule, cycle_period, event_list
from PMonitor.utils import flatten_matrix, map_concurrent

logger = logging.getLogger(__name__)

# classes
class SimConfig(BaseModel):
    """Simulation settings; horizon (time units) truncates the run inside its last cycle."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    seed: int = Field(0, ge=0)
    cycles: int = Field(20, ge=3)
    dt_sim: float = Field(1e-3, gt=0)
    stride: int = Field(10, ge=1)
    omega0_scale: float = Field(1.0, gt=0)
    noise: bool = True
    horizon: Optional[float] = Field(None, gt=0)


@dataclass(frozen=True)
class CycleGrid:
    """Simulation steps of one cycle; observed[k] is the target watched during step k (0 while traveling)."""
    h: np.ndarray
    observed: np.ndarray
    t: np.ndarray
    event_starts: np.ndarray
    period: float

    @property
    def K(self) -> int:
        return self.h.size

    def observed_time(self, target_id: int) -> float:
        return float(self.h[self.observed == target_id].sum())


@dataclass
class TargetSimTrace:
    """Recorded samples of one target in one run."""
    target_id: int
    times: np.ndarray        # (n,)
    phi: np.ndarray          # (n, L) true state
    phi_hat: np.ndarray      # (n, L) estimate
    omega: np.ndarray        # (n, L, L) filter covariance
    eta: np.ndarray          # (n,) observation indicator of the step starting at the sample
    innovation: np.ndarray   # (n, m) innovation increment of the step ending at the sample

    @property
    def error(self) -> np.ndarray:
        return self.phi - self.phi_hat

    def omega_at(self, t: float) -> np.ndarray:
        return self.omega[int(np.argmin(np.abs(self.times - t)))]


@dataclass
class SimTrace:
    config: SimConfig
    run: int
    period: float
    targets: Dict[int, TargetSimTrace] = field(default_factory=dict)

    def frame(self) -> pd.DataFrame:
        """Long table (t, target_id, phi_*, phi_hat_*, omega_*_*, eta)."""
        frames = []
        for tid, tr in sorted(self.targets.items()):
            cols = {"t": tr.times, "target_id": np.full(tr.times.size, tid)}
            for j in range(tr.phi.shape[1]):
                cols[f"phi_{j + 1}"] = tr.phi[:, j]
                cols[f"phi_hat_{j + 1}"] = tr.phi_hat[:, j]
            omega_cols = pd.DataFrame([flatten_matrix(X) for X in tr.omega])
            df = pd.concat([pd.DataFrame(cols), omega_cols], axis=1)
            df["eta"] = tr.eta
            frames.append(df)
        return pd.concat(frames, ignore_index=True)


@dataclass(frozen=True)
class ErrorStats:
    """Sample statistics of the estimation error at one phase of the final cycle."""
    target_id: int
    phase: float
    n_runs: int
    covariance: np.ndarray
    std_error: np.ndarray
    omega: np.ndarray
    normalized_variance: np.ndarray

    def to_dict(self) -> dict:
        return {
            "target_id": self.target_id,
            "phase": self.phase,
            "n_runs": self.n_runs,
            "covariance": self.covariance.tolist(),
            "std_error": self.std_error.tolist(),
            "omega": self.omega.tolist(),
            "normalized_variance": self.normalized_variance.tolist(),
        }

# functions
def target_rng(seed: int, target_id: int, run: int) -> np.random.Generator:
    """Counter-based stream of one (seed, target, run) triple."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, target_id, run])))

def cycle_grid(schedule: AgentSchedule, dt_sim: float) -> CycleGrid:
    """Split every event of the cycle into equal steps no longer than dt_sim."""
    hs, observed, times, starts = [], [], [], []
    for e in event_list(schedule):
        if e.duration <= 0:
            continue
        n = max(1, math.ceil(e.duration / dt_sim - 1e-9))
        h = e.duration / n
        starts.append(len(hs))
        hs.extend([h] * n)
        observed.extend([e.target if e.kind == "dwell" else 0] * n)
        times.extend(e.start + j * h for j in range(n))
    period = cycle_period(schedule)
    return CycleGrid(
        h=np.array(hs),
        observed=np.array(observed, dtype=int),
        t=np.array(times + [period]),
        event_starts=np.array(starts, dtype=int),
        period=period,
    )

def _sqrt_psd(X: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(0.5 * (X + X.T))
    return V @ np.diag(np.sqrt(np.clip(w, 0, None))) @ V.T

def _end_step(grid: CycleGrid, cfg: SimConfig) -> int:
    """Global step index at which the run stops."""
    if cfg.horizon is None:
        return cfg.cycles * grid.K
    if cfg.horizon < 3 * grid.period:
        raise InputError(f"horizon {cfg.horizon:g} is shorter than three cycles ({3 * grid.period:g})")
    cycles = int(cfg.horizon // grid.period)
    phase = cfg.horizon - cycles * grid.period
    return cycles * grid.K + int(np.searchsorted(grid.t[:-1], phase - 1e-12))

def _record_mask(grid: CycleGrid, stride: int) -> np.ndarray:
    mask = np.zeros(grid.K, dtype=bool)
    mask[::stride] = True
    mask[grid.event_starts] = True
    return mask

def _simulate_target(
    m: TargetModel,
    grid: CycleGrid,
    cfg: SimConfig,
    runs: Sequence[int],
    guard: float,
    record: Callable[[int], bool],
    inputs: Optional[Callable[[float], np.ndarray]] = None,
) -> Dict[str, np.ndarray]:
    """
    Vectorized simulation of independent runs of one target.
    Args:
        record: predicate on the global step index; the state at the start of that step is kept
        inputs: piecewise-constant control u(t), applied to the state and the estimate
    Returns:
        Arrays with a leading run axis (phi, phi_hat, innovation) and shared ones
        (times, omega, eta)
    """
    if inputs is not None and m.B is None:
        raise InputError(f"target {m.id} has a control input but no B matrix")
    L, mm = m.L, m.m
    A, H = m.A, m.H
    sq_q = _sqrt_psd(m.Q)
    sq_r = np.linalg.cholesky(m.R)
    ht_rinv = np.linalg.solve(m.R, H).T                      # H' R^-1
    rngs = [target_rng(cfg.seed, m.id, r) for r in runs]
    n = len(runs)

    omega = cfg.omega0_scale * np.eye(L)
    if cfg.noise:
        phi = np.stack([g.standard_normal(L) for g in rngs]) @ _sqrt_psd(omega).T
    else:
        phi = np.zeros((n, L))
    phi_hat = np.zeros((n, L))
    innov = np.zeros((n, mm))
    maps = {}
    out = {k: [] for k in ("times", "phi", "phi_hat", "omega", "eta", "innovation")}
    end = _end_step(grid, cfg)
    n_cycles = math.ceil(end / grid.K) if end else 0

    def keep(t, eta):
        out["times"].append(t)
        out["phi"].append(phi.copy())
        out["phi_hat"].append(phi_hat.copy())
        out["omega"].append(omega.copy())
        out["eta"].append(eta)
        out["innovation"].append(innov.copy())

    step = 0
    for c in range(n_cycles):
        if cfg.noise:
            noise = np.stack([g.standard_normal((grid.K, L + mm)) for g in rngs])
        t0 = c * grid.period
        for k in range(grid.K):
            if step == end:
                break
            h = grid.h[k]
            eta = int(grid.observed[k] == m.id)
            t = t0 + grid.t[k]
            if record(step):
                keep(t, eta)
            drift = phi @ A.T
            drift_hat = phi_hat @ A.T
            if inputs is not None:
                bu = m.B @ np.atleast_1d(inputs(t))
                drift = drift + bu
                drift_hat = drift_hat + bu
            new_phi = phi + h * drift
            if cfg.noise:
                new_phi = new_phi + math.sqrt(h) * noise[:, k, :L] @ sq_q.T
            new_hat = phi_hat + h * drift_hat
            if eta:
                dy = h * phi @ H.T
                if cfg.noise:
                    dy = dy + math.sqrt(h) * noise[:, k, L:] @ sq_r.T
                innov = dy - h * phi_hat @ H.T
                new_hat = new_hat + innov @ (omega @ ht_rinv).T
            else:
                innov = np.zeros((n, mm))
            key = (eta, h)
            if key not in maps:
                maps[key] = segment_map(m, eta, h, 1)
            omega = maps[key].apply(omega, guard)
            phi, phi_hat = new_phi, new_hat
            if not np.all(np.isfinite(phi)) or np.max(np.abs(phi), initial=0.0) > guard:
                raise StepBlowup(f"target {m.id}: simulated state exceeded {guard:g}")
            step += 1
    final_t = (end // grid.K) * grid.period + grid.t[end % grid.K]
    if record(end):
        keep(final_t, out["eta"][-1] if out["eta"] else 0)
    return {k: np.array(v) for k, v in out.items()}

def _check_step(scenario: Scenario, dt_sim: float):
    for m in scenario.targets:
        limit = scenario.solver.char_step_frac / characteristic_rate(m)
        if dt_sim > limit:
            logger.warning(
                f"dt_sim {dt_sim:g} exceeds the covariance integrator step {limit:.3g} of target {m.id}"
            )

def simulate_batch(
    scenario: Scenario,
    schedule: AgentSchedule,
    cfg: SimConfig,
    runs: Sequence[int],
    threads: int = 1,
    inputs: Optional[Dict[int, Callable[[float], np.ndarray]]] = None,
) -> List[SimTrace]:
    """
    Independent runs simulated together; run r of target i always uses the stream
    (seed, i, r), so results do not depend on batching or thread count.
    """
    _check_step(scenario, cfg.dt_sim)
    grid = cycle_grid(schedule, cfg.dt_sim)
    mask = _record_mask(grid, cfg.stride)
    end = _end_step(grid, cfg)

    def record(step: int) -> bool:
        return step == end or bool(mask[step % grid.K])

    inputs = inputs or {}
    guard = scenario.solver.overflow_guard
    results = map_concurrent(
        lambda m: (m.id, _simulate_target(m, grid, cfg, runs, guard, record, inputs.get(m.id))),
        scenario.targets, threads,
    )
    traces = []
    for r_idx, run in enumerate(runs):
        trace = SimTrace(config=cfg, run=run, period=grid.period)
        for tid, res in results:
            trace.targets[tid] = TargetSimTrace(
                target_id=tid,
                times=res["times"],
                phi=res["phi"][:, r_idx, :],
                phi_hat=res["phi_hat"][:, r_idx, :],
                omega=res["omega"],
                eta=res["eta"],
                innovation=res["innovation"][:, r_idx, :],
            )
        traces.append(trace)
    return traces

def simulate(
    scenario: Scenario,
    schedule: AgentSchedule,
    cfg: Optional[SimConfig] = None,
    run: int = 0,
    threads: int = 1,
    inputs: Optional[Dict[int, Callable[[float], np.ndarray]]] = None,
) -> SimTrace:
    """
    Simulate one run of every target under the schedule.
    Args:
        scenario: validated scenario
        schedule: agent schedule visiting every target
        cfg: simulation settings
        run: run index (selects the random streams)
        threads: worker threads (one target per task)
        inputs: optional control u_i(t) per target id
    Returns:
        SimTrace sampled every `stride` steps and at every event start
    Raises:
        StepBlowup: the state or covariance exceeded the overflow guard
    """
    return simulate_batch(scenario, schedule, cfg or SimConfig(), [run], threads, inputs)[0]

def empirical_error_stats(
    scenario: Scenario,
    schedule: AgentSchedule,
    cfg: SimConfig,
    n_runs: int,
    phase: float = 0.0,
    target_ids: Optional[Sequence[int]] = None,
    threads: int = 1,
) -> Dict[int, ErrorStats]:
    """
    Sample covariance of phi - phi_hat across runs at one phase of the final cycle.
    Args:
        cfg: simulation settings (horizon is ignored; all cycles are run)
        n_runs: independent runs 0..n_runs-1
        phase: time within the cycle, snapped to the nearest step boundary
        target_ids: targets to report (default: all)
    Returns:
        ErrorStats per target id; std_error[j, k] = sqrt((S_jk^2 + S_jj S_kk) / (n - 1))
    Raises:
        InsufficientRuns: n_runs < 2
    """
    if n_runs < 2:
        raise InsufficientRuns(f"error statistics need at least 2 runs, got {n_runs}")
    cfg = cfg.model_copy(update={"horizon": None})
    grid = cycle_grid(schedule, cfg.dt_sim)
    k = int(np.argmin(np.abs(grid.t[:-1] - (phase % grid.period))))
    capture = (cfg.cycles - 1) * grid.K + k
    targets = [scenario.target(i) for i in (target_ids or scenario.ids)]
    guard = scenario.solver.overflow_guard
    results = map_concurrent(
        lambda m: (m, _simulate_target(m, grid, cfg, range(n_runs), guard, lambda s: s == capture)),
        targets, threads,
    )
    stats = {}
    for m, res in results:
        err = res["phi"][0] - res["phi_hat"][0]          # (n_runs, L)
        S = np.atleast_2d(np.cov(err, rowvar=False, ddof=1))
        se = np.sqrt((S ** 2 + np.outer(np.diag(S), np.diag(S))) / (n_runs - 1))
        omega = res["omega"][0]
        w, V = np.linalg.eigh(omega)
        whiten = V @ np.diag(1.0 / np.sqrt(w)) @ V.T
        normalized = err @ whiten.T
        stats[m.id] = ErrorStats(
            target_id=m.id,
            phase=float(grid.t[k]),
            n_runs=n_runs,
            covariance=S,
            std_error=se,
            omega=omega,
            normalized_variance=np.var(normalized, axis=0, ddof=1),
        )
    return stats
