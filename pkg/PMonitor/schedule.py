# import
## batteries
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple
## 3rd party
import numpy as np
import pandas as pd
## package
from PMonitor.errors import Issue, ScenarioError, UnvisitedTarget
from PMonitor.graph import MonitoringGraph, Tour

# classes
@dataclass(frozen=True, eq=False)
class AgentSchedule:
    """
    The agent's view of one cycle: visiting sequence and dwell times.
    visits[q] is a target id; the agent then travels to visits[q+1] (cyclically).
    """
    visits: Tuple[int, ...]
    dwell: Tuple[float, ...]
    graph: MonitoringGraph

    def __post_init__(self):
        object.__setattr__(self, "visits", tuple(int(v) for v in self.visits))
        object.__setattr__(self, "dwell", tuple(float(t) for t in self.dwell))
        issues = []
        if len(self.visits) == 0:
            issues.append(Issue("InvalidSchedule", "the visiting sequence is empty"))
        if len(self.visits) != len(self.dwell):
            issues.append(Issue(
                "InvalidSchedule", f"{len(self.visits)} visits but {len(self.dwell)} dwell times"
            ))
        if any(not np.isfinite(t) or t < 0 for t in self.dwell):
            issues.append(Issue("InvalidSchedule", "dwell times must be finite and nonnegative"))
        bad = sorted({v for v in self.visits if not 1 <= v <= self.graph.M})
        if bad:
            issues.append(Issue("InvalidSchedule", f"visits {bad} are not nodes of the graph"))
        if issues:
            raise ScenarioError(issues)

    @property
    def N(self) -> int:
        return len(self.visits)

    def legs(self) -> List[float]:
        """Travel time after each visit, to the next one (cyclic)."""
        nxt = self.visits[1:] + self.visits[:1]
        return [self.graph.travel(a, b) for a, b in zip(self.visits, nxt)]

    def starts(self) -> List[float]:
        """Absolute start of each visit, measured from the start of visit 1."""
        out = [0.0]
        for t, leg in zip(self.dwell[:-1], self.legs()[:-1]):
            out.append(out[-1] + t + leg)
        return out


@dataclass(frozen=True)
class VisitPositions:
    """Per-target positions in the sequence (1-based) and the inverse maps a(q), b(q)."""
    positions: Dict[int, List[int]]
    a: Dict[int, int]
    b: Dict[int, int]

    def count(self, target_id: int) -> int:
        return len(self.positions.get(target_id, []))


@dataclass(frozen=True)
class Event:
    kind: str                  # "dwell" or "travel"
    start: float
    duration: float
    target: int                # observed target (dwell) or departure node (travel)
    to: Optional[int] = None   # arrival node for travel


@dataclass(frozen=True)
class Segment:
    """Interval [start, end) of the cycle with constant observation indicator eta."""
    eta: int
    start: float
    end: float

    @property
    def length(self) -> float:
        return self.end - self.start


@dataclass(frozen=True)
class TargetTimeline:
    """
    One target's view of the cycle. tau_start[k] is the start of its k-th visit,
    tau_end[k] = tau_start[k] + t_on[k], and tau_start[k+1] = tau_end[k] + t_off[k],
    with the (N_i+1)-th visit starting one period after the first.
    """
    target_id: int
    t_on: Tuple[float, ...]
    t_off: Tuple[float, ...]
    tau_start: Tuple[float, ...]
    period: float

    @property
    def N(self) -> int:
        return len(self.t_on)

    @property
    def tau_end(self) -> Tuple[float, ...]:
        return tuple(s + t for s, t in zip(self.tau_start, self.t_on))

    def segments(self) -> List[Segment]:
        """
        Observation indicator over [0, period], split at every visit start/end.
        Zero-length pieces are dropped.
        """
        pieces = []
        first = self.tau_start[0]
        if first > 0:
            pieces.append(Segment(0, 0.0, first))
        for k in range(self.N):
            s, e = self.tau_start[k], self.tau_end[k]
            pieces.append(Segment(1, s, e))
            nxt = self.tau_start[k + 1] if k + 1 < self.N else self.period
            pieces.append(Segment(0, e, min(nxt, self.period)))
        return [p for p in pieces if p.length > 0]

    def perturbed(self, which: str, index: int, delta: float) -> "TargetTimeline":
        """
        Timeline with t_on[index] or t_off[index] shifted by delta, every other
        duration fixed; visit starts and the period are recomputed.
        """
        t_on = list(self.t_on)
        t_off = list(self.t_off)
        if which == "t_on":
            t_on[index] += delta
        elif which == "t_off":
            t_off[index] += delta
        else:
            raise ValueError(f"which must be 't_on' or 't_off', got {which!r}")
        if min(t_on) < 0 or min(t_off) < 0:
            raise ValueError("perturbation makes a duration negative")
        starts = [self.tau_start[0]]
        for k in range(self.N - 1):
            starts.append(starts[-1] + t_on[k] + t_off[k])
        return TargetTimeline(
            target_id=self.target_id,
            t_on=tuple(t_on),
            t_off=tuple(t_off),
            tau_start=tuple(starts),
            period=float(sum(t_on) + sum(t_off)),
        )

    def to_dict(self) -> dict:
        return {
            "target_id": self.target_id,
            "period": self.period,
            "t_on": list(self.t_on),
            "t_off": list(self.t_off),
            "tau_start": list(self.tau_start),
            "tau_end": list(self.tau_end),
        }

# functions
def visit_positions(visits: Sequence[int]) -> VisitPositions:
    """
    Positions p_i^j of each target in the sequence and the inverse maps
    a(q) (target at position q) and b(q) (which visit of that target it is).
    """
    if len(visits) == 0:
        raise ScenarioError([Issue("InvalidSchedule", "the visiting sequence is empty")])
    positions: Dict[int, List[int]] = {}
    a: Dict[int, int] = {}
    b: Dict[int, int] = {}
    for q, target in enumerate(visits, start=1):
        positions.setdefault(int(target), []).append(q)
        a[q] = int(target)
        b[q] = len(positions[int(target)])
    return VisitPositions(positions=positions, a=a, b=b)

def cycle_period(s: AgentSchedule) -> float:
    """Sum of dwell times plus every travel leg of the cycle."""
    return float(sum(s.dwell) + sum(s.legs()))

def event_list(s: AgentSchedule) -> List[Event]:
    """
    The cycle as a chronological list of dwell and travel events.
    Zero-length travel legs (consecutive visits to one node) are omitted.
    """
    events = []
    t = 0.0
    nxt = s.visits[1:] + s.visits[:1]
    for target, dwell, leg, to in zip(s.visits, s.dwell, s.legs(), nxt):
        events.append(Event("dwell", t, dwell, target))
        t += dwell
        if leg > 0:
            events.append(Event("travel", t, leg, target, to))
            t += leg
    return events

def events_frame(s: AgentSchedule) -> pd.DataFrame:
    """Event list as a table for CSV export."""
    rows = [
        {"kind": e.kind, "start": e.start, "duration": e.duration, "end": e.start + e.duration,
         "target": e.target, "to": e.to if e.to is not None else ""}
        for e in event_list(s)
    ]
    return pd.DataFrame(rows, columns=["kind", "start", "duration", "end", "target", "to"])

def to_target_view(s: AgentSchedule, target_ids: Optional[Sequence[int]] = None) -> List[TargetTimeline]:
    """
    Each target's (t_on, t_off, tau_start) over one cycle.
    t_off of the last visit wraps around the cycle to the first visit.
    Args:
        s: the agent schedule
        target_ids: targets that must be covered (defaults to every graph node)
    Raises:
        UnvisitedTarget: a required target never appears in the sequence
    """
    if target_ids is None:
        target_ids = range(1, s.graph.M + 1)
    pos = visit_positions(s.visits)
    missing = [i for i in target_ids if i not in pos.positions]
    if missing:
        raise UnvisitedTarget(missing)
    starts = s.starts()
    period = cycle_period(s)
    timelines = []
    for i in target_ids:
        qs = pos.positions[i]
        tau = [starts[q - 1] for q in qs]
        t_on = [s.dwell[q - 1] for q in qs]
        t_off = []
        for k in range(len(qs)):
            nxt = tau[k + 1] if k + 1 < len(qs) else period + tau[0]
            t_off.append(max(0.0, nxt - (tau[k] + t_on[k])))
        timelines.append(TargetTimeline(
            target_id=i, t_on=tuple(t_on), t_off=tuple(t_off), tau_start=tuple(tau), period=period
        ))
    return timelines

def single_visit_schedule(tour: Tour, t_on: Sequence[float], graph: MonitoringGraph) -> AgentSchedule:
    """
    Schedule visiting every target once in tour order.
    Args:
        tour: single-visit cycle
        t_on: dwell time per target, indexed by target id - 1
        graph: travel graph
    """
    dwell = [float(t_on[i - 1]) for i in tour.order]
    return AgentSchedule(visits=tour.order, dwell=tuple(dwell), graph=graph)
