# import
## batteries
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import List, Optional, Sequence, Tuple
## 3rd party
import numpy as np
from scipy.sparse.csgraph import csgraph_from_dense, shortest_path
from scipy.spatial.distance import pdist, squareform
## package
from PMonitor.errors import Issue, ScenarioError, TooLarge

logger = logging.getLogger(__name__)

# default cap of the exact (Held-Karp) solver
EXACT_CAP = 13

# classes
@dataclass(frozen=True, eq=False)
class MonitoringGraph:
    """
    Undirected travel-time graph over M nodes; node k hosts target id k+1.
    Missing edges are +inf; tours and schedules use the metric closure.
    """
    d: np.ndarray
    positions: Optional[np.ndarray] = None

    def __post_init__(self):
        d = np.atleast_2d(np.array(self.d, dtype=float))
        d.setflags(write=False)
        object.__setattr__(self, "d", d)
        if self.positions is not None:
            pos = np.array(self.positions, dtype=float).reshape(-1, 2)
            pos.setflags(write=False)
            object.__setattr__(self, "positions", pos)

    @property
    def M(self) -> int:
        return self.d.shape[0]

    @cached_property
    def closure(self) -> np.ndarray:
        return metric_closure(self.d)

    def travel(self, i: int, j: int) -> float:
        """Shortest travel time between target ids i and j."""
        return float(self.closure[i - 1, j - 1])


@dataclass(frozen=True)
class Tour:
    """Single-visit cycle; order starts at the smallest id."""
    order: Tuple[int, ...]
    travel_time: float

    def to_dict(self) -> dict:
        return {"order": list(self.order), "travel_time": self.travel_time}

# functions
def euclidean_graph(positions: Sequence[Sequence[float]]) -> MonitoringGraph:
    """
    Complete graph with Euclidean edge lengths as travel times.
    Args:
        positions: M x 2 coordinates
    Returns:
        MonitoringGraph with d_ij = ||p_i - p_j||
    """
    pos = np.array(positions, dtype=float).reshape(-1, 2)
    if pos.shape[0] < 1:
        raise ScenarioError([Issue("EmptyScenario", "no positions given")])
    if not np.all(np.isfinite(pos)):
        raise ScenarioError([Issue("GraphNegative", "positions must be finite")])
    d = squareform(pdist(pos)) if pos.shape[0] > 1 else np.zeros((1, 1))
    return MonitoringGraph(d=d, positions=pos)

def metric_closure(d: np.ndarray) -> np.ndarray:
    """
    All-pairs shortest travel times; +inf marks a missing edge.
    """
    d = np.asarray(d, dtype=float)
    if d.shape[0] == 1:
        return np.zeros((1, 1))
    finite = np.where(np.isfinite(d), d, np.inf)
    cs = csgraph_from_dense(finite, null_value=np.inf)
    return shortest_path(cs, method="FW", directed=False)

def graph_issues(g: MonitoringGraph) -> List[Issue]:
    d = g.d
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        return [Issue("DimensionMismatch", f"travel-time matrix is {d.shape}, expected square")]
    issues = []
    if np.any(np.isnan(d)):
        issues.append(Issue("GraphNegative", "travel times must not be NaN"))
        return issues
    same = (d == d.T) | np.isclose(d, d.T, rtol=1e-12, atol=1e-12)
    if not np.all(same):
        issues.append(Issue("GraphNotSymmetric", "travel-time matrix must be symmetric"))
    if np.any(np.diag(d) != 0):
        issues.append(Issue("GraphDiagonal", "travel-time matrix must have a zero diagonal"))
    if np.any(d < 0):
        issues.append(Issue("GraphNegative", "travel times must be nonnegative"))
    if not issues and not np.all(np.isfinite(g.closure)):
        issues.append(Issue("GraphDisconnected", "graph is not connected"))
    return issues

def validate_graph(g: MonitoringGraph) -> MonitoringGraph:
    issues = graph_issues(g)
    if issues:
        raise ScenarioError(issues)
    return g

def tour_travel_time(d: np.ndarray, order: Sequence[int]) -> float:
    """Total time around the cycle given by 1-based ids."""
    idx = np.asarray(order, dtype=int) - 1
    if len(idx) < 2:
        return 0.0
    return float(np.sum(d[idx, np.roll(idx, -1)]))

def canonical_order(order: Sequence[int]) -> Tuple[int, ...]:
    """
    Rotate so the smallest id comes first, then pick the lexicographically
    smaller of the two traversal directions.
    """
    order = list(order)
    if not order:
        return tuple()
    k = order.index(min(order))
    fwd = order[k:] + order[:k]
    bwd = [fwd[0]] + fwd[1:][::-1]
    return tuple(min(fwd, bwd))

def _trivial_tour(g: MonitoringGraph) -> Optional[Tour]:
    if g.M <= 2:
        order = tuple(range(1, g.M + 1))
        return Tour(order=order, travel_time=tour_travel_time(g.closure, order))
    return None

def solve_tsp_exact(g: MonitoringGraph, cap: int = EXACT_CAP) -> Tour:
    """
    Held-Karp dynamic programming over subsets.
    h[S, j] is the cheapest path from node j through every node of S back to node 0.
    The tour is rebuilt forwards, taking the smallest next id that stays optimal,
    which gives the lexicographically smallest optimal canonical order.
    Raises:
        TooLarge: more than cap nodes
    """
    if g.M > cap:
        raise TooLarge(f"exact tour search is limited to {cap} nodes, graph has {g.M}")
    trivial = _trivial_tour(g)
    if trivial is not None:
        return trivial
    d = g.closure
    n = g.M
    k = n - 1                      # nodes 1..n-1 are bit 0..k-1
    full = 1 << k
    h = np.full((full, n), np.inf)
    h[0, :] = d[:, 0]
    for S in range(1, full):
        members = [b for b in range(k) if S >> b & 1]
        nodes = np.array(members) + 1
        prev = np.array([h[S ^ (1 << b), b + 1] for b in members])
        # cost from every j: go to some node in S, then finish from there
        h[S, :] = np.min(d[:, nodes] + prev[None, :], axis=1)
    best = h[full - 1, 0]
    tol = 1e-12 * max(1.0, abs(best))

    order = [0]
    remaining = full - 1
    current = 0
    while remaining:
        for b in range(k):
            if not remaining >> b & 1:
                continue
            cand = d[current, b + 1] + h[remaining ^ (1 << b), b + 1]
            if cand <= h[remaining, current] + tol:
                order.append(b + 1)
                current = b + 1
                remaining ^= 1 << b
                break
        else:  # pragma: no cover - the DP guarantees a consistent successor
            raise RuntimeError("Held-Karp reconstruction failed")
    ids = canonical_order([v + 1 for v in order])
    return Tour(order=ids, travel_time=tour_travel_time(d, ids))

def solve_tsp_heuristic(g: MonitoringGraph) -> Tour:
    """
    Nearest-neighbour construction from node 1 followed by first-improvement 2-opt.
    Deterministic for a given graph.
    """
    trivial = _trivial_tour(g)
    if trivial is not None:
        return trivial
    d = g.closure
    n = g.M
    # nearest neighbour, ties to the smallest index
    tour = [0]
    unvisited = set(range(1, n))
    while unvisited:
        last = tour[-1]
        nxt = min(unvisited, key=lambda j: (d[last, j], j))
        tour.append(nxt)
        unvisited.remove(nxt)
    # 2-opt
    improved = True
    while improved:
        improved = False
        for i in range(n - 1):
            for j in range(i + 2, n):
                if i == 0 and j == n - 1:
                    continue
                a, b = tour[i], tour[i + 1]
                c, e = tour[j], tour[(j + 1) % n]
                delta = d[a, c] + d[b, e] - d[a, b] - d[c, e]
                if delta < -1e-12:
                    tour[i + 1:j + 1] = tour[i + 1:j + 1][::-1]
                    improved = True
                    break
            if improved:
                break
    ids = canonical_order([v + 1 for v in tour])
    return Tour(order=ids, travel_time=tour_travel_time(d, ids))

def solve_tsp(g: MonitoringGraph, cap: int = EXACT_CAP) -> Tour:
    """Exact tour when the graph is small enough, otherwise the heuristic."""
    if g.M <= cap:
        return solve_tsp_exact(g, cap=cap)
    logger.info(f"Graph has {g.M} nodes (> {cap}); using nearest-neighbour + 2-opt")
    return solve_tsp_heuristic(g)
