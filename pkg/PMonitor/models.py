# import
## batteries
import math
from enum import Enum
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple
## 3rd party
import numpy as np
## package
from PMonitor.config import SolverSettings
from PMonitor.errors import Issue, ScenarioError
from PMonitor.graph import MonitoringGraph, graph_issues

# eigenvalues with real part at or above this count as unstable
UNSTABLE_TOL = -1e-9
# relative singular-value threshold of the PBH rank test
RANK_TOL = 1e-10

# classes
class WeightKind(Enum):
    IDENTITY = "identity"
    LINEAR_SCALE = "linear-scale"
    POWER = "power"


class Norm(Enum):
    """Matrix norm applied to covariances before weighting."""
    TRACE = "trace"
    SPECTRAL = "spectral"


@dataclass(frozen=True)
class WeightFn:
    """
    Strictly increasing weighting g with g(0) = 0.
      identity      g(x) = x
      linear-scale  g(x) = scale * x
      power         g(x) = scale * x**exponent
    """
    kind: WeightKind = WeightKind.IDENTITY
    scale: float = 1.0
    exponent: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", WeightKind(self.kind))
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ValueError(f"weight scale must be positive, got {self.scale}")
        if not (self.exponent > 0 and math.isfinite(self.exponent)):
            raise ValueError(f"weight exponent must be positive, got {self.exponent}")

    def __call__(self, x: float) -> float:
        x = float(x)
        if self.kind is WeightKind.IDENTITY:
            return x
        if self.kind is WeightKind.LINEAR_SCALE:
            return self.scale * x
        return self.scale * x ** self.exponent

    def to_dict(self) -> Dict[str, object]:
        return {"kind": self.kind.value, "scale": self.scale, "exponent": self.exponent}


def _as_matrix(x) -> np.ndarray:
    arr = np.array(x, dtype=float)
    arr = np.atleast_2d(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TargetModel:
    """
    One target: drift A (L x L), observation H (m x L), process-noise intensity Q (L x L)
    and measurement-noise intensity R (m x m). Bare numbers are read as 1 x 1 matrices.
    B is accepted for completeness; covariance computations never use it.
    """
    id: int
    A: np.ndarray
    H: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    label: str = ""
    position: Optional[Tuple[float, float]] = None
    weight: WeightFn = field(default_factory=WeightFn)
    B: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "id", int(self.id))
        for name in ("A", "H", "Q", "R"):
            object.__setattr__(self, name, _as_matrix(getattr(self, name)))
        if self.B is not None:
            object.__setattr__(self, "B", _as_matrix(self.B))
        if self.position is not None:
            object.__setattr__(self, "position", tuple(float(v) for v in self.position))
        if not self.label:
            object.__setattr__(self, "label", f"target-{self.id}")

    @property
    def L(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.H.shape[0]

    @property
    def G(self) -> np.ndarray:
        """Information rate H' R^-1 H."""
        return self.H.T @ np.linalg.solve(self.R, self.H)


@dataclass(frozen=True, eq=False)
class Scenario:
    """Targets (sorted by id), travel graph, matrix norm and solver settings."""
    targets: Tuple[TargetModel, ...]
    graph: MonitoringGraph
    norm: Norm = Norm.TRACE
    solver: SolverSettings = field(default_factory=SolverSettings)
    name: str = "scenario"

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(sorted(self.targets, key=lambda t: t.id)))
        object.__setattr__(self, "norm", Norm(self.norm))

    @property
    def M(self) -> int:
        return len(self.targets)

    @property
    def ids(self) -> List[int]:
        return [t.id for t in self.targets]

    def target(self, target_id: int) -> TargetModel:
        for t in self.targets:
            if t.id == target_id:
                return t
        raise KeyError(f"no target with id {target_id}")

    def weighted_norm(self, target_id: int, X: np.ndarray) -> float:
        """g_i(||X||) for the given target."""
        return self.target(target_id).weight(matrix_norm(X, self.norm))

# functions
def matrix_norm(X: np.ndarray, norm: Norm = Norm.TRACE) -> float:
    X = np.atleast_2d(X)
    if Norm(norm) is Norm.TRACE:
        return float(np.trace(X))
    return float(np.linalg.norm(X, 2))

def unstable_eigenvalues(A: np.ndarray) -> np.ndarray:
    eig = np.linalg.eigvals(np.atleast_2d(A))
    return eig[eig.real >= UNSTABLE_TOL]

def detectability_check(A, H) -> bool:
    """
    PBH test: every eigenvalue lambda of A with Re(lambda) >= 0 must leave
    [A - lambda I; H] with full column rank.
    Args:
        A: L x L drift matrix
        H: m x L observation matrix
    Returns:
        True if (A, H) is detectable
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    H = np.atleast_2d(np.asarray(H, dtype=float))
    if A.shape[0] != A.shape[1] or H.shape[1] != A.shape[0]:
        raise ScenarioError([Issue(
            "DimensionMismatch", f"A is {A.shape}, H is {H.shape}; expected L x L and m x L"
        )])
    L = A.shape[0]
    for lam in unstable_eigenvalues(A):
        stacked = np.vstack([A - lam * np.eye(L), H.astype(complex)])
        sv = np.linalg.svd(stacked, compute_uv=False)
        rank = int(np.sum(sv > RANK_TOL * sv[0])) if sv[0] > 0 else 0
        if rank < L:
            return False
    return True

def _is_spd(X: np.ndarray) -> bool:
    scale = max(1.0, float(np.max(np.abs(X))))
    if not np.allclose(X, X.T, rtol=0.0, atol=1e-12 * scale):
        return False
    return bool(np.min(np.linalg.eigvalsh(0.5 * (X + X.T))) > 0)

def target_issues(m: TargetModel) -> List[Issue]:
    """
    Every violated modelling assumption of a target, in a fixed order.
    Returns:
        Empty list for a valid target
    """
    A, H, Q, R = m.A, m.H, m.Q, m.R
    L = A.shape[0]
    problems = []
    if A.shape != (L, L):
        problems.append(f"A is {A.shape}, expected square")
    if H.shape[1] != L:
        problems.append(f"H is {H.shape}, expected {H.shape[0]} x {L}")
    if Q.shape != (L, L):
        problems.append(f"Q is {Q.shape}, expected {L} x {L}")
    if R.shape != (H.shape[0], H.shape[0]):
        problems.append(f"R is {R.shape}, expected {H.shape[0]} x {H.shape[0]}")
    if m.B is not None and m.B.shape[0] != L:
        problems.append(f"B is {m.B.shape}, expected {L} rows")
    if problems:
        return [Issue("DimensionMismatch", "; ".join(problems), m.id)]

    issues = []
    if len(unstable_eigenvalues(A)) == 0:
        issues.append(Issue(
            "StableDrift", "unstable-drift assumption violated: every eigenvalue of A has negative real part", m.id
        ))
    if not detectability_check(A, H):
        issues.append(Issue(
            "NotDetectable", "detectability assumption violated: an unstable mode of A is not observable through H", m.id
        ))
    if not _is_spd(Q):
        issues.append(Issue("QNotPositiveDefinite", "Q must be symmetric positive definite", m.id))
    if not _is_spd(R):
        issues.append(Issue("RNotPositiveDefinite", "R must be symmetric positive definite", m.id))
    return issues

def validate_target(m: TargetModel) -> TargetModel:
    """
    Return the target unchanged if it satisfies all modelling assumptions.
    Raises:
        ScenarioError: listing each violated assumption
    """
    issues = target_issues(m)
    if issues:
        raise ScenarioError(issues)
    return m

def scenario_issues(s: Scenario) -> List[Issue]:
    issues = []
    if s.M == 0:
        return [Issue("EmptyScenario", "scenario has no targets")]
    ids = s.ids
    dups = sorted({i for i in ids if ids.count(i) > 1})
    if dups:
        issues.append(Issue("IdMismatch", f"duplicate target ids {dups}"))
    elif sorted(ids) != list(range(1, s.M + 1)):
        issues.append(Issue("IdMismatch", f"target ids must be 1..{s.M}, got {sorted(ids)}"))
    if s.graph.M != s.M:
        issues.append(Issue("IdMismatch", f"graph has {s.graph.M} nodes but there are {s.M} targets"))
    for t in s.targets:
        issues.extend(target_issues(t))
    issues.extend(graph_issues(s.graph))
    return issues

def validate_scenario(s: Scenario) -> Scenario:
    """
    Validate every target, the graph and the id layout.
    Raises:
        ScenarioError: aggregating all child issues
    """
    issues = scenario_issues(s)
    if issues:
        raise ScenarioError(issues)
    return s
