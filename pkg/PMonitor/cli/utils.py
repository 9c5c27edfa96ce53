# import
## batteries
import os
import sys
import json
import logging
import argparse
from datetime import datetime, timezone
from typing import Any, Dict, List, Optional, Union
## 3rd party
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError
## package
from PMonitor import __version__
from PMonitor.config import SolverSettings, default_out_dir, solver_settings, worker_threads
from PMonitor.errors import Issue, ParseError, ScenarioError
from PMonitor.graph import MonitoringGraph, euclidean_graph
from PMonitor.models import Norm, Scenario, TargetModel, WeightFn, scenario_issues
from PMonitor.schedule import AgentSchedule
from PMonitor.utils import sha256_digest, to_json, write_json

logger = logging.getLogger(__name__)

Matrix = Union[float, List[float], List[List[float]]]

# classes
class CustomFormatter(argparse.ArgumentDefaultsHelpFormatter,
                      argparse.RawDescriptionHelpFormatter):
    pass


class _FileModel(BaseModel):
    # unknown keys are collected and reported by _unknown_keys
    model_config = ConfigDict(extra="allow")


class WeightFile(_FileModel):
    kind: str = "identity"
    scale: float = 1.0
    exponent: float = 1.0


class TargetFile(_FileModel):
    id: int
    A: Matrix
    H: Matrix
    Q: Matrix
    R: Matrix
    label: str = ""
    position: Optional[List[float]] = None
    weight: WeightFile = Field(default_factory=WeightFile)
    B: Optional[Matrix] = None


class ScenarioFile(_FileModel):
    name: str = "scenario"
    norm: str = "trace"
    targets: List[TargetFile]
    positions: Optional[List[List[float]]] = None
    travel_times: Optional[List[List[Optional[float]]]] = None
    solver: Dict[str, Any] = Field(default_factory=dict)


class ScheduleFile(_FileModel):
    visits: List[int]
    dwell: List[float]


class RunManifest(BaseModel):
    """Provenance of one CLI run; written to manifest.json in the output directory."""
    tool: str = "PMonitor"
    version: str = __version__
    command: str
    flags: Dict[str, Any]
    scenario_digest: Optional[str] = None
    started_at: str
    finished_at: Optional[str] = None
    outputs: List[str] = Field(default_factory=list)

# functions
def add_common_args(sub_parser: argparse.ArgumentParser, config: bool = True) -> None:
    """Flags shared by every subcommand."""
    if config:
        sub_parser.add_argument('--config', type=str, required=True,
                                help='Scenario JSON file')
    sub_parser.add_argument('--out', type=str, default=default_out_dir(),
                            help='Output directory')
    sub_parser.add_argument('--threads', type=int, default=None,
                            help='Worker threads for per-target solves (default: PM_THREADS or settings)')
    sub_parser.add_argument('--lenient', action='store_true', default=False,
                            help='Warn about unknown scenario keys instead of failing')
    sub_parser.add_argument('--verbose', action='store_true', default=False,
                            help='Log progress')

def now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")

def _unknown_keys(model: BaseModel, where: str) -> List[str]:
    found = [f"{where}.{k}" for k in (model.model_extra or {})]
    for name in type(model).model_fields:
        value = getattr(model, name)
        items = value if isinstance(value, list) else [value]
        for k, item in enumerate(items):
            if isinstance(item, BaseModel):
                sub = f"{where}.{name}[{k}]" if isinstance(value, list) else f"{where}.{name}"
                found.extend(_unknown_keys(item, sub))
    return found

def _read_json(path: str) -> Any:
    if not os.path.exists(path):
        raise ParseError(f"file not found: {path}")
    with open(path, encoding="utf-8") as f:
        text = f.read()
    if not text.strip():
        raise ParseError(f"{path} is empty", 1, 1)
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: {e.msg}", e.lineno, e.colno)

def _parse_model(cls, data: Any, path: str, lenient: bool):
    try:
        model = cls.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        loc = ".".join(str(x) for x in first["loc"])
        raise ParseError(f"{path}: {loc}: {first['msg']}")
    unknown = _unknown_keys(model, "$")
    if unknown:
        if not lenient:
            raise ParseError(f"{path}: unknown keys {unknown}")
        for key in unknown:
            logger.warning(f"Ignoring unknown key {key} in {path}")
    return model

def scenario_from_dict(
    data: Any, path: str = "<dict>", lenient: bool = False, validate: bool = True
) -> Scenario:
    """
    Build a Scenario from its file representation.
    The graph comes from travel_times (null = no edge), else positions, else the
    targets' own positions.
    """
    sf = _parse_model(ScenarioFile, data, path, lenient)
    try:
        targets = [
            TargetModel(
                id=t.id, A=t.A, H=t.H, Q=t.Q, R=t.R, label=t.label,
                position=t.position, B=t.B,
                weight=WeightFn(t.weight.kind, t.weight.scale, t.weight.exponent),
            )
            for t in sf.targets
        ]
        norm = Norm(sf.norm)
    except ValueError as e:
        raise ScenarioError([Issue("InvalidValue", str(e))])
    if sf.travel_times is not None:
        d = np.array([[np.inf if v is None else v for v in row] for row in sf.travel_times], dtype=float)
        graph = MonitoringGraph(d=d, positions=sf.positions)
    elif sf.positions is not None:
        graph = euclidean_graph(sf.positions)
    elif targets and all(t.position is not None for t in targets):
        graph = euclidean_graph([t.position for t in sorted(targets, key=lambda t: t.id)])
    else:
        raise ScenarioError([Issue("MissingGraph", "give travel_times, positions or a position per target")])
    try:
        settings = solver_settings(sf.solver)
    except (ValidationError, TypeError) as e:
        raise ParseError(f"{path}: invalid solver block: {e}")
    scenario = Scenario(targets=tuple(targets), graph=graph, norm=norm, solver=settings, name=sf.name)
    if validate:
        issues = scenario_issues(scenario)
        if issues:
            raise ScenarioError(issues)
    return scenario

def load_scenario(path: str, lenient: bool = False, validate: bool = True) -> Scenario:
    """
    Parse and validate a scenario file.
    Args:
        path: JSON scenario file
        lenient: log unknown keys instead of rejecting them
        validate: run every model and graph check
    Raises:
        ParseError: unreadable file or schema violation (line/column when known)
        ScenarioError: violated modelling assumptions
    """
    return scenario_from_dict(_read_json(path), path, lenient, validate)

def _matrix(X: np.ndarray) -> list:
    return np.asarray(X).tolist()

def emit_scenario(s: Scenario) -> Dict[str, Any]:
    """Canonical file representation; load(emit(s)) rebuilds s."""
    targets = []
    for t in s.targets:
        entry = {
            "id": t.id, "label": t.label,
            "A": _matrix(t.A), "H": _matrix(t.H), "Q": _matrix(t.Q), "R": _matrix(t.R),
            "weight": t.weight.to_dict(),
        }
        if t.position is not None:
            entry["position"] = list(t.position)
        if t.B is not None:
            entry["B"] = _matrix(t.B)
        targets.append(entry)
    out = {
        "name": s.name,
        "norm": s.norm.value,
        "targets": targets,
        "travel_times": [[None if not np.isfinite(v) else float(v) for v in row] for row in s.graph.d],
        "solver": s.solver.model_dump(mode="json"),
    }
    if s.graph.positions is not None:
        out["positions"] = s.graph.positions.tolist()
    return out

def scenario_digest(s: Scenario) -> str:
    return sha256_digest(to_json(emit_scenario(s), canonical=True))

def load_schedule(path: str, graph: MonitoringGraph, lenient: bool = False) -> AgentSchedule:
    """Schedule file: {"visits": [target ids], "dwell": [times]}."""
    sf = _parse_model(ScheduleFile, _read_json(path), path, lenient)
    return AgentSchedule(visits=tuple(sf.visits), dwell=tuple(sf.dwell), graph=graph)

def parse_int_list(text: str) -> List[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")

def parse_float_list(text: str) -> List[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")

def apply_overrides(s: Scenario, **overrides) -> Scenario:
    """Scenario with CLI solver flags applied on top of its solver block."""
    if not any(v is not None for v in overrides.values()):
        return s
    return Scenario(
        targets=s.targets, graph=s.graph, norm=s.norm,
        solver=s.solver.updated(**overrides), name=s.name,
    )

def threads_for(args) -> int:
    return worker_threads(getattr(args, "threads", None))

def flags_of(args) -> Dict[str, Any]:
    return {k: v for k, v in sorted(vars(args).items()) if k != "func"}

def write_manifest(
    args, started: str, outputs: List[str], digest: Optional[str] = None
) -> str:
    """Record the run in <out>/manifest.json and return its path."""
    path = os.path.join(args.out, "manifest.json")
    manifest = RunManifest(
        command=args.command,
        flags=flags_of(args),
        scenario_digest=digest,
        started_at=started,
        finished_at=now(),
        outputs=sorted(os.path.relpath(p, args.out) for p in outputs),
    )
    write_json(manifest.model_dump(mode="json"), path)
    return path

def print_json(obj: Any) -> None:
    print(to_json(obj, indent=2))
