import os
import json
from importlib import resources
import numpy as np
import pytest
from PMonitor.config import SolverSettings
from PMonitor.graph import MonitoringGraph, euclidean_graph
from PMonitor.models import Scenario, TargetModel
from PMonitor.cli.utils import load_scenario


def scalar_target(id=1, a=0.5, q=1.0, r=1.0, h=1.0, **kwargs) -> TargetModel:
    return TargetModel(id=id, A=a, H=h, Q=q, R=r, **kwargs)

def two_node_graph(d=0.5) -> MonitoringGraph:
    return MonitoringGraph(d=np.array([[0.0, d], [d, 0.0]]))

def random_scalar_scenario(seed: int, M: int, settings: SolverSettings = None) -> Scenario:
    """Unstable scalar targets at uniform positions in [0, 0.5]^2."""
    rng = np.random.default_rng(seed)
    targets = [
        scalar_target(
            id=i + 1,
            a=float(rng.uniform(0.1, 0.5)),
            q=float(rng.uniform(0.5, 2.0)),
            r=float(rng.uniform(1.0, 8.0)),
        )
        for i in range(M)
    ]
    graph = euclidean_graph(rng.uniform(0.0, 0.5, size=(M, 2)))
    return Scenario(targets=tuple(targets), graph=graph, solver=settings or SolverSettings())

@pytest.fixture
def five_targets_path():
    return str(resources.files("PMonitor").joinpath("data", "five_targets.json"))

@pytest.fixture
def five_targets(five_targets_path):
    return load_scenario(five_targets_path)

@pytest.fixture
def five_targets_dict(five_targets_path):
    with open(five_targets_path) as f:
        return json.load(f)

@pytest.fixture
def settings():
    return SolverSettings()
