import pytest
from pydantic import ValidationError
from PMonitor.config import SolverSettings, get_settings, solver_settings, worker_threads

def test_packaged_defaults(monkeypatch):
    """The packaged settings.yml agrees with the field defaults"""
    monkeypatch.delenv("DYNACONF", raising=False)
    assert solver_settings() == SolverSettings()
    assert get_settings().get("out_dir") == "pm_out"

def test_test_environment(monkeypatch):
    """DYNACONF=test selects the lighter limits"""
    monkeypatch.setenv("DYNACONF", "test")
    s = solver_settings()
    assert s.max_iters == 2000
    assert s.dense_samples == 50
    assert s.kp == SolverSettings().kp

def test_overrides():
    """Overrides apply on top of the settings; None is ignored"""
    s = solver_settings({"kp": 0.5, "balance_tol": None})
    assert s.kp == 0.5
    assert s.balance_tol == SolverSettings().balance_tol
    assert s.updated(max_iters=7).max_iters == 7
    with pytest.raises(ValidationError):
        solver_settings({"kp": -1.0})
    with pytest.raises(ValidationError):
        SolverSettings(fallback_bracket=(3.0, 1.0))
    with pytest.raises(ValidationError):
        SolverSettings(unknown=1)

def test_frozen():
    """Settings are immutable"""
    s = SolverSettings()
    with pytest.raises(ValidationError):
        s.kp = 1.0

def test_worker_threads(monkeypatch):
    """Explicit request, then PM_THREADS, then settings"""
    monkeypatch.delenv("PM_THREADS", raising=False)
    assert worker_threads() == 1
    assert worker_threads(3) == 3
    assert worker_threads(0) == 1
    monkeypatch.setenv("PM_THREADS", "4")
    assert worker_threads() == 4
    assert worker_threads(2) == 2
