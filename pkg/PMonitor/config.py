# import
## batteries
import os
from importlib import resources
from typing import Any, Dict, Optional, Tuple
## 3rd party
from dynaconf import Dynaconf
from pydantic import BaseModel, ConfigDict, Field, field_validator

# classes
class SolverSettings(BaseModel):
    """
    Numerical settings shared by the riccati, balance and optimize modules.
    Field defaults match the packaged settings.yml.
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    # balancing
    kp: float = Field(1e-2, gt=0)
    balance_tol: float = Field(1e-6, ge=0)
    max_iters: int = Field(5000, ge=0)
    step_recovery: int = Field(5, ge=1)
    floor_frac: float = Field(1e-6, gt=0, lt=1)
    # periodic riccati
    cycle_tol: float = Field(1e-9, gt=0)
    max_cycles: int = Field(10000, ge=1)
    min_steps_per_segment: int = Field(20, ge=1)
    char_step_frac: float = Field(1e-2, gt=0)
    overflow_guard: float = Field(1e12, gt=0)
    dense_samples: int = Field(200, ge=2)
    # period search
    tmin_scale: float = Field(0.1, gt=0)
    tmax_scale: float = Field(3.0, gt=0)
    eps_scale: float = Field(1e-3, gt=0)
    lower_margin: float = Field(1.01, gt=1)
    fallback_bracket: Tuple[float, float] = (0.1, 3.0)
    # tours
    tsp_exact_cap: int = Field(13, ge=1)

    @field_validator("fallback_bracket")
    @classmethod
    def _ordered_bracket(cls, v):
        if not 0 < v[0] < v[1]:
            raise ValueError("fallback_bracket must satisfy 0 < low < high")
        return v

    def updated(self, **overrides) -> "SolverSettings":
        """Copy with the non-None overrides applied (and validated)."""
        values = self.model_dump()
        values.update({k: v for k, v in overrides.items() if v is not None})
        return SolverSettings(**values)

# functions
def get_settings() -> Dynaconf:
    """
    Load the layered settings: packaged settings.yml, then a local settings.yml,
    then PM_* environment variables. DYNACONF switches the environment.
    """
    s_path = str(resources.files("PMonitor").joinpath("settings.yml"))
    return Dynaconf(
        settings_files=[s_path, "settings.yml"],
        environments=True,
        env_switcher="DYNACONF",
        envvar_prefix="PM",
    )

def solver_settings(overrides: Optional[Dict[str, Any]] = None) -> SolverSettings:
    """
    Build SolverSettings from dynaconf defaults with optional overrides on top.
    Args:
        overrides: mapping of field name to value; None values are ignored
    Returns:
        Validated solver settings
    """
    settings = get_settings()
    base = {str(k).lower(): v for k, v in dict(settings.get("solver", {}) or {}).items()}
    base = {k: v for k, v in base.items() if k in SolverSettings.model_fields}
    if "fallback_bracket" in base:
        base["fallback_bracket"] = tuple(base["fallback_bracket"])
    return SolverSettings(**base).updated(**(overrides or {}))

def worker_threads(requested: Optional[int] = None) -> int:
    """
    Number of worker threads for per-target solves.
    Precedence: explicit request, PM_THREADS, settings.threads, 1.
    """
    if requested is not None:
        return max(1, int(requested))
    env = os.getenv("PM_THREADS")
    if env:
        return max(1, int(env))
    return max(1, int(get_settings().get("threads", 1)))

def default_out_dir() -> str:
    return str(get_settings().get("out_dir", "pm_out"))


# main
if __name__ == "__main__":
    from dotenv import load_dotenv
    load_dotenv(override=True)
    print(solver_settings().model_dump_json(indent=2))
