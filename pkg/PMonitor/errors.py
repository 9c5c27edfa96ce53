# import
## batteries
from dataclasses import dataclass, asdict
from typing import Any, Dict, List, Optional

# classes
@dataclass(frozen=True)
class Issue:
    """A single validation finding."""
    code: str
    message: str
    target_id: Optional[int] = None

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def __str__(self) -> str:
        where = f"target {self.target_id}: " if self.target_id is not None else ""
        return f"[{self.code}] {where}{self.message}"


class PMonitorError(Exception):
    """Base class; exit_code is what the CLI returns for this error."""
    exit_code = 2

    def to_dict(self) -> Dict[str, Any]:
        ret = {"error": type(self).__name__, "message": str(self)}
        ret.update(getattr(self, "context", {}))
        return ret


## validation errors (exit 1)
class ScenarioError(PMonitorError):
    """Invalid scenario, target, graph or schedule; carries every issue found."""
    exit_code = 1

    def __init__(self, issues: List[Issue], message: Optional[str] = None):
        self.issues = list(issues)
        if message is None:
            message = "; ".join(str(i) for i in self.issues) or "invalid input"
        super().__init__(message)

    @property
    def codes(self) -> List[str]:
        return [i.code for i in self.issues]

    def to_dict(self) -> Dict[str, Any]:
        ret = super().to_dict()
        ret["issues"] = [i.to_dict() for i in self.issues]
        return ret


class ParseError(ScenarioError):
    """Unreadable scenario file."""
    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        self.line = line
        self.column = column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__([Issue("ParseError", message + where)], message + where)

    def to_dict(self) -> Dict[str, Any]:
        ret = super().to_dict()
        ret.update({"line": self.line, "column": self.column})
        return ret


class UnvisitedTarget(ScenarioError):
    def __init__(self, missing: List[int]):
        super().__init__(
            [Issue("UnvisitedTarget", "target is never visited in the cycle", t) for t in missing]
        )
        self.missing = list(missing)


class InputError(PMonitorError):
    """Caller-supplied values outside an operation's preconditions."""
    exit_code = 1

class PeriodTooShort(InputError):
    pass

class NonpositivePeak(InputError):
    pass

class InvalidBracket(InputError):
    pass

class TooLarge(InputError):
    pass

class InsufficientRuns(InputError):
    pass


## numerical failures (exit 2)
class NumericalError(PMonitorError):
    exit_code = 2

class StepBlowup(NumericalError):
    """Covariance exceeded the overflow guard."""

class NoObservation(NumericalError):
    """A target is never observed for a positive duration."""

class NonConvergence(NumericalError):
    """The cycle map did not reach its fixed point."""
