from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, List, Optional


# -----------------------------
# Issue model / severity policy
# -----------------------------
_LEVEL_ORDER = {"INFO": 0, "WARN": 1, "ERROR": 2}


@dataclass
class Issue:
    level: str        # INFO|WARN|ERROR
    code: str
    field: str
    residual: float
    message: str


def _issue(level: str, code: str, field: str, residual: float, message: str) -> Issue:
    if level not in _LEVEL_ORDER:
        level = "ERROR"
    return Issue(level=level, code=code, field=field, residual=float(residual), message=message)


def should_fail(issues: Iterable[Issue], fail_on: str) -> bool:
    thr = _LEVEL_ORDER.get((fail_on or "ERROR").upper(), 2)
    return any(_LEVEL_ORDER.get(i.level, 2) >= thr for i in issues)


# -----------------------------
# Exceptions
# -----------------------------
class LqbaeError(Exception):
    """Base class of every error raised by lqbae."""


class ShapeError(LqbaeError, ValueError):
    pass


class InvalidParamsError(LqbaeError):
    def __init__(self, issues: List[Issue]) -> None:
        self.issues = list(issues)
        codes = ", ".join(sorted({i.code for i in self.issues}))
        super().__init__(f"invalid system parameters: {codes}")


class PoleError(LqbaeError):
    def __init__(self, s: complex, eigenvalue: complex) -> None:
        self.s = s
        self.eigenvalue = eigenvalue
        super().__init__(f"s={s} lies within the pole margin of eigenvalue {eigenvalue}")


class HypothesisError(LqbaeError):
    """A required hypothesis does not hold; `residual` says by how much."""

    def __init__(self, message: str, residual: float = float("nan")) -> None:
        self.residual = float(residual)
        super().__init__(f"hypothesis not satisfied: {message} (residual {self.residual:.3e})")


class IllPosedLoopError(LqbaeError):
    def __init__(self, sigma_min: float, condition: float) -> None:
        self.sigma_min = sigma_min
        self.condition = condition
        super().__init__(
            f"feedback loop is ill-posed: sigma_min(I - S22 S_b) = {sigma_min:.3e}, condition number {condition:.3e}"
        )


class ConventionMismatchError(LqbaeError):
    pass


class NotPhysicallyRealizableError(LqbaeError):
    pass


class SimulationError(LqbaeError):
    pass


class FilterError(SimulationError):
    pass


class InternalConsistencyError(LqbaeError):
    pass


@dataclass
class Location:
    path: str
    line: Optional[int] = None
    column: Optional[int] = None
    field: Optional[str] = None

    def __str__(self) -> str:
        out = self.path
        if self.line is not None:
            out += f":{self.line}"
            if self.column is not None:
                out += f":{self.column}"
        if self.field:
            out += f" [{self.field}]"
        return out


class DescriptionError(LqbaeError):
    """Malformed system description file (exit code 2 at the CLI)."""

    def __init__(self, message: str, locations: Optional[List[Location]] = None) -> None:
        self.locations = list(locations or [])
        where = "; ".join(str(loc) for loc in self.locations)
        super().__init__(f"{where}: {message}" if where else message)

