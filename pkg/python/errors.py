#!/usr/bin/env python3
"""
FieldPlan error types
Scenario, model and numerical failures raised by the simulation modules
"""

from typing import Optional


class FieldPlanError(Exception):
    """Base class for every error raised by FieldPlan"""


class ModelError(FieldPlanError, ValueError):
    """Ill-formed model: unknown references, cycles, bad timescale ordering"""


class ScenarioError(FieldPlanError, ValueError):
    """Scenario file could not be parsed or violates an invariant"""

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        super().__init__(message)
        self.message = message
        self.path = path
        self.line = line

    def __str__(self) -> str:
        if self.path and self.line:
            return f"{self.path}:{self.line}: {self.message}"
        if self.path:
            return f"{self.path}: {self.message}"
        return self.message


class NumericalError(FieldPlanError, ArithmeticError):
    """Non-finite state produced by an integration step"""

    def __init__(self, message: str, field: Optional[str] = None,
                 step: Optional[int] = None, trial: Optional[str] = None):
        super().__init__(message)
        self.message = message
        self.field = field
        self.step = step
        self.trial = trial

    def with_context(self, field: Optional[str] = None, step: Optional[int] = None,
                     trial: Optional[str] = None) -> "NumericalError":
        """Return a copy carrying the location of the failure"""
        return NumericalError(
            self.message,
            field=field if field is not None else self.field,
            step=step if step is not None else self.step,
            trial=trial if trial is not None else self.trial,
        )

    def __str__(self) -> str:
        where = []
        if self.trial is not None:
            where.append(f"trial '{self.trial}'")
        if self.field is not None:
            where.append(f"field '{self.field}'")
        if self.step is not None:
            where.append(f"step {self.step}")
        if where:
            return f"{self.message} ({', '.join(where)})"
        return self.message


class PlateauError(FieldPlanError):
    """No usable plateau in a peak trace"""


class EmptyWindowError(PlateauError):
    """No valid peak entries inside the measurement window"""


class NoPlateauError(PlateauError):
    """Peak positions in the window spread more than the tolerance"""

    def __init__(self, message: str, std: float, tolerance: float):
        super().__init__(message)
        self.std = std
        self.tolerance = tolerance
