#!/usr/bin/env python3
"""
Gaussian inputs for FieldPlan
Time-windowed Gaussian bumps summed into a per-field drive
"""

import math
from dataclasses import dataclass
from typing import Collection, Dict, Iterable, Optional

import numpy as np

from field_core import FieldGrid


def time_slack(*bounds: float) -> float:
    """Tolerance for comparing i*dt against a window edge"""
    return 1e-9 * max([1.0] + [abs(b) for b in bounds])


@dataclass(frozen=True)
class GaussianBump:
    amplitude: float
    center: float
    width: float

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError(f"input width must be > 0, got {self.width}")

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        return self.amplitude * np.exp(-(x - self.center) ** 2 / (2 * self.width ** 2))


@dataclass(frozen=True)
class ScheduledInput:
    bump: GaussianBump
    t_on: float
    t_off: float
    target_field: str
    name: Optional[str] = None

    def __post_init__(self):
        if not (math.isfinite(self.t_on) and math.isfinite(self.t_off)):
            raise ValueError("input window bounds must be finite")
        if not self.t_on < self.t_off:
            raise ValueError(f"input window must satisfy t_on < t_off, got [{self.t_on}, {self.t_off})")

    def is_active(self, t: float) -> bool:
        # Half-open window [t_on, t_off); step times i*dt carry rounding error
        slack = time_slack(self.t_on, self.t_off)
        return self.t_on - slack <= t < self.t_off - slack


def evaluate_inputs(inputs: Iterable[ScheduledInput], field_id: str, grid: FieldGrid, t: float,
                    fields: Optional[Collection[str]] = None,
                    profiles: Optional[Dict[GaussianBump, np.ndarray]] = None) -> np.ndarray:
    """
    Sum of the bumps targeting field_id that are active at time t.

    profiles, when given, caches each bump evaluated on this grid.
    """
    if fields is not None and field_id not in fields:
        raise KeyError(f"unknown field '{field_id}'")
    x = grid.sites
    total = np.zeros(grid.n_points)
    for scheduled in inputs:
        if scheduled.target_field == field_id and scheduled.is_active(t):
            if profiles is None:
                total += scheduled.bump.evaluate(x)
                continue
            profile = profiles.get(scheduled.bump)
            if profile is None:
                profile = profiles[scheduled.bump] = scheduled.bump.evaluate(x)
            total += profile
    return total
