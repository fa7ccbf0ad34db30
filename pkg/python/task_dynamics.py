#!/usr/bin/env python3
"""
Task dynamics for FieldPlan
Critically damped point-attractor for a tract variable whose target is read
out of the planning field, either per step or as one plateau constant
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from errors import EmptyWindowError, NoPlateauError, NumericalError
from field_core import FieldGrid
from field_inputs import time_slack

logger = logging.getLogger(__name__)

TARGET_MODES = ("time-varying", "plateau-constant")
OSCILLATOR_METHODS = ("semi_implicit", "exact")


@dataclass(frozen=True)
class OscillatorParams:
    k_stiffness: float
    method: str = "semi_implicit"
    m: float = field(default=1.0, init=False)

    def __post_init__(self):
        if not (math.isfinite(self.k_stiffness) and self.k_stiffness > 0):
            raise ValueError(f"k_stiffness must be a positive number, got {self.k_stiffness}")
        if self.method not in OSCILLATOR_METHODS:
            raise ValueError(f"unknown oscillator method '{self.method}', expected one of {OSCILLATOR_METHODS}")

    @property
    def b_damping(self) -> float:
        # b^2 = 4 m k
        return 2.0 * math.sqrt(self.k_stiffness)

    @property
    def omega(self) -> float:
        return math.sqrt(self.k_stiffness)


@dataclass(frozen=True)
class OscillatorState:
    x_tv: float
    v_tv: float = 0.0
    t: float = 0.0


@dataclass
class TargetTrace:
    """Per-step planning readout; values are NaN where no target exists yet"""
    mode: str
    times: np.ndarray
    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        if self.mode not in TARGET_MODES:
            raise ValueError(f"unknown target mode '{self.mode}', expected one of {TARGET_MODES}")
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        self.valid = np.asarray(self.valid, dtype=bool)
        if not (self.times.shape == self.values.shape == self.valid.shape):
            raise ValueError("target trace arrays must have equal length")

    def __len__(self) -> int:
        return self.times.shape[0]

    @property
    def any_valid(self) -> bool:
        return bool(self.valid.any())

    def as_constant(self, value: float) -> "TargetTrace":
        """Plateau-constant copy: value is the target at every step, validity flags kept"""
        values = np.full(self.values.shape, float(value))
        return TargetTrace("plateau-constant", self.times.copy(), values, self.valid.copy())


def extract_target(planning_u: np.ndarray, grid: FieldGrid, alpha: float,
                   previous_target: Optional[float] = None, *, x_tv: Optional[float] = None,
                   refine: bool = False) -> Tuple[float, bool]:
    """
    Argmax of the planning field when it is above threshold.

    Sub-threshold fields hold the previous target (or the current tract
    position when nothing has been planned yet); their argmax is never used.
    """
    u = np.asarray(planning_u, dtype=float)
    i = int(np.argmax(u))  # first maximum, i.e. smallest x
    if u[i] > alpha:
        x = grid.site(i)
        if refine and 0 < i < u.shape[0] - 1:
            curvature = u[i - 1] - 2.0 * u[i] + u[i + 1]
            if curvature < 0:
                x += 0.5 * (u[i - 1] - u[i + 1]) / curvature * grid.dx
        return float(x), True
    if previous_target is not None and math.isfinite(previous_target):
        return float(previous_target), False
    if x_tv is not None:
        return float(x_tv), False
    return math.nan, False


def _window_mask(times: np.ndarray, window: Tuple[float, float]) -> np.ndarray:
    t_start, t_end = window
    slack = time_slack(t_start, t_end)
    return (times >= t_start - slack) & (times <= t_end + slack)


def plateau_target(trace: TargetTrace, window: Tuple[float, float], std_tol: float = 0.05) -> float:
    if not std_tol > 0:
        raise ValueError(f"std_tol must be > 0, got {std_tol}")
    mask = trace.valid & _window_mask(trace.times, window)
    if not mask.any():
        raise EmptyWindowError(f"no above-threshold peak within [{window[0]:g}, {window[1]:g}]")
    positions = trace.values[mask]
    std = float(np.std(positions))
    if std >= std_tol:
        raise NoPlateauError(
            f"peak position spread {std:.4f} within [{window[0]:g}, {window[1]:g}] "
            f"is not below tolerance {std_tol:g}",
            std=std, tolerance=std_tol,
        )
    return float(np.mean(positions))


def oscillator_step(state: OscillatorState, params: OscillatorParams, target: float,
                    dt: float) -> OscillatorState:
    """
    Advance m*x'' + b*x' + k*(x - target) = 0 by dt.

    semi_implicit: a = -k(x - x*) - b v; v += a dt; x += v dt
    exact:         closed-form critically damped propagator, target held over dt
    """
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    k = params.k_stiffness
    if params.method == "semi_implicit":
        a = -k * (state.x_tv - target) - params.b_damping * state.v_tv
        v = state.v_tv + a * dt
        x = state.x_tv + v * dt
    else:
        w = params.omega
        e0 = state.x_tv - target
        decay = math.exp(-w * dt)
        slope = state.v_tv + w * e0
        x = target + (e0 + slope * dt) * decay
        v = (state.v_tv - w * dt * slope) * decay
    if not (math.isfinite(x) and math.isfinite(v)):
        raise NumericalError(f"non-finite tract variable at t={state.t + dt:g}")
    return OscillatorState(x, v, state.t + dt)


def closed_form_step_response(t: np.ndarray, x0: float, target: float, k_stiffness: float) -> np.ndarray:
    """x(t) = x* + (x0 - x*)(1 + wt)exp(-wt) for v0 = 0"""
    w = math.sqrt(k_stiffness)
    t = np.asarray(t, dtype=float)
    return target + (x0 - target) * (1.0 + w * t) * np.exp(-w * t)


def run_oscillator(targets: Sequence[float], params: OscillatorParams, dt: float,
                   x0: float = 0.0, v0: float = 0.0) -> np.ndarray:
    """
    Trajectory x_tv[0..len(targets)] driven by targets[i] over step i.

    NaN targets (nothing planned yet) leave the oscillator resting where it is.
    """
    state = OscillatorState(float(x0), float(v0), 0.0)
    trajectory = np.empty(len(targets) + 1)
    trajectory[0] = state.x_tv
    for i, target in enumerate(targets):
        if math.isnan(target):
            target = state.x_tv
        state = oscillator_step(state, params, float(target), dt)
        trajectory[i + 1] = state.x_tv
    return trajectory
