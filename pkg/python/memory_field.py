#!/usr/bin/env python3
"""
Memory field for FieldPlan
Hebbian trace layer fed by a planning field: accumulates the smoothed
supra-threshold planning profile at rate tau_mem, decays at tau_decay
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from errors import ModelError, NumericalError
from field_core import (FieldGrid, KernelParams, KernelSpectrum, SigmoidParams, INTEGRATORS,
                        lateral_interaction, mexican_hat)

logger = logging.getLogger(__name__)

ACCUMULATION_MODES = ("site", "field")


@dataclass(frozen=True)
class MemorySpec:
    tau_mem: float
    tau_decay: float
    source: str = "planning"
    # Smoothing kernel w(x - x'); purely excitatory by default
    kernel: KernelParams = field(default_factory=lambda: KernelParams(c_excite=1.0, sigma_excite=1.0))
    sigmoid: SigmoidParams = field(default_factory=SigmoidParams)
    accumulation: str = "site"

    def __post_init__(self):
        if not self.tau_mem > 0:
            raise ModelError(f"tau_mem must be > 0, got {self.tau_mem}")
        if not self.tau_decay > self.tau_mem:
            raise ModelError(
                f"tau_decay must exceed tau_mem (got tau_decay={self.tau_decay}, tau_mem={self.tau_mem})"
            )
        if self.accumulation not in ACCUMULATION_MODES:
            raise ModelError(
                f"unknown accumulation mode '{self.accumulation}', expected one of {ACCUMULATION_MODES}"
            )


@dataclass
class MemoryState:
    u_mem: np.ndarray
    t: float = 0.0

    def copy(self) -> "MemoryState":
        return MemoryState(self.u_mem.copy(), self.t)


def memory_step(mem: MemoryState, spec: MemorySpec, planning_u: np.ndarray, dt: float, *,
                grid: FieldGrid, kernel_row: Optional[np.ndarray] = None,
                spectrum: Optional[KernelSpectrum] = None,
                integrator: str = "euler") -> MemoryState:
    """
    One step of the memory equation, split per site on the planning activation:
      u > alpha:  tau_mem * du = -u_mem + (w * g(u))
      u <= alpha: tau_decay * du = -u_mem
    """
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    if integrator not in INTEGRATORS:
        raise ValueError(f"unknown integrator '{integrator}', expected one of {INTEGRATORS}")
    planning_u = np.asarray(planning_u, dtype=float)
    m = mem.u_mem
    if planning_u.shape != m.shape:
        raise ValueError(f"planning field shape {planning_u.shape} does not match memory {m.shape}")

    above = planning_u > spec.sigmoid.alpha
    if spec.accumulation == "field":
        above = np.full(m.shape, bool(above.any()))

    if above.any():
        if kernel_row is None:
            kernel_row = mexican_hat(grid.offsets(), spec.kernel)
        target = lateral_interaction(planning_u, kernel_row, spec.sigmoid, grid.dx, spectrum)
    else:
        target = np.zeros_like(m)

    if integrator == "euler":
        rate = np.where(above, (target - m) / spec.tau_mem, -m / spec.tau_decay)
        m_new = m + dt * rate
    else:
        m_new = np.where(above,
                         target + (m - target) * math.exp(-dt / spec.tau_mem),
                         m * math.exp(-dt / spec.tau_decay))

    if not np.all(np.isfinite(m_new)):
        raise NumericalError(f"non-finite memory trace at t={mem.t + dt:g}")
    return MemoryState(m_new, mem.t + dt)


class MemoryLayer:
    """A named memory field bound to its source planning field"""

    def __init__(self, memory_id: str, spec: MemorySpec, grid: FieldGrid):
        self.memory_id = memory_id
        self.spec = spec
        self.grid = grid
        self.kernel_row = mexican_hat(grid.offsets(), spec.kernel)
        self.spectrum = KernelSpectrum(self.kernel_row, grid.n_points)

    def empty_state(self) -> MemoryState:
        return MemoryState(np.zeros(self.grid.n_points), 0.0)

    def step(self, mem: MemoryState, planning_u: np.ndarray, dt: float,
             integrator: str = "euler") -> MemoryState:
        try:
            return memory_step(mem, self.spec, planning_u, dt, grid=self.grid,
                               kernel_row=self.kernel_row, spectrum=self.spectrum,
                               integrator=integrator)
        except NumericalError as e:
            raise e.with_context(field=self.memory_id) from e
