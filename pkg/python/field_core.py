#!/usr/bin/env python3
"""
Field core for FieldPlan
Spatial grid, Mexican-hat interaction kernel, sigmoid threshold and the
integration step of a one-dimensional dynamic neural field
"""

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import List, Optional

import numpy as np
from scipy.fft import irfft, next_fast_len, rfft
from scipy.signal import fftconvolve
from scipy.special import expit

from errors import NumericalError

logger = logging.getLogger(__name__)

INTEGRATORS = ("euler", "exponential")


@dataclass(frozen=True)
class FieldGrid:
    x_min: float
    x_max: float
    n_points: int

    def __post_init__(self):
        if not (math.isfinite(self.x_min) and math.isfinite(self.x_max)):
            raise ValueError("grid bounds must be finite")
        if self.x_min >= self.x_max:
            raise ValueError(f"grid bounds inverted: x_min={self.x_min} >= x_max={self.x_max}")
        if int(self.n_points) != self.n_points or self.n_points < 3:
            raise ValueError(f"n_points must be an integer >= 3, got {self.n_points}")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n_points - 1)

    @cached_property
    def sites(self) -> np.ndarray:
        # linspace pins the last site to x_max exactly; shared, so read-only
        sites = np.linspace(self.x_min, self.x_max, self.n_points)
        sites.setflags(write=False)
        return sites

    def site(self, i: int) -> float:
        if not 0 <= i < self.n_points:
            raise IndexError(f"site index {i} outside 0..{self.n_points - 1}")
        return float(self.sites[i])

    def index_of(self, x: float) -> int:
        """Index of the site nearest to x (clipped to the grid)"""
        i = int(round((x - self.x_min) / self.dx))
        return min(max(i, 0), self.n_points - 1)

    def offsets(self) -> np.ndarray:
        """Kernel offsets spanning -(x_max - x_min) .. +(x_max - x_min)"""
        n = self.n_points
        return np.arange(-(n - 1), n) * self.dx


@dataclass(frozen=True)
class KernelParams:
    c_excite: float = 0.0
    sigma_excite: float = 1.0
    c_inhibit: float = 0.0
    sigma_inhibit: float = 1.0
    c_global: float = 0.0

    def __post_init__(self):
        for name in ("c_excite", "c_inhibit", "c_global"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("sigma_excite", "sigma_inhibit"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")

    @property
    def is_zero(self) -> bool:
        return self.c_excite == 0 and self.c_inhibit == 0 and self.c_global == 0


@dataclass(frozen=True)
class SigmoidParams:
    beta: float = 4.0
    alpha: float = 0.0

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError(f"sigmoid slope beta must be > 0, got {self.beta}")


@dataclass(frozen=True)
class FieldSpec:
    tau: float
    h: float
    q: float = 0.0
    kernel: KernelParams = field(default_factory=KernelParams)
    sigmoid: SigmoidParams = field(default_factory=SigmoidParams)

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be > 0, got {self.tau}")
        if self.q < 0:
            raise ValueError(f"noise coefficient q must be >= 0, got {self.q}")


@dataclass
class FieldState:
    u: np.ndarray
    t: float = 0.0

    def copy(self) -> "FieldState":
        return FieldState(self.u.copy(), self.t)


@dataclass(frozen=True)
class Peak:
    left: float
    right: float
    position: float
    height: float

    @property
    def width(self) -> float:
        return self.right - self.left


def build_grid(x_min: float, x_max: float, n_points: int) -> FieldGrid:
    return FieldGrid(float(x_min), float(x_max), int(n_points))


def mexican_hat(offsets: np.ndarray, params: KernelParams) -> np.ndarray:
    """
    Interaction kernel evaluated at the given offsets.

    Amplitudes use c / sqrt(2*pi*sigma) with sigma (not sigma**2) under the
    root, followed by the Gaussian exp(-d**2 / (2*sigma**2)).
    """
    d = np.asarray(offsets, dtype=float)
    excite = params.c_excite / math.sqrt(2 * math.pi * params.sigma_excite) \
        * np.exp(-d ** 2 / (2 * params.sigma_excite ** 2))
    inhibit = params.c_inhibit / math.sqrt(2 * math.pi * params.sigma_inhibit) \
        * np.exp(-d ** 2 / (2 * params.sigma_inhibit ** 2))
    return excite - inhibit - params.c_global


def sigmoid(u: np.ndarray, params: SigmoidParams) -> np.ndarray:
    # expit saturates to 0/1 without overflow warnings
    return expit(params.beta * (np.asarray(u, dtype=float) - params.alpha))


def _check_kernel_row(u: np.ndarray, kernel_row: np.ndarray):
    if kernel_row.shape[0] != 2 * u.shape[0] - 1:
        raise ValueError(
            f"kernel row of length {kernel_row.shape[0]} does not span a grid of "
            f"{u.shape[0]} sites (expected {2 * u.shape[0] - 1})"
        )


class KernelSpectrum:
    """
    Real FFT of a fixed kernel row, zero-padded so the circular product equals
    the linear convolution. Built once per field and reused every step.
    """

    def __init__(self, kernel_row: np.ndarray, n_points: int):
        kernel_row = np.asarray(kernel_row, dtype=float)
        if kernel_row.shape[0] != 2 * n_points - 1:
            raise ValueError(
                f"kernel row of length {kernel_row.shape[0]} does not span a grid of "
                f"{n_points} sites (expected {2 * n_points - 1})"
            )
        self.n_points = n_points
        self.size = next_fast_len(3 * n_points - 2, real=True)
        self.spectrum = rfft(kernel_row, self.size)

    def convolve(self, g: np.ndarray) -> np.ndarray:
        full = irfft(rfft(g, self.size) * self.spectrum, self.size)
        n = self.n_points
        # same n outputs as fftconvolve(..., mode="valid")
        return full[n - 1:2 * n - 1]


def lateral_interaction(u: np.ndarray, kernel_row: np.ndarray,
                        sigmoid_params: SigmoidParams, dx: float,
                        spectrum: Optional[KernelSpectrum] = None) -> np.ndarray:
    """Truncated-boundary convolution of the kernel with g(u), FFT path"""
    u = np.asarray(u, dtype=float)
    g = sigmoid(u, sigmoid_params)
    if spectrum is not None and spectrum.n_points == u.shape[0]:
        return spectrum.convolve(g) * dx
    kernel_row = np.asarray(kernel_row, dtype=float)
    _check_kernel_row(u, kernel_row)
    # 'valid' keeps exactly the n outputs whose offsets stay inside the domain
    return fftconvolve(g, kernel_row, mode="valid") * dx


def lateral_interaction_direct(u: np.ndarray, kernel_row: np.ndarray,
                               sigmoid_params: SigmoidParams, dx: float) -> np.ndarray:
    """Same integral as lateral_interaction, summed directly in O(N^2)"""
    u = np.asarray(u, dtype=float)
    kernel_row = np.asarray(kernel_row, dtype=float)
    _check_kernel_row(u, kernel_row)
    n = u.shape[0]
    g = sigmoid(u, sigmoid_params)
    idx = np.arange(n)
    weights = kernel_row[np.subtract.outer(idx, idx) + n - 1]
    return weights @ g * dx


def field_step(state: FieldState, spec: FieldSpec, external_drive: np.ndarray, dt: float,
               rng: Optional[np.random.Generator], *, grid: FieldGrid,
               kernel_row: Optional[np.ndarray] = None,
               spectrum: Optional[KernelSpectrum] = None,
               integrator: str = "euler") -> FieldState:
    """
    Advance one field by dt.

    euler:       u + dt/tau * (-u + h + s + L) + q*sqrt(dt)/tau * xi
    exponential: the leak is integrated exactly over the step with s + L
                 held constant; noise uses the exact OU variance.
    """
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    if integrator not in INTEGRATORS:
        raise ValueError(f"unknown integrator '{integrator}', expected one of {INTEGRATORS}")
    u = state.u
    if u.shape[0] != grid.n_points:
        raise ValueError(f"state has {u.shape[0]} sites, grid has {grid.n_points}")
    drive = np.asarray(external_drive, dtype=float)
    if drive.shape != u.shape:
        raise ValueError(f"drive shape {drive.shape} does not match field shape {u.shape}")

    if spec.kernel.is_zero:
        interaction = 0.0
    else:
        if kernel_row is None:
            kernel_row = mexican_hat(grid.offsets(), spec.kernel)
        interaction = lateral_interaction(u, kernel_row, spec.sigmoid, grid.dx, spectrum)

    target = spec.h + drive + interaction
    if integrator == "euler":
        u_new = u + (dt / spec.tau) * (target - u)
        if spec.q > 0:
            u_new = u_new + (spec.q * math.sqrt(dt) / spec.tau) * rng.standard_normal(u.shape[0])
    else:
        decay = math.exp(-dt / spec.tau)
        u_new = target + (u - target) * decay
        if spec.q > 0:
            scale = (spec.q / spec.tau) * math.sqrt(spec.tau * (1.0 - decay ** 2) / 2.0)
            u_new = u_new + scale * rng.standard_normal(u.shape[0])

    if not np.all(np.isfinite(u_new)):
        bad = int(np.count_nonzero(~np.isfinite(u_new)))
        raise NumericalError(
            f"non-finite activation at {bad} site(s) at t={state.t + dt:g}; "
            f"dt={dt:g} is probably too large for tau={spec.tau:g}"
        )
    return FieldState(u_new, state.t + dt)


class NeuralField:
    """A named field with its kernel row precomputed for the grid"""

    def __init__(self, field_id: str, spec: FieldSpec, grid: FieldGrid):
        self.field_id = field_id
        self.spec = spec
        self.grid = grid
        self.kernel_row = mexican_hat(grid.offsets(), spec.kernel)
        self.spectrum = None if spec.kernel.is_zero else KernelSpectrum(self.kernel_row, grid.n_points)

    def resting_state(self) -> FieldState:
        return FieldState(np.full(self.grid.n_points, self.spec.h, dtype=float), 0.0)

    def step(self, state: FieldState, drive: np.ndarray, dt: float,
             rng: Optional[np.random.Generator], integrator: str = "euler") -> FieldState:
        try:
            return field_step(state, self.spec, drive, dt, rng, grid=self.grid,
                              kernel_row=self.kernel_row, spectrum=self.spectrum,
                              integrator=integrator)
        except NumericalError as e:
            raise e.with_context(field=self.field_id) from e


def find_peaks(u: np.ndarray, grid: FieldGrid, alpha: float = 0.0) -> List[Peak]:
    """Contiguous regions with u > alpha, left to right"""
    above = np.asarray(u) > alpha
    if not above.any():
        return []
    sites = grid.sites
    # Region boundaries from the edges of the boolean mask
    padded = np.concatenate(([False], above, [False]))
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    peaks = []
    for start, stop in zip(edges[::2], edges[1::2]):
        segment = u[start:stop]
        i = start + int(np.argmax(segment))
        peaks.append(Peak(left=float(sites[start]), right=float(sites[stop - 1]),
                          position=float(sites[i]), height=float(u[i])))
    return peaks


def count_peaks(u: np.ndarray, grid: FieldGrid, alpha: float = 0.0) -> int:
    return len(find_peaks(u, grid, alpha))
