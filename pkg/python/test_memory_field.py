#!/usr/bin/env python3
"""
Tests for the memory trace: decay, accumulation fixed point and broadening
"""

import math

import numpy as np
import pytest

from errors import ModelError, NumericalError
from field_core import KernelParams
from memory_field import MemoryLayer, MemorySpec, MemoryState, memory_step


def _planning_profile(grid, center=2.0, height=2.0, width=0.4):
    return -3.0 + (3.0 + height) * np.exp(-(grid.sites - center) ** 2 / (2 * width ** 2))


def test_timescale_ordering_enforced():
    with pytest.raises(ModelError, match="tau_decay must exceed tau_mem"):
        MemorySpec(tau_mem=200.0, tau_decay=100.0)
    with pytest.raises(ModelError):
        MemorySpec(tau_mem=100.0, tau_decay=100.0)
    with pytest.raises(ModelError):
        MemorySpec(tau_mem=1.0, tau_decay=2.0, accumulation="everywhere")


def test_subthreshold_decay_matches_analytic(grid):
    spec = MemorySpec(tau_mem=10.0, tau_decay=50.0)
    layer = MemoryLayer("memory", spec, grid)
    mem = MemoryState(np.linspace(0.0, 2.0, grid.n_points))
    start = mem.u_mem.copy()
    resting = np.full(grid.n_points, -3.0)
    for n in range(1, 1001):
        mem = layer.step(mem, resting, 0.1, integrator="exponential")
        if n % 100 == 0:
            np.testing.assert_allclose(mem.u_mem, start * math.exp(-n * 0.1 / 50.0), rtol=0, atol=1e-6)


def test_subthreshold_euler_decay_matches_discrete_closed_form(grid):
    spec = MemorySpec(tau_mem=10.0, tau_decay=50.0)
    mem = MemoryState(np.ones(grid.n_points))
    resting = np.full(grid.n_points, -3.0)
    for _ in range(300):
        mem = memory_step(mem, spec, resting, 0.1, grid=grid)
    np.testing.assert_allclose(mem.u_mem, (1.0 - 0.1 / 50.0) ** 300, rtol=1e-12)


def test_accumulation_reaches_convolution_fixed_point(grid):
    spec = MemorySpec(tau_mem=1.0, tau_decay=10.0, kernel=KernelParams(c_excite=1.0, sigma_excite=1.0))
    layer = MemoryLayer("memory", spec, grid)
    planning = _planning_profile(grid)
    mem = layer.empty_state()
    for _ in range(300):
        mem = layer.step(mem, planning, 0.1, integrator="exponential")

    x = grid.sites
    g = 1.0 / (1.0 + np.exp(-4.0 * planning))
    w = np.exp(-np.subtract.outer(x, x) ** 2 / 2.0) / math.sqrt(2 * math.pi)
    oracle = (w * g[None, :]).sum(axis=1) * grid.dx
    above = planning > 0.0
    assert above.sum() > 3
    np.testing.assert_allclose(mem.u_mem[above], oracle[above], rtol=0, atol=1e-6)
    assert np.all(mem.u_mem[~above] == 0.0)


def test_slow_decay_outlasts_accumulation(grid):
    spec = MemorySpec(tau_mem=20.0, tau_decay=100.0)
    layer = MemoryLayer("memory", spec, grid)
    planning = _planning_profile(grid)
    centre = grid.index_of(2.0)
    mem = layer.empty_state()
    for _ in range(200):
        mem = layer.step(mem, planning, 0.1, integrator="exponential")
    built = mem.u_mem[centre]
    for _ in range(200):
        mem = layer.step(mem, np.full(grid.n_points, -3.0), 0.1, integrator="exponential")
    # equal spans: decay at tau_decay loses less than accumulation at tau_mem gained
    assert mem.u_mem[centre] / built == pytest.approx(math.exp(-0.2), rel=1e-9)
    assert mem.u_mem[centre] / built > 1.0 - math.exp(-1.0)


def test_field_accumulation_broadens_the_trace(grid):
    planning = _planning_profile(grid, width=0.3)
    site = MemoryLayer("m", MemorySpec(tau_mem=1.0, tau_decay=10.0), grid)
    field = MemoryLayer("m", MemorySpec(tau_mem=1.0, tau_decay=10.0, accumulation="field"), grid)
    a, b = site.empty_state(), field.empty_state()
    for _ in range(200):
        a = site.step(a, planning, 0.1)
        b = field.step(b, planning, 0.1)

    above = planning > 0.0
    assert np.all(a.u_mem[~above] == 0.0)
    supra_extent = above.sum() * grid.dx
    trace_extent = (b.u_mem > 0.1 * b.u_mem.max()).sum() * grid.dx
    assert trace_extent > supra_extent


def test_non_finite_planning_aborts(grid):
    layer = MemoryLayer("memory", MemorySpec(tau_mem=1.0, tau_decay=10.0), grid)
    mem = MemoryState(np.full(grid.n_points, np.nan))
    with pytest.raises(NumericalError) as info:
        layer.step(mem, np.full(grid.n_points, -3.0), 0.1)
    assert info.value.field == "memory"
