#!/usr/bin/env python3
"""
Tests for target extraction, plateau detection and the critically damped oscillator
"""

import math

import numpy as np
import pytest

from errors import EmptyWindowError, NoPlateauError, NumericalError
from task_dynamics import (OscillatorParams, OscillatorState, TargetTrace, closed_form_step_response,
                           extract_target, oscillator_step, plateau_target, run_oscillator)


def _step_response(params, x0, target, dt, duration):
    state = OscillatorState(x0, 0.0, 0.0)
    xs = [x0]
    for _ in range(int(round(duration / dt))):
        state = oscillator_step(state, params, target, dt)
        xs.append(state.x_tv)
    return np.arange(len(xs)) * dt, np.array(xs)


class TestOscillatorParams:
    def test_critical_damping(self):
        params = OscillatorParams(k_stiffness=4.0)
        assert params.b_damping == 4.0
        assert params.b_damping ** 2 == 4 * params.m * params.k_stiffness
        assert OscillatorParams(0.05).b_damping ** 2 == pytest.approx(0.2)

    @pytest.mark.parametrize("k", [0.0, -1.0, math.nan])
    def test_stiffness_must_be_positive(self, k):
        with pytest.raises(ValueError):
            OscillatorParams(k_stiffness=k)

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            OscillatorParams(1.0, method="rk4")


class TestOscillatorStep:
    @pytest.mark.parametrize("method", ["semi_implicit", "exact"])
    def test_equilibrium_is_unchanged(self, method):
        state = OscillatorState(2.5, 0.0, 1.0)
        nxt = oscillator_step(state, OscillatorParams(4.0, method), 2.5, 0.01)
        assert nxt.x_tv == 2.5 and nxt.v_tv == 0.0
        assert nxt.t == pytest.approx(1.01)

    def test_exact_propagator_matches_closed_form(self):
        params = OscillatorParams(4.0, method="exact")
        t, x = _step_response(params, 0.0, 1.0, 0.01, 10.0 / params.omega)
        assert np.max(np.abs(x - closed_form_step_response(t, 0.0, 1.0, 4.0))) < 1e-4

    def test_semi_implicit_tracks_closed_form(self):
        params = OscillatorParams(4.0)
        t, x = _step_response(params, 0.0, 1.0, 0.01, 10.0 / params.omega)
        assert np.max(np.abs(x - closed_form_step_response(t, 0.0, 1.0, 4.0))) < 1e-2

    @pytest.mark.parametrize("method", ["semi_implicit", "exact"])
    def test_no_overshoot_and_monotone(self, method):
        params = OscillatorParams(4.0, method)
        _, x = _step_response(params, 0.0, 1.0, 0.01, 20.0)
        assert np.all(x <= 1.0)
        assert np.all(np.diff(x) >= 0.0)

    @pytest.mark.parametrize("method", ["semi_implicit", "exact"])
    def test_converges_within_ten_time_constants(self, method):
        params = OscillatorParams(4.0, method)
        _, x = _step_response(params, 0.0, 1.0, 0.01, 10.0 / params.omega)
        assert abs(x[-1] - 1.0) < 1e-3

    def test_downward_step(self):
        params = OscillatorParams(0.05, "exact")
        _, x = _step_response(params, 3.0, 2.0, 0.1, 200.0)
        assert np.all(x >= 2.0)
        assert x[-1] == pytest.approx(2.0, abs=1e-3)

    def test_non_finite_aborts(self):
        with pytest.raises(NumericalError):
            oscillator_step(OscillatorState(0.0), OscillatorParams(1.0), math.inf, 0.01)

    def test_dt_must_be_positive(self):
        with pytest.raises(ValueError):
            oscillator_step(OscillatorState(0.0), OscillatorParams(1.0), 1.0, 0.0)


class TestRunOscillator:
    def test_piecewise_target_matches_piecewise_closed_form(self):
        params = OscillatorParams(1.0, "exact")
        dt = 0.01
        targets = np.array([1.0] * 300 + [2.0] * 300)
        x = run_oscillator(targets, params, dt)
        first = closed_form_step_response(np.arange(301) * dt, 0.0, 1.0, 1.0)
        np.testing.assert_allclose(x[:301], first, atol=1e-9)
        # after the switch the trajectory bends without a jump in position
        assert abs(x[301] - x[300]) < 0.01
        assert np.all(np.diff(x[300:]) > 0.0)

    def test_rests_before_any_target(self):
        x = run_oscillator([math.nan] * 10 + [1.0] * 10, OscillatorParams(1.0), 0.1, x0=0.5)
        assert np.all(x[:11] == 0.5)
        assert x[-1] > 0.5


class TestExtractTarget:
    def test_single_peak(self, grid):
        u = -np.ones(grid.n_points)
        u[grid.index_of(3.0)] = 2.0
        target, valid = extract_target(u, grid, 0.0)
        assert valid and target == pytest.approx(3.0)

    def test_hold_previous_target_below_threshold(self, grid):
        u = np.full(grid.n_points, -1.0)
        u[grid.index_of(-7.0)] = -0.5
        assert extract_target(u, grid, 0.0, previous_target=2.5) == (2.5, False)

    def test_tie_goes_to_smallest_x(self, grid):
        u = -np.ones(grid.n_points)
        u[grid.index_of(-5.0)] = 1.0
        u[grid.index_of(5.0)] = 1.0
        target, valid = extract_target(u, grid, 0.0)
        assert valid and target == pytest.approx(-5.0)

    def test_rests_at_tract_position_without_history(self, grid):
        u = -np.ones(grid.n_points)
        assert extract_target(u, grid, 0.0, x_tv=0.7) == (0.7, False)
        target, valid = extract_target(u, grid, 0.0)
        assert math.isnan(target) and not valid

    def test_refinement_is_off_by_default_and_sub_grid_when_on(self, grid):
        i = grid.index_of(1.0)
        u = -np.ones(grid.n_points)
        u[i - 1], u[i], u[i + 1] = 1.0, 2.0, 1.5
        plain, _ = extract_target(u, grid, 0.0)
        refined, _ = extract_target(u, grid, 0.0, refine=True)
        assert plain == pytest.approx(1.0)
        # vertex of the parabola through the three samples
        assert refined == pytest.approx(1.0 + 0.5 * (1.0 - 1.5) / (1.0 - 4.0 + 1.5) * grid.dx)
        assert 1.0 < refined < 1.0 + grid.dx / 2


class TestPlateauTarget:
    def _trace(self, values, valid=None):
        values = np.asarray(values, dtype=float)
        times = np.arange(values.shape[0]) * 1.0
        return TargetTrace("time-varying", times, values,
                           np.ones(values.shape[0], dtype=bool) if valid is None else valid)

    def test_constant_trace(self):
        assert plateau_target(self._trace([3.0] * 10), (0.0, 9.0), 0.05) == 3.0

    def test_mean_of_small_spread(self):
        assert plateau_target(self._trace([2.99, 3.00, 3.01]), (0.0, 2.0), 0.05) == pytest.approx(3.0)

    def test_noisy_trace_has_no_plateau(self):
        values = 3.0 + 0.2 * np.array([1.0, -1.0] * 10)
        with pytest.raises(NoPlateauError) as info:
            plateau_target(self._trace(values), (0.0, 19.0), 0.05)
        assert info.value.std == pytest.approx(0.2)

    def test_window_without_valid_entries(self):
        valid = np.array([True] * 5 + [False] * 5)
        with pytest.raises(EmptyWindowError):
            plateau_target(self._trace([3.0] * 10, valid), (6.0, 9.0), 0.05)

    def test_only_window_entries_count(self):
        trace = self._trace([1.0] * 5 + [3.0] * 5)
        assert plateau_target(trace, (5.0, 9.0), 0.05) == 3.0

    def test_window_edges_tolerate_accumulated_time(self):
        times = np.arange(2001) * 0.1
        trace = TargetTrace("time-varying", times, np.full(2001, 3.0), np.ones(2001, dtype=bool))
        assert plateau_target(trace, (180.0, 200.0)) == 3.0

    def test_as_constant(self):
        trace = self._trace([np.nan, 2.0, 2.2], np.array([False, True, True]))
        const = trace.as_constant(2.1)
        assert const.mode == "plateau-constant"
        assert np.all(const.values == 2.1)
        np.testing.assert_array_equal(const.valid, trace.valid)
        assert np.isnan(trace.values[0])
