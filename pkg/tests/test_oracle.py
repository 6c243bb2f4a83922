from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from haptosim.model import Absorption, ScalarField, SpatialGrid
from haptosim.oracle import (
    absorption_ode,
    convergence_order,
    heat_neumann,
    heat_series,
    moment_against_test_functions,
    moment_panel,
)

# root of t(w) = int_w^1 ds / (s + 1 - exp(-s)) = 1, found with 30-digit quadrature
PERTURBED_W_AT_1 = 0.16485131673205355


class TestHeat:
    def test_initial_condition(self):
        x = np.linspace(0, 1, 11)
        np.testing.assert_allclose(heat_neumann(x, 0.0, 2, 1.0), 1 + np.cos(2 * np.pi * x))

    def test_long_time(self):
        x = np.linspace(0, 1, 11)
        np.testing.assert_allclose(heat_neumann(x, 50.0, 1, 1.0), 1.0, atol=1e-12)

    def test_reference_value(self):
        assert heat_neumann(0.0, 0.1, 1, 1.0) == pytest.approx(1 + math.exp(-math.pi**2 * 0.1), rel=1e-15)
        assert heat_neumann(0.0, 0.1, 1, 1.0) == pytest.approx(1.3727078388534379, rel=1e-14)
        assert heat_series(np.array([0.0]), 0.1, 1.0)[0] == pytest.approx(1.3727078388534379, rel=1e-9)

    @given(x=st.floats(0.0, 1.0), t=st.floats(0.01, 1.0), k=st.integers(1, 2), D=st.floats(0.5, 2.0))
    def test_pde_residual(self, x, t, k, D):
        def f(xx, tt):
            return heat_neumann(xx, tt, k, 1.0, D)

        def d_t(step):
            return (f(x, t + step) - f(x, t - step)) / (2 * step)

        def d_xx(step):
            return (f(x + step, t) - 2 * f(x, t) + f(x - step, t)) / step**2

        # Richardson extrapolation removes the leading truncation term; the next one scales with |u_xx|
        u_t = (4 * d_t(2.5e-4) - d_t(5e-4)) / 3
        u_xx = (4 * d_xx(2.5e-3) - d_xx(5e-3)) / 3
        assert abs(u_t - D * u_xx) < 1e-8 * max(1.0, abs(D * u_xx))

    def test_rejects_negative_time(self):
        with pytest.raises(ValueError):
            heat_neumann(0.0, -1.0, 1, 1.0)


class TestAbsorption:
    def test_half_life(self):
        assert absorption_ode(1.0, 1.0, Absorption("linear"), math.log(2)) == pytest.approx(0.5, rel=1e-15)

    def test_no_absorption(self):
        assert absorption_ode(0.7, 0.0, Absorption("bounded_perturbation", 1.0), 3.0) == 0.7

    def test_perturbed_pinned(self):
        g = Absorption("bounded_perturbation", 1.0)
        assert absorption_ode(1.0, 1.0, g, 1.0) == pytest.approx(PERTURBED_W_AT_1, rel=1e-10)

    @given(w0=st.floats(0.01, 10), u=st.floats(0.0, 3), t=st.floats(0, 5))
    def test_linear_matches_closed_form(self, w0, u, t):
        g = Absorption("bounded_perturbation", 0.0)
        assert absorption_ode(w0, u, g, t) == pytest.approx(w0 * math.exp(-u * t), rel=1e-10, abs=1e-14)


class TestMoments:
    def test_panel_has_eight_fields(self):
        grid = SpatialGrid(-1, 1, 16)
        assert len(moment_panel(grid, np.ones(16))) == 8

    @given(vals=st.lists(st.floats(0.0, 10.0), min_size=16, max_size=16))
    def test_constant_gives_mass(self, vals):
        grid = SpatialGrid(0.0, 1.0, 16)
        u = np.array(vals)
        assert moment_against_test_functions(u, grid.h, [np.ones(16)])[0] == pytest.approx(
            ScalarField(grid, u).integral(), rel=1e-15, abs=1e-300)

    def test_d_gives_mu_times_length(self):
        grid = SpatialGrid(0.0, 2.0, 16)
        d = 1 + grid.centers
        u = np.linspace(1, 2, 16)
        mu = np.sum(d * u) * grid.h / grid.length
        assert moment_against_test_functions(u, grid.h, [d])[0] == pytest.approx(mu * grid.length)


class TestConvergenceOrder:
    @pytest.mark.parametrize("p", [1.0, 2.0])
    def test_exact_powers(self, p):
        hs = np.array([0.1, 0.05, 0.025, 0.0125])
        assert convergence_order(3.0 * hs**p, hs) == pytest.approx(p)

    def test_rejects_non_monotone(self):
        with pytest.raises(ValueError):
            convergence_order([1, 2, 3], [0.1, 0.3, 0.2])

    def test_rejects_short_tables(self):
        with pytest.raises(ValueError):
            convergence_order([1, 2], [0.1, 0.05])
