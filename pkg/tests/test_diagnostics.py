from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from haptosim.diagnostics import (
    SERIES_COLUMNS,
    Accumulators,
    blowup_report,
    dissipation_budget,
    energy_slope_check,
    equi_integrability,
    instantaneous,
    record,
    stabilization_report,
    write_series,
)
from haptosim.model import Absorption, ScalarField, SpatialGrid, omega_d
from haptosim.regularize import FamilySlice
from haptosim.solver import Problem, SimState, SolverParams, run


def make_state(grid, u, w, eps=1e-8, t=0.0):
    return SimState(t, ScalarField(grid, np.asarray(u, float)), ScalarField(grid, np.asarray(w, float)), eps)


@pytest.fixture(scope="module")
def star_run(star_family, star_grid, star_init, linear_g):
    pb = Problem(star_grid, star_family.slice(4), linear_g, star_init.u0.values, 2.0, 0.01)
    return run(pb, SolverParams(3.0, sample_interval=0.1))


def test_header():
    assert ",".join(SERIES_COLUMNS) == (
        "t,mass_u,mass_w,w_inf,w_min,E1,E2,E3,E_total,D1,D2,D3,mu,dev_L1,"
        "ln_du_min,ln_du_max,cum_dissipation,cum_wx_l2,cum_dev_sq,equi_worst"
    )


class TestRecord:
    def test_steady_profile_has_no_dissipation(self, star_family, star_grid, linear_g):
        fs = star_family.slice(4)
        u = 0.5 / fs.d
        w = np.full(u.size, fs.eps**0.25)
        rec = record(make_state(star_grid, u, w, fs.eps), fs, linear_g, Accumulators(), 0.01)
        assert rec.D1 == pytest.approx(0.0, abs=1e-20)
        assert rec.D2 == 0.0
        assert rec.dev_L1 == pytest.approx(0.0, abs=1e-13)

    @pytest.mark.parametrize("j", [1, 2, 3])
    def test_entropy_of_uniform_state(self, flat_family, unit_grid, linear_g, j):
        fs = flat_family.slice(j)
        rec = record(make_state(unit_grid, np.ones(32), fs.w0eps, fs.eps), fs, linear_g, Accumulators(), 0.1)
        assert rec.E1 == pytest.approx(math.log(1 + 2 * 3.0**-j) * unit_grid.length, rel=1e-13)

    def test_energy_identity(self, star_run):
        for r in star_run.records:
            assert r.E_total == r.E1 + r.E2 + r.E3

    def test_mass_matches_initial(self, star_run):
        m = star_run.series("mass_u")
        assert np.all(np.abs(m - m[0]) <= 1e-12 * m[0])

    def test_cumulative_fields_nondecreasing(self, star_run):
        for name in ("cum_dissipation", "cum_wx_l2", "cum_dev_sq"):
            assert np.all(np.diff(star_run.series(name)) >= 0)

    def test_all_finite(self, star_run):
        assert all(np.all(np.isfinite(r.as_row())) for r in star_run.records)


class TestDeviation:
    @given(c=st.floats(0.1, 10.0))
    def test_zero_when_du_constant(self, c):
        grid = SpatialGrid(0.0, 1.0, 16)
        d = 1.0 + grid.centers
        inst = instantaneous(c / d, np.ones(16), d, np.ones(16), 1e-6, Absorption("linear"), grid.h)
        assert inst["dev_L1"] <= 1e-12 * c

    @given(v=arrays(np.float64, 16, elements=st.floats(0.1, 10.0)))
    def test_positive_when_du_varies(self, v):
        grid = SpatialGrid(0.0, 1.0, 16)
        d = np.ones(16)
        inst = instantaneous(v, np.ones(16), d, np.zeros(16), 1e-6, Absorption("linear"), grid.h)
        assert (inst["dev_L1"] > 0) == (np.ptp(v) > 0)


class TestEnergyCheck:
    def test_constant_energy(self, star_run):
        recs = [replace(star_run.records[0], t=float(k)) for k in range(5)]
        assert energy_slope_check(recs, 1e-8, Absorption("linear"), 2.0).violations == 0

    def test_reversed_trajectory_flagged(self, star_run):
        recs = star_run.records
        rev = [replace(r, t=recs[k].t) for k, r in enumerate(reversed(recs))]
        assert energy_slope_check(rev, 1e-8, Absorption("linear"), 2.0).violations > 0

    def test_dissipation_within_budget(self, star_run, star_family, linear_g):
        eps = star_family.epsilons[3]
        assert star_run.records[-1].cum_dissipation <= dissipation_budget(star_run.records, eps, linear_g, 2.0) + 1e-6

    def test_needs_two_samples(self, star_run):
        with pytest.raises(ValueError):
            energy_slope_check(star_run.records[:1], 1e-8, Absorption("linear"), 2.0)


class TestReports:
    def test_stabilization_of_steady_trajectory(self, star_run):
        steady = [replace(star_run.records[0], t=float(k), mu=0.5, dev_L1=0.0, w_inf=0.0, cum_dev_sq=0.0)
                  for k in range(11)]
        rep = stabilization_report(steady, 0.5, 2.0)
        assert rep.dev_rel == 0.0 and rep.mu_rel == 0.0 and rep.w_inf == 0.0 and rep.saturated

    def test_blowup_needs_positive_window(self, star_run):
        with pytest.raises(ValueError):
            blowup_report(star_run.records, star_run.records[-1].t)

    def test_blowup_bounds(self, star_run):
        rep = blowup_report(star_run.records, 0.5)
        assert math.isfinite(rep.max_ln_du) and rep.C1 == pytest.approx(math.exp(rep.max_ln_du))
        assert rep.ln_cubed_integral >= 0


class TestEquiIntegrability:
    def test_uniform(self):
        grid = SpatialGrid(0.0, 2.0, 20)
        u = np.full(20, 3.0)
        assert equi_integrability(u, grid.h, 0.35) == pytest.approx(0.35 * 3.0)
        assert equi_integrability(u, grid.h, 2.0) == pytest.approx(6.0)

    @given(u=arrays(np.float64, 400, elements=st.floats(0.0, 5.0)), delta=st.floats(0.005, 2.0))
    def test_holder_bound(self, star_family, star_grid, sqrt_coefficient, u, delta):
        d = star_family.slice(4).d
        v = u / d  # arbitrary state written as (d u) / d
        bound = omega_d(sqrt_coefficient, star_grid, delta) * float(np.max(d * v))
        assert equi_integrability(v, star_grid.h, delta) <= bound * (1 + 1e-12) + 1e-12


def test_accumulators_trapezoid():
    acc = Accumulators()
    base = {"D1": 1.0, "D2": 0.0, "D3": 0.0, "wx_l2": 2.0, "dev_L1": 1.0}
    acc.advance(0.0, base)
    acc.advance(2.0, {**base, "D1": 3.0})
    assert acc.cum_dissipation == pytest.approx(4.0)
    assert acc.cum_wx_l2 == pytest.approx(4.0)


def test_series_csv_round_trip(star_run, tmp_path):
    path = tmp_path / "series.csv"
    write_series(path, star_run.records)
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(SERIES_COLUMNS)
    first = [float(v) for v in lines[1].split(",")]
    assert first == star_run.records[0].as_row()
