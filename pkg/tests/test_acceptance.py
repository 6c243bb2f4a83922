"""Acceptance criteria on the degenerate scenario S* and the two oracle scenarios.

S*: domain (-1, 1), d = |x|^(1/2), g(s) = s, u0 = 1, w0 = |x|, family member
j = 4, 400 cells, t_end = 50.  Each test records one PASS/FAIL line that is
repeated in the terminal summary.
"""
from __future__ import annotations

import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from haptosim import cli
from haptosim.diagnostics import (
    dissipation_budget,
    energy_slope_check,
    equi_integrability,
    stabilization_report,
    write_series,
)
from haptosim.model import Absorption, Constant, InitialData, PowerLaw, SpatialGrid, mu_infinity
from haptosim.oracle import (
    absorption_ode,
    convergence_order,
    heat_neumann,
    moment_against_test_functions,
    moment_panel,
    steady_moments,
)
from haptosim.regularize import build_family, sandwich_margins, verify_family
from haptosim.solver import Problem, SolverParams, run

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"
T_END = 50.0
J_STAR = 4
SPEC = PowerLaw(0.0, 0.5)
LINEAR = Absorption("linear")
MU_INF = 0.5  # (int u0) / (int 1/d) = 2 / 4


def star_setup(n_cells: int, j_max: int = 6):
    grid = SpatialGrid(-1.0, 1.0, n_cells, (0.0,))
    init = InitialData.from_functions(grid, lambda x: np.ones_like(x), lambda x: np.abs(x))
    return grid, init, build_family(SPEC, init, j_max)


def star_problem(n_cells: int, j: int):
    grid, init, fam = star_setup(n_cells)
    return Problem(grid, fam.slice(j), LINEAR, init.u0.values, float(np.max(init.w0.values)) + 1.0, 0.01)


@pytest.fixture(scope="module")
def star():
    pb = star_problem(400, J_STAR)
    t0 = time.perf_counter()
    traj = run(pb, SolverParams(T_END, dt_max=0.01, sample_interval=0.1), capture_times=(0.1, 0.5, 1.0, 10.0))
    return pb, traj, time.perf_counter() - t0


@pytest.fixture(scope="module")
def fine_star():
    pb = star_problem(800, J_STAR)
    traj = run(pb, SolverParams(10.0, dt_max=0.01, sample_interval=0.1), capture_times=(0.1, 0.5, 1.0, 10.0))
    return pb, traj


def test_conservation(star, verdict):
    pb, traj, wall = star
    m = traj.series("mass_u")
    drift = float(np.max(np.abs(m - m[0])) / m[0])
    ok = drift <= 1e-11 and wall < 300
    assert verdict(1, "conservation", ok, f"relative drift {drift:.2e} <= 1e-11, runtime {wall:.1f}s < 300s, "
                                          f"{traj.final.step_count} steps")


def test_heat_oracle(verdict):
    errors, hs = [], []
    for n in (64, 128, 256):
        grid = SpatialGrid(0.0, 1.0, n)
        init = InitialData.from_functions(grid, lambda x: 1 + np.cos(np.pi * x), lambda x: np.zeros_like(x))
        # a deep member keeps the absorption-driven gradient of w = eps^(1/4) negligible
        fs = build_family(Constant(1.0), init, 10).slice(10)
        pb = Problem(grid, fs, LINEAR, init.u0.values, 1.0)
        traj = run(pb, SolverParams(0.1, dt_max=grid.h**2, cfl_safety=1.0, sample_interval=0.1))
        exact = heat_neumann(grid.centers, 0.1, 1, 1.0, diffusivity=float(fs.d[0]))
        errors.append(float(np.max(np.abs(traj.final.u.values - exact))))
        hs.append(grid.h)
    order = convergence_order(errors, hs)
    ok = 1.8 <= order <= 2.2 and errors[-1] < 2e-3
    assert verdict(2, "heat oracle", ok, f"order {order:.3f} in [1.8, 2.2], error(N=256) {errors[-1]:.2e} < 2e-3")


def test_absorption_oracle(verdict):
    grid = SpatialGrid(0.0, 1.0, 16)
    init = InitialData.from_functions(grid, lambda x: np.ones_like(x), lambda x: np.ones_like(x))
    fs = build_family(Constant(1.0), init, J_STAR).slice(J_STAR)
    pb = Problem(grid, fs, LINEAR, init.u0.values, 2.0)
    dt = 2e-4
    traj = run(pb, SolverParams(5.0, dt_max=dt, cfl_safety=1.0, sample_interval=1.0))
    w0 = float(fs.w0eps[0])
    exact = absorption_ode(w0, 1.0, LINEAR, 5.0)
    rel = float(np.max(np.abs(traj.final.w.values - exact)) / exact)
    ok = rel < 1e-3 and dt <= 1e-3
    assert verdict(3, "absorption oracle", ok, f"relative error {rel:.2e} < 1e-3 at t=5 with dt={dt:g}")


def test_energy_structure(star, verdict):
    pb, traj, _ = star
    recs = traj.records
    check = energy_slope_check(recs, pb.fslice.eps, LINEAR, pb.M)
    budget = dissipation_budget(recs, pb.fslice.eps, LINEAR, pb.M)
    cum = recs[-1].cum_dissipation
    ok = check.violations == 0 and cum <= budget + 1e-6
    assert verdict(4, "energy structure", ok,
                   f"{check.violations} violations (worst excess {check.worst_excess:.2e}), "
                   f"cum dissipation {cum:.6f} <= budget {budget:.6f}")


def test_stabilization(star, verdict):
    pb, traj, _ = star
    grid = pb.grid
    mu_inf = mu_infinity(pb.initial_state().u, SPEC, grid)
    rep = stabilization_report(traj.records, mu_inf, grid.length)
    panel = moment_panel(grid, SPEC.value(grid.centers))
    got = moment_against_test_functions(traj.final.u.values, grid.h, list(panel.values()))
    want = steady_moments(mu_inf, pb.fslice.d, grid.h, list(panel.values()))
    moment_err = max(abs(g - w) / abs(w) for g, w in zip(got, want))
    # steady amplitude of the regularised problem, reported for the analysis only
    mu_eps = float(traj.records[0].mass_u / np.sum(grid.h / pb.fslice.d))
    ok = (mu_inf == pytest.approx(MU_INF) and rep.mu_rel < 0.02 and rep.dev_rel < 0.05
          and rep.w_inf < 1e-3 and moment_err < 0.05)
    assert verdict(5, "stabilization", ok,
                   f"mu_inf {mu_inf:.6f}; |mu(t_end)-mu_inf|/mu_inf {rep.mu_rel:.4f} < 0.02; "
                   f"dev {rep.dev_rel:.2e} < 0.05; w_inf {rep.w_inf:.2e} < 1e-3; "
                   f"worst moment error {moment_err:.4f} < 0.05; regularised steady amplitude {mu_eps:.6f}")


def test_deviation_integrability(star, verdict):
    _, traj, _ = star
    rep = stabilization_report(traj.records, MU_INF, 2.0)
    ok = rep.final_decade_increase < 0.05
    assert verdict(6, "deviation integrability", ok,
                   f"cum_dev_sq increase over [45, 50] {rep.final_decade_increase:.2e} < 0.05")


def test_instantaneous_boundedness(star, fine_star, verdict):
    coarse = star[1].captures[0.5]
    fine = fine_star[1].captures[0.5]
    ln_c = float(np.max(np.log(star[0].fslice.d * coarse.u.values)))
    ln_f = float(np.max(np.log(fine_star[0].fslice.d * fine.u.values)))
    change = abs(ln_f - ln_c) / abs(ln_c)

    eps, peak = [], []
    grid, init, fam = star_setup(400)
    for j in (2, 3, 4, 5):
        fs = fam.slice(j)
        traj = run(Problem(grid, fs, LINEAR, init.u0.values, 2.0, 0.01), SolverParams(0.5, sample_interval=0.5))
        eps.append(fs.eps)
        peak.append(float(np.max(traj.final.u.values)))
    monotone = all(b > a for a, b in zip(peak, peak[1:]))
    slope = float(np.polyfit(np.log(eps), np.log(peak), 1)[0])
    ok = change < 0.10 and monotone and -0.35 <= slope <= -0.15
    assert verdict(7, "instantaneous boundedness", ok,
                   f"ln_du_max(0.5) change N=400->800 {change:.4f} < 0.10; max u increasing {monotone}; "
                   f"slope of log max u vs log eps {slope:.4f} in [-0.35, -0.15]")


def test_family_ledger(verdict, tmp_path):
    out = tmp_path / "family"
    status = cli.main(["verify-family", "--config", str(SCENARIOS / "s_star.json"), "--out", str(out)])
    _, _, fam = star_setup(400)
    ledger = verify_family(fam)
    bounds = max(max(r[c] for c in ("e43_5", "e43_55", "e43_6", "e43_99")) for r in ledger.rows)
    fields = [f.values for f in fam.d_eps_fields]
    monotone = all(np.max(b - a) <= 0.0 for a, b in zip(fields, fields[1:]))
    sandwich = all(lo >= 0 and hi >= 0 for lo, hi in sandwich_margins(fam))
    finite = math.isfinite(ledger.max_e45_4) and math.isfinite(ledger.max_e45_5)
    ok = status == 0 and bounds <= 1.0 + 1e-9 and monotone and sandwich and finite and len(ledger.rows) == 6
    assert verdict(8, "family ledger", ok,
                   f"max scaled bound {bounds:.6f} <= 1; max fisher term {ledger.max_e45_4:.4f}, "
                   f"max coefficient term {ledger.max_e45_5:.4f}; monotone {monotone}; sandwich {sandwich}")


def test_equi_integrability(star, fine_star, verdict):
    details, ok = [], True
    for t in (0.1, 1.0, 10.0):
        sc, sf = star[1].captures[t], fine_star[1].captures[t]
        vc = [equi_integrability(sc.u.values, sc.u.grid.h, dl) for dl in (0.05, 0.02, 0.01)]
        vf = [equi_integrability(sf.u.values, sf.u.grid.h, dl) for dl in (0.05, 0.02, 0.01)]
        mass = sc.u.integral()
        refine_ok = all(f <= 1.10 * c for c, f in zip(vc, vf))
        shrink_ok = all(b < a for a, b in zip(vc, vc[1:]))
        small_ok = vc[-1] < 0.05 * mass and vf[-1] < 0.05 * mass
        ok &= refine_ok and shrink_ok and small_ok
        details.append(f"t={t:g}: {vc[-1]:.4f}/{vf[-1]:.4f} vs {0.05 * mass:.2f}")
    assert verdict(9, "equi-integrability", ok, "; ".join(details))


def test_reproducibility(star, tmp_path, verdict):
    _, traj, _ = star
    api = tmp_path / "api_series.csv"
    write_series(api, traj.records)
    cfg = json.loads((SCENARIOS / "s_star.json").read_text())
    cfg["solver"]["sample_interval"] = 0.1
    cfg["outputs"]["snapshot_times"] = []
    path = tmp_path / "s_star.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / "cli"
    status = cli.main(["simulate", "--config", str(path), "--out", str(out)])
    same = status == 0 and (out / "series.csv").read_bytes() == api.read_bytes()
    assert verdict(10, "reproducibility", same, f"exit {status}; series.csv byte-identical across executions: {same}")
