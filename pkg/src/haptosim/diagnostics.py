"""Monitored functionals of the regularised system: masses, energy, dissipation, deviation."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, fields
from typing import Optional, Sequence

import numpy as np

from ._ops import centered_gradient, face_slopes, fibre_diffusion
from .io import write_rows
from .model import Absorption, greedy_concentration

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    mass_u: float
    mass_w: float
    w_inf: float
    w_min: float
    E1: float
    E2: float
    E3: float
    E_total: float
    D1: float
    D2: float
    D3: float
    mu: float
    dev_L1: float
    ln_du_min: float
    ln_du_max: float
    cum_dissipation: float
    cum_wx_l2: float
    cum_dev_sq: float
    equi_worst: float

    def as_row(self) -> list[float]:
        return [float(getattr(self, f)) for f in SERIES_COLUMNS]


SERIES_COLUMNS = tuple(f.name for f in fields(DiagnosticsRecord))


def instantaneous(u: np.ndarray, w: np.ndarray, d: np.ndarray, d_x: np.ndarray, eps: float,
                  g: Absorption, h: float) -> dict:
    """All pointwise-in-time functionals of a state (no cumulative ones)."""
    length = u.size * h
    v = d * u
    wx = centered_gradient(w, h)
    gw = g.g(w)
    pos = u > 0
    E1 = float(np.sum(u[pos] * np.log(v[pos])) * h)
    E2 = float(0.5 * np.sum(d * wx**2 / gw) * h)
    E3 = float(g.og / g.ug**2 * np.sum(d_x**2 / d * w) * h)

    v_face = 0.5 * (v[1:] + v[:-1])
    vs = face_slopes(v, h)
    with np.errstate(divide="ignore", invalid="ignore"):
        d1 = np.where(v_face > 0, vs**2 / v_face, 0.0)
    D1 = float(np.sum(d1) * h)
    D2 = float(g.ug / (4.0 * g.og) * np.sum(d * u * wx**2 / w) * h)
    w_face = 0.5 * (w[1:] + w[:-1])
    dterm = fibre_diffusion(w, d, g.g(w_face), h)
    D3 = float(0.5 * eps * np.sum(dterm**2 / np.sqrt(gw)) * h)

    mu = float(np.sum(v) * h / length)
    dev = float(np.sum(np.abs(v - mu)) * h)
    with np.errstate(divide="ignore"):
        lnv = np.log(v)
    return {
        "mass_u": float(np.sum(u) * h),
        "mass_w": float(np.sum(w) * h),
        "w_inf": float(np.max(w)),
        "w_min": float(np.min(w)),
        "E1": E1,
        "E2": E2,
        "E3": E3,
        "E_total": E1 + E2 + E3,
        "D1": D1,
        "D2": D2,
        "D3": D3,
        "mu": mu,
        "dev_L1": dev,
        "ln_du_min": float(np.min(lnv)),
        "ln_du_max": float(np.max(lnv)),
        "wx_l2": float(np.sum(wx**2) * h),
    }


@dataclass
class Accumulators:
    """Trapezoidal time integrals of the dissipation, ``|w_x|^2`` and squared deviation."""

    t: Optional[float] = None
    last: tuple = (0.0, 0.0, 0.0)
    cum_dissipation: float = 0.0
    cum_wx_l2: float = 0.0
    cum_dev_sq: float = 0.0

    def advance(self, t: float, inst: dict) -> None:
        rates = (inst["D1"] + inst["D2"] + inst["D3"], inst["wx_l2"], inst["dev_L1"] ** 2)
        if self.t is not None:
            half = 0.5 * (t - self.t)
            self.cum_dissipation += half * (self.last[0] + rates[0])
            self.cum_wx_l2 += half * (self.last[1] + rates[1])
            self.cum_dev_sq += half * (self.last[2] + rates[2])
        self.t, self.last = t, rates


def equi_integrability(u: np.ndarray, h: float, delta: float) -> float:
    """Largest ``sum_E u h`` over cell sets of total measure at most ``delta``."""
    return greedy_concentration(np.asarray(u) * h, h, delta)


def record(state, fslice, g: Absorption, acc: Accumulators, delta0: float,
           inst: Optional[dict] = None) -> DiagnosticsRecord:
    """Diagnostics of ``state``; ``acc`` must already have been advanced to ``state.t``."""
    u, w = state.u.values, state.w.values
    h = state.u.grid.h
    if inst is None:
        inst = instantaneous(u, w, fslice.d, fslice.d_x, fslice.eps, g, h)
    if acc.t != state.t:
        acc.advance(state.t, inst)
    vals = {k: v for k, v in inst.items() if k != "wx_l2"}
    return DiagnosticsRecord(
        t=float(state.t),
        cum_dissipation=acc.cum_dissipation,
        cum_wx_l2=acc.cum_wx_l2,
        cum_dev_sq=acc.cum_dev_sq,
        equi_worst=equi_integrability(u, h, delta0),
        **vals,
    )


def energy_source(eps: float, g: Absorption, M: float) -> float:
    """Slope ``sqrt(og**5 M eps) / (2 ug**4)`` allowed for the energy."""
    return math.sqrt(g.og**5 * M * eps) / (2.0 * g.ug**4)


@dataclass(frozen=True)
class EnergyCheck:
    violations: int
    worst_excess: float
    tol: float
    source: float


def energy_slope_check(records: Sequence[DiagnosticsRecord], eps: float, g: Absorption, M: float,
                       tol: Optional[float] = None) -> EnergyCheck:
    """Count sample intervals on which the energy rises faster than the allowed source."""
    if len(records) < 2:
        raise ValueError("energy check needs at least two samples")
    E = np.array([r.E_total for r in records])
    t = np.array([r.t for r in records])
    if tol is None:
        tol = 1e-6 * abs(E[0])
    src = energy_source(eps, g, M)
    excess = np.diff(E) - src * np.diff(t) - tol
    bad = excess > 0
    worst = float(np.max(excess)) if excess.size else 0.0
    return EnergyCheck(int(np.count_nonzero(bad)), worst, float(tol), src)


def dissipation_budget(records: Sequence[DiagnosticsRecord], eps: float, g: Absorption, M: float) -> float:
    """Right-hand side of the integrated energy inequality at the final sample."""
    E = np.array([r.E_total for r in records])
    return float(E[0] - E.min() + energy_source(eps, g, M) * records[-1].t)


@dataclass(frozen=True)
class StabilizationReport:
    dev_rel: float
    mu_rel: float
    w_inf: float
    final_decade_increase: float
    saturated: bool


def stabilization_report(records: Sequence[DiagnosticsRecord], mu_inf: float, length: float) -> StabilizationReport:
    last = records[-1]
    t_end = last.t
    t0 = 0.9 * t_end
    ts = np.array([r.t for r in records])
    cds = np.array([r.cum_dev_sq for r in records])
    before = float(np.interp(t0, ts, cds))
    inc = (last.cum_dev_sq - before) / before if before > 0 else 0.0
    return StabilizationReport(
        dev_rel=last.dev_L1 / (mu_inf * length),
        mu_rel=abs(last.mu - mu_inf) / mu_inf,
        w_inf=last.w_inf,
        final_decade_increase=inc,
        saturated=inc < 0.05,
    )


@dataclass(frozen=True)
class BlowupReport:
    tau: float
    max_ln_du: float
    max_neg_ln_du: float
    C1: float
    C2: float
    ln_cubed_integral: float


def blowup_report(records: Sequence[DiagnosticsRecord], tau: float) -> BlowupReport:
    """Bounds on ``ln(d_eps u)`` over samples with ``t >= tau``."""
    if tau >= records[-1].t:
        raise ValueError(f"tau={tau} must be below the final time {records[-1].t}")
    sel = [r for r in records if r.t >= tau]
    hi = max(r.ln_du_max for r in sel)
    lo = max(-r.ln_du_min for r in sel)
    ts = np.array([r.t for r in sel])
    sup = np.array([max(abs(r.ln_du_max), abs(r.ln_du_min)) for r in sel])
    integral = float(np.sum(0.5 * np.diff(ts) * (sup[1:] ** 3 + sup[:-1] ** 3))) if ts.size > 1 else 0.0
    return BlowupReport(tau, hi, lo, math.exp(hi), math.exp(lo), integral)


def holder_modulus(w: np.ndarray, omega_h: float) -> float:
    """``max |w_{i+1} - w_i| / sqrt(omega_d(h))``; reported only."""
    return float(np.max(np.abs(np.diff(w))) / math.sqrt(omega_h)) if omega_h > 0 else math.inf


def write_series(path, records: Sequence[DiagnosticsRecord]) -> None:
    write_rows(path, SERIES_COLUMNS, (r.as_row() for r in records))


def records_to_dicts(records: Sequence[DiagnosticsRecord]) -> list[dict]:
    return [asdict(r) for r in records]
