"""IMEX finite-volume integration of the regularised haptotaxis system.

Cell density ``u`` is advanced in conservation form with the diffusion written
as the second difference of ``v = d_eps u`` and treated implicitly (one
tridiagonal solve for ``v``), and the haptotactic flux ``v w_x`` treated
explicitly with upwinding.  The fibre density ``w`` receives an explicit
``eps``-diffusion and a semi-implicit absorption factor.  Both boundary faces
carry zero flux.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import solve_banded

from ._ops import face_slopes, fibre_diffusion, pad_flux, upwind_flux
from .diagnostics import Accumulators, instantaneous, record
from .model import Absorption, ScalarField, SpatialGrid
from .regularize import FamilySlice

logger = logging.getLogger(__name__)

#: samples in a row below the tolerance before an early steady-state stop
STEADY_STREAK = 10


class SolverError(RuntimeError):
    def __init__(self, message: str, step: int, t: float):
        super().__init__(f"{message} (step {step}, t={t:.17g})")
        self.step, self.t = step, t


@dataclass(frozen=True)
class SimState:
    t: float
    u: ScalarField
    w: ScalarField
    eps: float
    step_count: int = 0

    def __post_init__(self) -> None:
        if np.any(self.u.values < 0.0):
            raise ValueError("cell density must be nonnegative")
        if np.any(self.w.values <= 0.0):
            raise ValueError("fibre density must be positive")


@dataclass(frozen=True)
class SolverParams:
    t_end: float
    dt_max: float = 1e-2
    cfl_safety: float = 0.9
    sample_interval: float = 0.1
    tol_newton: float = 1e-12  # kept for config compatibility; every implicit solve here is linear
    steady_tol: Optional[float] = None

    def __post_init__(self) -> None:
        if not (self.dt_max > 0 and self.sample_interval > 0 and self.tol_newton > 0):
            raise ValueError("solver parameters must be positive")
        if self.t_end < 0:
            raise ValueError("t_end must be nonnegative")
        if not 0.0 < self.cfl_safety <= 1.0:
            raise ValueError("cfl_safety must lie in (0, 1]")


@dataclass(frozen=True)
class Problem:
    """Immutable data shared by every step of a run."""

    grid: SpatialGrid
    fslice: FamilySlice
    absorption: Absorption
    u0: np.ndarray
    M: float  # sup of w0 plus one
    delta0: float = 0.05

    def initial_state(self) -> SimState:
        return SimState(
            0.0,
            ScalarField(self.grid, np.array(self.u0, dtype=float)),
            ScalarField(self.grid, np.array(self.fslice.w0eps, dtype=float)),
            self.fslice.eps,
        )


def stable_dt(state: SimState, fslice: FamilySlice, g: Absorption, params: SolverParams) -> float:
    """Largest step keeping the explicit parts sign-preserving, times ``cfl_safety``.

    The advective bound uses the outflow speed ``d_i (s+_{i+1/2} + s-_{i-1/2})`` of
    each cell, which is the exact positivity limit of the upwind update.
    """
    h = state.u.grid.h
    w = state.w.values
    s = face_slopes(w, h)
    out_right = np.concatenate([np.maximum(s, 0.0), [0.0]])
    out_left = np.concatenate([[0.0], np.maximum(-s, 0.0)])
    adv = float(np.max(fslice.d * (out_right + out_left)))
    bounds = [params.dt_max]
    if adv > 0.0:
        bounds.append(h / adv)
    if fslice.eps > 0.0:
        bounds.append(h**2 * math.sqrt(g.ug * float(np.min(w))) / (2.0 * fslice.eps * float(np.max(fslice.d))))
    return params.cfl_safety * min(bounds)


def _diffusion_bands(d: np.ndarray, r: float) -> np.ndarray:
    n = d.size
    ab = np.empty((3, n))
    diag = np.full(n, 2.0)
    diag[0] = diag[-1] = 1.0
    ab[0, 0] = 0.0
    ab[0, 1:] = -r
    ab[1] = 1.0 / d + r * diag
    ab[2, :-1] = -r
    ab[2, -1] = 0.0
    return ab


def step(state: SimState, fslice: FamilySlice, g: Absorption, dt: float) -> SimState:
    """Advance one IMEX step of length ``dt``."""
    u, w = state.u.values, state.w.values
    d = fslice.d
    h = state.u.grid.h

    s = face_slopes(w, h)
    adv = pad_flux(upwind_flux(d * u, s))
    rhs = u - (dt / h) * np.diff(adv)
    try:
        v = solve_banded((1, 1), _diffusion_bands(d, dt / h**2), rhs, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SolverError(f"tridiagonal solve failed: {exc}", state.step_count, state.t) from exc
    u_new = v / d

    if fslice.eps > 0.0:
        w_face = 0.5 * (w[1:] + w[:-1])
        diff = fslice.eps * fibre_diffusion(w, d, g.g(w_face), h)
    else:
        diff = 0.0
    w_new = (w + dt * diff) / (1.0 + dt * u * g.g_over_s(w))

    if not (np.all(np.isfinite(u_new)) and np.all(np.isfinite(w_new))):
        raise SolverError("non-finite value", state.step_count + 1, state.t + dt)
    # round-off can leave -1e-300 style values; anything larger is a scheme failure
    if np.any(u_new < 0.0):
        if np.min(u_new) < -1e-14 * np.max(u_new):
            raise SolverError("negative cell density", state.step_count + 1, state.t + dt)
        u_new = np.maximum(u_new, 0.0)
    if np.any(w_new <= 0.0):
        raise SolverError("nonpositive fibre density", state.step_count + 1, state.t + dt)
    return SimState(
        state.t + dt,
        ScalarField(state.u.grid, u_new),
        ScalarField(state.w.grid, w_new),
        state.eps,
        state.step_count + 1,
    )


@dataclass
class Trajectory:
    records: list = field(default_factory=list)
    captures: dict = field(default_factory=dict)  # requested time -> SimState
    final: Optional[SimState] = None
    stopped_early: bool = False

    @property
    def times(self) -> np.ndarray:
        return np.array([r.t for r in self.records])

    def series(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])


def _targets(params: SolverParams, capture_times: Sequence[float]) -> list[float]:
    n = int(math.floor(params.t_end / params.sample_interval + 1e-9))
    ts = {round(k * params.sample_interval, 12) for k in range(1, n + 1)}
    if params.t_end > 0:
        ts.add(params.t_end)
    ts.update(t for t in capture_times if 0 < t <= params.t_end)
    return sorted(ts)


def run(problem: Problem, params: SolverParams, capture_times: Sequence[float] = ()) -> Trajectory:
    """Integrate to ``params.t_end``, recording diagnostics on the sample lattice.

    Steps are shortened so every sample and capture time is hit exactly.
    Cumulative integrals are advanced at every step.
    """
    fs, g = problem.fslice, problem.absorption
    h = problem.grid.h
    state = problem.initial_state()
    acc = Accumulators()
    traj = Trajectory()
    traj.records.append(record(state, fs, g, acc, problem.delta0))
    capture = {float(t) for t in capture_times}
    if 0.0 in capture:
        traj.captures[0.0] = state
    streak = 0
    length = problem.grid.length
    for target in _targets(params, capture_times):
        while state.t < target:
            dt = stable_dt(state, fs, g, params)
            if dt <= 0.0 or not math.isfinite(dt):
                raise SolverError("no admissible time step", state.step_count, state.t)
            if state.t + dt >= target * (1 - 1e-15) or target - (state.t + dt) < 1e-12:
                dt = target - state.t
                state = step(state, fs, g, dt)
                state = replace(state, t=target)
            else:
                state = step(state, fs, g, dt)
            acc.advance(state.t, instantaneous(state.u.values, state.w.values, fs.d, fs.d_x, fs.eps, g, h))
        rec = record(state, fs, g, acc, problem.delta0, inst=None)
        if target in capture:
            traj.captures[target] = state
        if abs(target / params.sample_interval - round(target / params.sample_interval)) < 1e-9 or target == params.t_end:
            traj.records.append(rec)
            if params.steady_tol is not None and rec.mu > 0:
                streak = streak + 1 if rec.dev_L1 / (rec.mu * length) < params.steady_tol else 0
                if streak >= STEADY_STREAK:
                    logger.info("steady state reached at t=%.6g", state.t)
                    traj.stopped_early = True
                    break
    traj.final = state
    logger.info("run finished: t=%.6g after %d steps", state.t, state.step_count)
    return traj
