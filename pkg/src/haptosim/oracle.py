"""Independent reference solutions for special cases of the model."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .model import Absorption, SpatialGrid


@dataclass(frozen=True)
class ReferenceSolution:
    kind: str  # "heat_neumann_mode" | "absorption_ode" | "steady_profile"
    evaluator: Callable[[np.ndarray, float], np.ndarray]
    params: dict

    def __call__(self, x, t):
        return self.evaluator(np.asarray(x, dtype=float), float(t))


def heat_neumann(x, t: float, k: int, L: float, diffusivity: float = 1.0, left: float = 0.0):
    """Unit-mean Neumann heat mode ``1 + cos(k pi (x - left) / L) exp(-D (k pi / L)^2 t)``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    kk = k * math.pi / L
    return 1.0 + np.cos(kk * (np.asarray(x, dtype=float) - left)) * math.exp(-diffusivity * kk**2 * t)


def heat_series(x, t: float, L: float, diffusivity: float = 1.0, n_terms: int = 64, n_quad: int = 4096,
                initial: Callable[[np.ndarray], np.ndarray] | None = None):
    """Truncated cosine-series solution for arbitrary initial data (default ``1 + cos(pi x / L)``)."""
    initial = initial or (lambda s: 1.0 + np.cos(math.pi * s / L))
    s = (np.arange(n_quad) + 0.5) * L / n_quad
    f = initial(s)
    x = np.asarray(x, dtype=float)
    out = np.full_like(x, float(np.mean(f)))
    for m in range(1, n_terms):
        km = m * math.pi / L
        coef = 2.0 * float(np.mean(f * np.cos(km * s)))
        out = out + coef * np.cos(km * x) * math.exp(-diffusivity * km**2 * t)
    return out


def absorption_ode(w0_val: float, u_const: float, g: Absorption, t: float) -> float:
    """Solution of ``w' = -u_const g(w)`` at time ``t``; closed form for linear ``g``."""
    if w0_val <= 0:
        raise ValueError("w0_val must be positive")
    if u_const == 0.0 or t == 0.0:
        return float(w0_val)
    if g.kind == "linear":
        return float(w0_val * math.exp(-u_const * t))
    sol = solve_ivp(
        lambda _t, y: -u_const * g.g(y),
        (0.0, t),
        [w0_val],
        method="RK45",
        rtol=1e-12,
        atol=1e-14,
    )
    return float(sol.y[0, -1])


def steady_profile(mu: float, d_eps: np.ndarray) -> np.ndarray:
    """Cell values of ``mu / d_eps``."""
    return mu / np.asarray(d_eps, dtype=float)


def moment_panel(grid: SpatialGrid, d: np.ndarray) -> dict[str, np.ndarray]:
    """Eight bounded test fields: constant, dyadic indicators, ``d`` and a sawtooth."""
    x = grid.centers
    a, L = grid.left, grid.length
    s = (x - a) / L
    return {
        "one": np.ones_like(x),
        "left_half": (s < 0.5).astype(float),
        "right_half": (s >= 0.5).astype(float),
        "first_quarter": (s < 0.25).astype(float),
        "last_quarter": (s >= 0.75).astype(float),
        "middle_half": ((s >= 0.25) & (s < 0.75)).astype(float),
        "d": np.asarray(d, dtype=float),
        "sawtooth": (4.0 * s) % 1.0,
    }


def moment_against_test_functions(u: np.ndarray, h: float, tests: Sequence[np.ndarray]) -> list[float]:
    """``sum u phi h`` for each test field ``phi``."""
    u = np.asarray(u, dtype=float)
    return [float(np.sum(u * np.asarray(phi)) * h) for phi in tests]


def steady_moments(mu: float, d_eps: np.ndarray, h: float, tests: Sequence[np.ndarray]) -> list[float]:
    """Moments of the steady profile ``mu / d_eps``."""
    return moment_against_test_functions(steady_profile(mu, d_eps), h, tests)


def convergence_order(errors, hs) -> float:
    """Least-squares slope of ``log(error)`` against ``log(h)``."""
    e = np.asarray(errors, dtype=float)
    h = np.asarray(hs, dtype=float)
    if e.size < 3 or e.size != h.size:
        raise ValueError("need at least three (h, error) pairs")
    if np.any(e <= 0):
        raise ValueError("errors must be positive")
    dh = np.diff(h)
    if not (np.all(dh > 0) or np.all(dh < 0)):
        raise ValueError("mesh widths must be strictly monotone")
    return float(np.polyfit(np.log(h), np.log(e), 1)[0])
