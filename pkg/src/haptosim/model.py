"""Problem data for the myopic-diffusion haptotaxis system.

The continuous problem is

    u_t = (d(x) u)_xx - (d(x) u w_x)_x,     w_t = -u g(w)

on a bounded interval with zero total flux at both ends.  This module holds
the ingredients (motility coefficient ``d``, absorption ``g``, initial data)
together with the integrability checks that decide which of the qualitative
statements about the system apply to a given configuration.

Integrals of ``1/d`` and related quantities are singular wherever ``d``
vanishes.  Power-law coefficients get closed-form values; everything else is
integrated adaptively between the zeros of ``d`` and is declared divergent
when a midpoint sum on a doubled grid moves by more than one percent.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate

ArrayFn = Callable[[np.ndarray], np.ndarray]

#: relative change between n and 2n midpoint cells above which an integral is "unresolved"
REFINEMENT_TOL = 0.01


class ModelError(ValueError):
    """Invalid problem data."""


# ---------------------------------------------------------------------------
# grid and fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform cell-centred mesh on ``[left, right]``.

    ``zeros`` lists points that must not coincide with a cell centre (the
    zeros of the motility coefficient).
    """

    left: float
    right: float
    n_cells: int
    zeros: tuple = ()
    centers: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self.right > self.left:
            raise ModelError("grid needs right > left")
        if int(self.n_cells) != self.n_cells or self.n_cells < 8:
            raise ModelError("grid needs at least 8 cells")
        h = (self.right - self.left) / self.n_cells
        x = self.left + (np.arange(self.n_cells) + 0.5) * h
        tol = 1e-12 * (self.right - self.left)
        for z in self.zeros:
            if np.any(np.abs(x - z) <= tol):
                raise ModelError(f"a cell centre coincides with the zero x={z} of d")
        x.setflags(write=False)
        object.__setattr__(self, "centers", x)
        object.__setattr__(self, "zeros", tuple(float(z) for z in self.zeros))

    @property
    def h(self) -> float:
        return (self.right - self.left) / self.n_cells

    @property
    def length(self) -> float:
        return self.right - self.left

    @property
    def faces(self) -> np.ndarray:
        return self.left + np.arange(self.n_cells + 1) * self.h

    def refined(self, factor: int) -> "SpatialGrid":
        return SpatialGrid(self.left, self.right, self.n_cells * factor, self.zeros)


@dataclass(frozen=True)
class ScalarField:
    """Values at the cell centres of ``grid``."""

    grid: SpatialGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n_cells,):
            raise ModelError(f"field has {v.shape} values, grid has {self.grid.n_cells} cells")
        if not np.all(np.isfinite(v)):
            raise ModelError("field contains non-finite values")
        object.__setattr__(self, "values", v)

    def integral(self) -> float:
        return float(np.sum(self.values) * self.grid.h)


# ---------------------------------------------------------------------------
# motility coefficient
# ---------------------------------------------------------------------------


class Coefficient:
    """Base class for the motility coefficient ``d``.

    Subclasses implement ``value`` and ``derivative`` (vectorised) and may
    override the closed-form integrals, which return ``None`` when no
    closed form exists.
    """

    kind = "abstract"

    def value(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def derivative(self, x: np.ndarray) -> np.ndarray:
        """``d_x``; NaN where ``d`` vanishes."""
        raise NotImplementedError

    def zeros(self, a: float, b: float) -> list[float]:
        return []

    def inv_integral(self, a: float, b: float) -> Optional[float]:
        """Closed-form integral of ``1/d`` over ``(a, b)``."""
        return None

    def inv_log_integral(self, a: float, b: float) -> Optional[float]:
        """Closed-form integral of ``(1/d) ln(1/d)`` over ``(a, b)``."""
        return None

    def inv_cell_integrals(self, edges: np.ndarray) -> np.ndarray:
        """Integral of ``1/d`` over each cell ``[edges[i], edges[i+1]]``."""
        sub = 16
        lo, hi = edges[:-1], edges[1:]
        t = (np.arange(sub) + 0.5) / sub
        pts = lo[:, None] + (hi - lo)[:, None] * t[None, :]
        d = self.value(pts)
        with np.errstate(divide="ignore"):
            inv = np.where(d > 0, 1.0 / np.where(d > 0, d, 1.0), np.inf)
        return inv.mean(axis=1) * (hi - lo)

    def sup(self, a: float, b: float, n: int = 4097) -> float:
        x = np.linspace(a, b, n)
        return float(np.max(self.value(x)))

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Constant(Coefficient):
    c: float = 1.0
    kind = "constant"

    def __post_init__(self) -> None:
        if not self.c > 0:
            raise ModelError("constant coefficient must be positive")

    def value(self, x):
        return np.full(np.shape(x), float(self.c))

    def derivative(self, x):
        return np.zeros(np.shape(x))

    def inv_integral(self, a, b):
        return (b - a) / self.c

    def inv_log_integral(self, a, b):
        return (b - a) * math.log(1.0 / self.c) / self.c

    def inv_cell_integrals(self, edges):
        return np.diff(edges) / self.c

    def to_dict(self):
        return {"kind": "constant", "c": self.c}


def _pow_antideriv(r: np.ndarray | float, theta: float):
    # integral of s^{-theta} over (0, r)
    return np.power(r, 1.0 - theta) / (1.0 - theta)


def _pow_log_antideriv(r: float, theta: float) -> float:
    # integral of s^{-theta} ln s over (0, r)
    if r == 0.0:
        return 0.0
    q = 1.0 - theta
    return r**q * (math.log(r) / q - 1.0 / q**2)


def _signed_split(fn, x0: float, a: float, b: float) -> float:
    """Integrate a function of ``r = |x - x0|`` given its antiderivative from 0."""
    if x0 <= a:
        return fn(b - x0) - fn(a - x0)
    if x0 >= b:
        return fn(x0 - a) - fn(x0 - b)
    return fn(x0 - a) + fn(b - x0)


@dataclass(frozen=True)
class PowerLaw(Coefficient):
    """``d(x) = scale * |x - x0|**theta``.

    ``theta`` must lie in ``(0, 1)`` so that ``1/d`` is integrable; use
    :meth:`pathological` to build the excluded exponents for testing.
    """

    x0: float = 0.0
    theta: float = 0.5
    scale: float = 1.0
    kind = "power_law"

    def __post_init__(self) -> None:
        if not self.scale > 0:
            raise ModelError("power-law scale must be positive")
        if not (0.0 < self.theta < 1.0) and not getattr(self, "_allow_any", False):
            raise ModelError("power-law exponent must lie in (0, 1)")

    @classmethod
    def pathological(cls, x0: float, theta: float, scale: float = 1.0) -> "PowerLaw":
        """Power law with ``theta >= 1``; ``1/d`` is then not integrable."""
        if not theta > 0:
            raise ModelError("exponent must be positive")
        return _PathologicalPowerLaw(float(x0), float(theta), float(scale))

    def value(self, x):
        return self.scale * np.power(np.abs(np.asarray(x, dtype=float) - self.x0), self.theta)

    def derivative(self, x):
        r = np.asarray(x, dtype=float) - self.x0
        with np.errstate(divide="ignore", invalid="ignore"):
            dx = self.scale * self.theta * np.power(np.abs(r), self.theta - 1.0) * np.sign(r)
        return np.where(r == 0.0, np.nan, dx)

    def zeros(self, a, b):
        return [self.x0] if a <= self.x0 <= b else []

    def inv_integral(self, a, b):
        if self.theta >= 1.0 and a <= self.x0 <= b:
            return None
        if self.theta == 1.0:
            f = lambda r: math.log(r)  # noqa: E731  only used with x0 outside [a, b]
            return abs(_signed_split(f, self.x0, a, b)) / self.scale
        return float(_signed_split(lambda r: _pow_antideriv(r, self.theta), self.x0, a, b)) / self.scale

    def inv_log_integral(self, a, b):
        if self.theta >= 1.0:
            return None
        s, th = self.scale, self.theta
        i0 = self.inv_integral(a, b) * s
        i1 = _signed_split(lambda r: _pow_log_antideriv(r, th), self.x0, a, b)
        return (-math.log(s) * i0 - th * i1) / s

    def inv_cell_integrals(self, edges):
        if self.theta >= 1.0:
            return super().inv_cell_integrals(edges)
        th = self.theta
        r = edges - self.x0
        # signed antiderivative of |r|^{-theta}
        F = np.sign(r) * _pow_antideriv(np.abs(r), th)
        return np.diff(F) / self.scale

    def sup(self, a, b, n=4097):
        return float(max(self.value(np.array([a, b]))))

    def to_dict(self):
        return {"kind": "power_law", "x0": self.x0, "theta": self.theta, "scale": self.scale}


class _PathologicalPowerLaw(PowerLaw):
    _allow_any = True


@dataclass(frozen=True)
class ProductOfPowerLaws(Coefficient):
    """``d(x) = scale * prod_k |x - x0_k|**theta_k``."""

    factors: tuple = ((0.0, 0.5),)
    scale: float = 1.0
    kind = "product"

    def __post_init__(self) -> None:
        fs = tuple((float(x0), float(th)) for x0, th in self.factors)
        if not fs:
            raise ModelError("product needs at least one factor")
        for _, th in fs:
            if not 0.0 < th < 1.0:
                raise ModelError("power-law exponents must lie in (0, 1)")
        if len({x0 for x0, _ in fs}) != len(fs):
            raise ModelError("product factors need distinct centres")
        if not self.scale > 0:
            raise ModelError("scale must be positive")
        object.__setattr__(self, "factors", fs)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape, float(self.scale))
        for x0, th in self.factors:
            out = out * np.power(np.abs(x - x0), th)
        return out

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        d = self.value(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            logd = sum(th / (x - x0) for x0, th in self.factors)
            dx = d * logd
        return np.where(d > 0, dx, np.nan)

    def zeros(self, a, b):
        return sorted(x0 for x0, _ in self.factors if a <= x0 <= b)

    def to_dict(self):
        return {"kind": "product", "factors": [list(f) for f in self.factors], "scale": self.scale}


@dataclass(frozen=True)
class Tabulated(Coefficient):
    """Piecewise-linear interpolation of samples at uniform nodes on ``[a, b]``.

    The derivative is the forward difference quotient of the segment
    containing ``x`` (backward on the last node), so it is only first-order
    accurate at the nodes.
    """

    a: float = 0.0
    b: float = 1.0
    samples: tuple = ()
    kind = "tabulated"

    def __post_init__(self) -> None:
        s = np.asarray(self.samples, dtype=float)
        if s.ndim != 1 or s.size < 2:
            raise ModelError("tabulated coefficient needs at least two samples")
        if np.any(s < 0) or not np.all(np.isfinite(s)):
            raise ModelError("tabulated samples must be finite and nonnegative")
        object.__setattr__(self, "samples", tuple(s.tolist()))

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.a, self.b, len(self.samples))

    def value(self, x):
        return np.interp(x, self.nodes, np.asarray(self.samples))

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        xs, ys = self.nodes, np.asarray(self.samples)
        k = np.clip(np.searchsorted(xs, x, side="right") - 1, 0, len(xs) - 2)
        slope = (ys[k + 1] - ys[k]) / (xs[k + 1] - xs[k])
        return np.where(self.value(x) > 0, slope, np.nan)

    def zeros(self, a, b):
        xs, ys = self.nodes, np.asarray(self.samples)
        return [float(z) for z, y in zip(xs, ys) if y == 0.0 and a <= z <= b]

    def to_dict(self):
        return {"kind": "tabulated", "a": self.a, "b": self.b, "samples": list(self.samples)}


def eval_coefficient(spec: Coefficient, x: float) -> tuple[float, Optional[float]]:
    """Point evaluation ``(d(x), d_x(x))``; the derivative is ``None`` at zeros of ``d``."""
    d = float(spec.value(np.array([x]))[0])
    if d <= 0.0:
        return d, None
    dx = float(spec.derivative(np.array([x]))[0])
    return d, (None if math.isnan(dx) else dx)


# ---------------------------------------------------------------------------
# absorption
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Absorption:
    """Absorption rate ``g`` with derivative bounds ``ug <= g' <= og``.

    ``kind`` is ``"linear"`` (``g(s) = s``) or ``"bounded_perturbation"``
    (``g(s) = s + c (1 - exp(-s))``, ``c >= 0``).
    """

    kind: str = "linear"
    c: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in ("linear", "bounded_perturbation"):
            raise ModelError(f"unknown absorption kind {self.kind!r}")
        if self.c < 0:
            raise ModelError("perturbation strength must be nonnegative")

    @property
    def ug(self) -> float:
        return 1.0

    @property
    def og(self) -> float:
        return 1.0 + (self.c if self.kind == "bounded_perturbation" else 0.0)

    def g(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "linear":
            return s
        return s - self.c * np.expm1(-s)

    def dg(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "linear":
            return np.ones_like(s)
        return 1.0 + self.c * np.exp(-s)

    def g_over_s(self, s):
        """``g(s)/s`` continued by ``g'(0)`` near ``s = 0``."""
        s = np.asarray(s, dtype=float)
        if self.kind == "linear":
            return np.ones_like(s)
        small = s < 1e-14
        safe = np.where(small, 1.0, s)
        return np.where(small, 1.0 + self.c, self.g(safe) / safe)

    def check_bounds(self, s_max: float = 50.0, n: int = 2001) -> bool:
        s = np.linspace(0.0, s_max, n)
        dg = self.dg(s)
        gs = self.g(s)
        ok = float(self.g(0.0)) == 0.0
        ok &= bool(np.all(dg >= self.ug - 1e-12) and np.all(dg <= self.og + 1e-12))
        ok &= bool(np.all(gs >= self.ug * s - 1e-12) and np.all(gs <= self.og * s + 1e-12))
        return ok

    def to_dict(self):
        return {"kind": self.kind, "c": self.c}


# ---------------------------------------------------------------------------
# initial data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InitialData:
    """Cell values of ``u0`` and ``w0``, optionally with the generating functions."""

    u0: ScalarField
    w0: ScalarField
    u0_fn: Optional[ArrayFn] = field(default=None, compare=False)
    w0_fn: Optional[ArrayFn] = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.u0.grid != self.w0.grid:
            raise ModelError("u0 and w0 live on different grids")
        if np.any(self.u0.values < 0):
            raise ModelError("u0 must be nonnegative")
        if not np.any(self.u0.values > 0):
            raise ModelError("u0 must not vanish identically")
        if np.any(self.w0.values < 0):
            raise ModelError("w0 must be nonnegative")

    @classmethod
    def from_functions(cls, grid: SpatialGrid, u0_fn: ArrayFn, w0_fn: ArrayFn) -> "InitialData":
        x = grid.centers
        u = np.broadcast_to(np.asarray(u0_fn(x), dtype=float), x.shape).copy()
        w = np.broadcast_to(np.asarray(w0_fn(x), dtype=float), x.shape).copy()
        return cls(ScalarField(grid, u), ScalarField(grid, w), u0_fn, w0_fn)

    @property
    def grid(self) -> SpatialGrid:
        return self.u0.grid

    def sqrt_w0_seminorm(self) -> float:
        """Sum of squared difference quotients of ``sqrt(w0)`` times ``h``."""
        r = np.sqrt(self.w0.values)
        return float(np.sum(np.diff(r) ** 2) / self.grid.h)

    def w0_callable(self) -> ArrayFn:
        if self.w0_fn is not None:
            fn = self.w0_fn
            return lambda x: np.broadcast_to(np.asarray(fn(x), dtype=float), np.shape(x))
        xs, ys = self.grid.centers, self.w0.values
        return lambda x: np.interp(x, xs, ys)


# ---------------------------------------------------------------------------
# singular quadrature
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IntegralValue:
    value: float
    method: str  # "analytic" | "quadrature"
    resolved: bool
    refinement_change: float = 0.0

    def to_dict(self):
        return {
            "value": self.value,
            "method": self.method,
            "resolved": self.resolved,
            "refinement_change": self.refinement_change,
        }


def _midpoint(f: ArrayFn, a: float, b: float, n: int) -> float:
    h = (b - a) / n
    x = a + (np.arange(n) + 0.5) * h
    with np.errstate(divide="ignore", invalid="ignore"):
        y = f(x)
    y = np.where(np.isfinite(y), y, 0.0)
    return float(np.sum(y) * h)


def singular_integral(
    f: ArrayFn, a: float, b: float, breakpoints: Sequence[float] = (), n: int = 4096
) -> IntegralValue:
    """Integrate ``f`` over ``(a, b)`` where ``f`` may blow up at ``breakpoints``.

    Divergence is detected by comparing midpoint sums on ``n`` and ``2n``
    cells; resolved integrals are then evaluated adaptively on each piece
    between breakpoints.
    """
    m1 = _midpoint(f, a, b, n)
    m2 = _midpoint(f, a, b, 2 * n)
    scale = max(abs(m2), 1e-300)
    change = abs(m2 - m1) / scale if (m1 or m2) else 0.0
    if change > REFINEMENT_TOL:
        return IntegralValue(m2, "quadrature", False, change)
    pts = [a] + sorted(p for p in set(breakpoints) if a < p < b) + [b]
    total = 0.0
    scalar = lambda t: float(np.asarray(f(np.array([t])), dtype=float)[0])  # noqa: E731
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for lo, hi in zip(pts[:-1], pts[1:]):
            val, _ = integrate.quad(scalar, lo, hi, limit=400, epsabs=1e-12, epsrel=1e-10)
            total += val
    return IntegralValue(float(total), "quadrature", True, change)


def _safe_div(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(den > 0, num / np.where(den > 0, den, 1.0), np.inf)


# ---------------------------------------------------------------------------
# hypothesis report
# ---------------------------------------------------------------------------


@dataclass
class HypothesisReport:
    integral_inv_d: IntegralValue
    integral_inv_d_log: IntegralValue
    integral_w0_weight: IntegralValue
    w0_over_d_sup: IntegralValue
    w0_vanishes_at_zeros: bool
    absorption_bounds_ok: bool
    sqrt_w0_seminorm: float
    flags: dict

    @property
    def failed(self) -> dict:
        return {k: v for k, v in self.checks.items() if not v}

    @property
    def checks(self) -> dict:
        return {
            "inv_d_integrable": self.integral_inv_d.resolved and math.isfinite(self.integral_inv_d.value),
            "inv_d_llogl": self.integral_inv_d_log.resolved and math.isfinite(self.integral_inv_d_log.value),
            "w0_weight_finite": self.integral_w0_weight.resolved
            and math.isfinite(self.integral_w0_weight.value),
            "w0_over_d_bounded": self.w0_over_d_sup.resolved and math.isfinite(self.w0_over_d_sup.value),
            "absorption_bounds": self.absorption_bounds_ok,
            "sqrt_w0_h1": math.isfinite(self.sqrt_w0_seminorm),
        }

    def to_dict(self) -> dict:
        return {
            "integral_inv_d": self.integral_inv_d.to_dict(),
            "integral_inv_d_log": self.integral_inv_d_log.to_dict(),
            "integral_w0_weight": self.integral_w0_weight.to_dict(),
            "w0_over_d_sup": self.w0_over_d_sup.to_dict(),
            "w0_vanishes_at_zeros": self.w0_vanishes_at_zeros,
            "absorption_bounds_ok": self.absorption_bounds_ok,
            "sqrt_w0_seminorm": self.sqrt_w0_seminorm,
            "checks": self.checks,
            "flags": self.flags,
        }


def _sup_over_positive(spec: Coefficient, w0: ArrayFn, a: float, b: float, n: int) -> float:
    h = (b - a) / n
    x = np.concatenate([[a, b], a + (np.arange(n) + 0.5) * h])
    d = spec.value(x)
    pos = d > 0
    return float(np.max(w0(x[pos]) / d[pos]))


def _vanishes_at(init: InitialData, z: float) -> bool:
    if init.w0_fn is not None:
        val = float(init.w0_callable()(np.array([z]))[0])
        return abs(val) <= 1e-12 * max(1.0, float(np.max(init.w0.values)))
    # field-only data: linear extrapolation from the two nearest cells on each side
    x, w = init.grid.centers, init.w0.values
    tol = 1e-9 * max(1.0, float(np.max(w)))
    vals = []
    left = np.nonzero(x < z)[0]
    right = np.nonzero(x > z)[0]
    if left.size >= 2:
        i, k = left[-1], left[-2]
        vals.append(w[i] + (w[i] - w[k]) / (x[i] - x[k]) * (z - x[i]))
    if right.size >= 2:
        i, k = right[0], right[1]
        vals.append(w[i] + (w[k] - w[i]) / (x[k] - x[i]) * (z - x[i]))
    return bool(vals) and min(abs(v) for v in vals) <= tol


def validate_hypotheses(spec: Coefficient, init: InitialData, grid: SpatialGrid,
                        absorption: Optional[Absorption] = None) -> HypothesisReport:
    """Evaluate every structural hypothesis on ``d``, ``g`` and the initial data.

    Failed hypotheses are reported in ``flags``/``failed``; nothing is raised.
    """
    a, b = grid.left, grid.right
    zeros = spec.zeros(a, b)
    n = max(8 * grid.n_cells, 1024)
    w0 = init.w0_callable()

    def inv_d(x):
        return _safe_div(np.ones_like(x), spec.value(x))

    def inv_d_log(x):
        d = spec.value(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(d > 0, -np.log(np.where(d > 0, d, 1.0)) / np.where(d > 0, d, 1.0), np.inf)

    def w0_weight(x):
        d = spec.value(x)
        dx = spec.derivative(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = np.where(d > 0, np.nan_to_num(dx) ** 2 / np.where(d > 0, d, 1.0) * w0(x), np.inf)
        return val

    closed = spec.inv_integral(a, b)
    if closed is not None:
        inv = IntegralValue(float(closed), "analytic", math.isfinite(closed))
    else:
        inv = singular_integral(inv_d, a, b, zeros, n)

    closed_log = spec.inv_log_integral(a, b)
    if closed_log is not None:
        inv_log = IntegralValue(float(closed_log), "analytic", math.isfinite(closed_log))
    else:
        inv_log = singular_integral(inv_d_log, a, b, zeros, n)

    weight = singular_integral(w0_weight, a, b, zeros, n)

    s1 = _sup_over_positive(spec, w0, a, b, n)
    s2 = _sup_over_positive(spec, w0, a, b, 2 * n)
    ch = abs(s2 - s1) / max(abs(s2), 1e-300)
    sup = IntegralValue(s2, "quadrature", ch <= REFINEMENT_TOL, ch)

    vanish = all(_vanishes_at(init, z) for z in zeros)
    g_ok = absorption.check_bounds() if absorption is not None else True

    report = HypothesisReport(
        integral_inv_d=inv,
        integral_inv_d_log=inv_log,
        integral_w0_weight=weight,
        w0_over_d_sup=sup,
        w0_vanishes_at_zeros=vanish,
        absorption_bounds_ok=g_ok,
        sqrt_w0_seminorm=init.sqrt_w0_seminorm(),
        flags={},
    )
    c = report.checks
    base = c["inv_d_integrable"] and c["w0_weight_finite"] and c["absorption_bounds"] and c["sqrt_w0_h1"]
    report.flags = {
        "global_existence": base,
        "stabilization": base,
        "log_boundedness": base and c["inv_d_llogl"] and c["w0_over_d_bounded"],
    }
    return report


def mu_infinity(u0: ScalarField, spec: Coefficient, grid: SpatialGrid) -> float:
    """Limit amplitude ``(int u0) / (int 1/d)``."""
    closed = spec.inv_integral(grid.left, grid.right)
    if closed is None:
        zeros = spec.zeros(grid.left, grid.right)
        res = singular_integral(
            lambda x: _safe_div(np.ones_like(x), spec.value(x)), grid.left, grid.right, zeros,
            max(8 * grid.n_cells, 1024),
        )
        if not res.resolved:
            raise ModelError("integral of 1/d is not resolved; limit amplitude undefined")
        closed = res.value
    if not math.isfinite(closed):
        raise ModelError("integral of 1/d diverges; limit amplitude undefined")
    return u0.integral() / closed


def omega_d(spec: Coefficient, grid: SpatialGrid, delta: float) -> float:
    """Largest integral of ``1/d`` over cell sets of total measure ``delta``."""
    if not 0.0 < delta <= grid.length * (1 + 1e-12):
        raise ModelError("delta must lie in (0, |domain|]")
    cell = spec.inv_cell_integrals(grid.faces)
    return greedy_concentration(cell, grid.h, delta)


def greedy_concentration(cell_integrals: np.ndarray, h: float, delta: float) -> float:
    """Sum the largest cell integrals until measure ``delta`` is used up (last cell fractional)."""
    vals = np.sort(np.asarray(cell_integrals, dtype=float))[::-1]
    full = int(math.floor(delta / h + 1e-12))
    full = min(full, vals.size)
    total = float(np.sum(vals[:full]))
    frac = delta / h - full
    if full < vals.size and frac > 1e-12:
        total += frac * float(vals[full])
    return total
