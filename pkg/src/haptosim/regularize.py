"""Smooth positive approximations of ``d`` and compactly supported approximations of ``w0``.

Each member ``phi_j`` of the coefficient family is built in three steps:

1. squeeze ``d`` towards the domain centre, ``psi(x) = d(m + (1 + delta)(x - m))``,
   continued by the boundary values, so that it is flat near both endpoints;
2. convolve with a normalised bump of radius ``eta``;
3. lift by ``2 * 3**-j``.

``delta`` and ``eta`` are the largest values (found by bisection) keeping each
of the first two steps within ``1 / (2 * 3**j)`` of its input in sup norm and
within ``1 / (2j)`` in slope on a compact exhaustion of ``{d > 0}``.  That
yields ``d + 3**-j <= phi_j <= d + 3 * 3**-j``.

Everything is computed on a lattice of spacing ``h_work / 2`` where the working
grid refines the simulation grid; the lattice contains both the working-cell
centres and the simulation-cell centres.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np

from ._ops import centered_gradient, weighted_fisher
from .model import Coefficient, InitialData, ScalarField, SpatialGrid

logger = logging.getLogger(__name__)

#: refinement of the working grid relative to the simulation grid
REFINE = 8
MAX_BISECTIONS = 60
LEDGER_SLACK = 1e-9


class RegularizationError(RuntimeError):
    """A construction step could not meet its tolerance."""


class FamilyVerificationError(RuntimeError):
    def __init__(self, j: int, name: str, value: float):
        super().__init__(f"member j={j}: {name} = {value!r} exceeds 1")
        self.j, self.name, self.value = j, name, value


# ---------------------------------------------------------------------------
# coefficient members
# ---------------------------------------------------------------------------


def _bump(n_half: int, spacing: float, eta: float) -> np.ndarray:
    """Unit-mass discrete bump ``exp(-1/(1 - (x/eta)^2))`` on lattice nodes ``|x| < eta``."""
    if n_half <= 0:
        return np.ones(1)
    k = np.arange(-n_half, n_half + 1)
    r = k * spacing / eta
    inside = np.abs(r) < 1.0
    w = np.zeros(k.size)
    w[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
    return w / w.sum()


@dataclass(frozen=True)
class _Lattice:
    a: float
    b: float
    spacing: float
    n_inside: int  # lattice points in [a, b]
    pad: int

    @property
    def x(self) -> np.ndarray:
        k = np.arange(-self.pad, self.n_inside + self.pad)
        return self.a + k * self.spacing

    @property
    def inside(self) -> slice:
        return slice(self.pad, self.pad + self.n_inside)


@dataclass(frozen=True)
class CoefficientMember:
    """One member ``phi_j`` of the smooth coefficient family."""

    j: int
    delta: float
    eta: float
    squeeze_error: float
    mollify_error: float
    work_x: np.ndarray = dc_field(repr=False)
    work_phi: np.ndarray = dc_field(repr=False)
    work_phi_x: np.ndarray = dc_field(repr=False)
    field: ScalarField = dc_field(repr=False)
    derivative: ScalarField = dc_field(repr=False)
    endpoint_slopes: tuple = (0.0, 0.0)

    @property
    def work_h(self) -> float:
        return float(self.work_x[1] - self.work_x[0])


class _Builder:
    """Shared lattice evaluation for one coefficient on one simulation grid."""

    def __init__(self, spec: Coefficient, grid: SpatialGrid, refine: int = REFINE):
        self.spec, self.grid, self.refine = spec, grid, refine
        self.a, self.b = grid.left, grid.right
        self.mid = 0.5 * (self.a + self.b)
        self.R = 0.5 * grid.length
        self.h_work = grid.h / refine
        self.s = 0.5 * self.h_work
        self.n_work = grid.n_cells * refine
        self.n_inside = 2 * self.n_work + 1
        base = _Lattice(self.a, self.b, self.s, self.n_inside, 0)
        self.x_in = base.x
        self.d_in = spec.value(self.x_in)
        # working-cell centres are the odd lattice points inside [a, b]
        self.work_idx = np.arange(1, self.n_inside, 2)
        xw = self.x_in[self.work_idx]
        dw = spec.value(xw)
        with np.errstate(invalid="ignore"):
            dxw = spec.derivative(xw)
        self.work_dx = dxw
        self.sim_idx = (2 * np.arange(grid.n_cells) + 1) * refine

    def compact_mask(self, j: int) -> np.ndarray:
        """Working-grid points of ``{d >= 1/j}`` kept ``|domain|/(4j)`` away from the boundary."""
        xw = self.x_in[self.work_idx]
        margin = self.grid.length / (4.0 * j)
        dw = self.d_in[self.work_idx]
        return (dw >= 1.0 / j) & (xw >= self.a + margin) & (xw <= self.b - margin) & np.isfinite(self.work_dx)

    def squeeze(self, x: np.ndarray, delta: float) -> np.ndarray:
        y = np.clip(self.mid + (1.0 + delta) * (x - self.mid), self.a, self.b)
        return self.spec.value(y)

    def squeeze_slope(self, x: np.ndarray, delta: float) -> np.ndarray:
        y = self.mid + (1.0 + delta) * (x - self.mid)
        inside = (y > self.a) & (y < self.b)
        with np.errstate(invalid="ignore"):
            dy = (1.0 + delta) * self.spec.derivative(np.clip(y, self.a, self.b))
        return np.where(inside, dy, 0.0)

    def squeeze_errors(self, delta: float, j: int) -> tuple[float, float]:
        sup = float(np.max(np.abs(self.squeeze(self.x_in, delta) - self.d_in)))
        mask = self.compact_mask(j)
        if not mask.any():
            return sup, 0.0
        xw = self.x_in[self.work_idx][mask]
        slope = float(np.max(np.abs(self.squeeze_slope(xw, delta) - self.work_dx[mask])))
        return sup, slope

    def mollified(self, delta: float, eta: float) -> tuple[np.ndarray, _Lattice]:
        n_half = int(math.ceil(eta / self.s)) - 1 if eta > self.s else 0
        kernel = _bump(n_half, self.s, eta)
        pad = n_half + 2
        lat = _Lattice(self.a, self.b, self.s, self.n_inside, pad)
        psi = self.squeeze(lat.x, delta)
        if n_half == 0:
            return psi, lat
        ext = np.concatenate([np.full(n_half, psi[0]), psi, np.full(n_half, psi[-1])])
        return np.convolve(ext, kernel, mode="valid"), lat

    def mollify_errors(self, delta: float, eta: float, j: int) -> tuple[float, float]:
        phi, lat = self.mollified(delta, eta)
        psi = self.squeeze(lat.x, delta)
        ins = lat.inside
        sup = float(np.max(np.abs(phi[ins] - psi[ins])))
        mask = self.compact_mask(j)
        if not mask.any():
            return sup, 0.0
        k = self.work_idx[mask] + lat.pad
        slope_num = (phi[k + 1] - phi[k - 1]) / (2.0 * self.s)
        slope_ref = self.squeeze_slope(lat.x[k], delta)
        return sup, float(np.max(np.abs(slope_num - slope_ref)))


def _largest(ok, hi: float, what: str, j: int) -> float:
    """Bisection for the largest admissible parameter in ``(0, hi]``."""
    if ok(hi):
        return hi
    lo = 0.0
    for _ in range(MAX_BISECTIONS):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
        if lo > 0.0 and hi - lo <= 1e-3 * lo:
            break
    if lo <= 0.0:
        raise RegularizationError(f"member j={j}: no admissible {what} after {MAX_BISECTIONS} bisections")
    return lo


def build_member(spec: Coefficient, grid: SpatialGrid, j: int, refine: int = REFINE,
                 builder: Optional[_Builder] = None) -> CoefficientMember:
    if j < 1:
        raise ValueError("family index must be >= 1")
    bld = builder or _Builder(spec, grid, refine)
    tol = 1.0 / (2.0 * 3.0**j)
    tol_slope = 1.0 / (2.0 * j)

    def delta_ok(delta):
        sup, slope = bld.squeeze_errors(delta, j)
        return sup <= tol and slope <= tol_slope

    delta = _largest(delta_ok, 1.0 - 1e-9, "squeeze parameter", j)
    sq_sup, _ = bld.squeeze_errors(delta, j)

    # keep at least one working cell of flat profile next to each endpoint
    eta_cap = min(1.0 - 1e-9, delta * bld.R / (1.0 + delta) - bld.h_work)
    if eta_cap <= bld.s:
        eta = 0.0
    else:
        def eta_ok(eta):
            sup, slope = bld.mollify_errors(delta, eta, j)
            return sup <= tol and slope <= tol_slope

        try:
            eta = _largest(eta_ok, eta_cap, "mollifier radius", j)
        except RegularizationError:
            # only the identity kernel meets the tolerance on this lattice
            logger.warning("member j=%d: mollification unresolved on the working grid; using eta=0", j)
            eta = 0.0
    mo_sup, _ = bld.mollify_errors(delta, eta, j) if eta > 0 else (0.0, 0.0)

    phi_hat, lat = bld.mollified(delta, eta)
    phi = phi_hat + 2.0 / 3.0**j
    k_work = bld.work_idx + lat.pad
    k_sim = bld.sim_idx + lat.pad
    two_s = 2.0 * bld.s
    work_phi = phi[k_work]
    work_phi_x = (phi[k_work + 1] - phi[k_work - 1]) / two_s
    sim_phi = phi[k_sim]
    sim_phi_x = (phi[k_sim + 1] - phi[k_sim - 1]) / two_s
    k_a, k_b = lat.pad, lat.pad + bld.n_inside - 1
    ends = ((phi[k_a + 1] - phi[k_a - 1]) / two_s, (phi[k_b + 1] - phi[k_b - 1]) / two_s)
    logger.debug("member j=%d: delta=%.3e eta=%.3e", j, delta, eta)
    return CoefficientMember(
        j=j,
        delta=delta,
        eta=eta,
        squeeze_error=sq_sup,
        mollify_error=mo_sup,
        work_x=bld.x_in[bld.work_idx],
        work_phi=work_phi,
        work_phi_x=work_phi_x,
        field=ScalarField(grid, sim_phi),
        derivative=ScalarField(grid, sim_phi_x),
        endpoint_slopes=(float(ends[0]), float(ends[1])),
    )


def build_d_eps(spec: Coefficient, grid: SpatialGrid, j: int, refine: int = REFINE) -> tuple[ScalarField, ScalarField]:
    """Cell values and slopes of the ``j``-th smooth positive coefficient."""
    m = build_member(spec, grid, j, refine)
    return m.field, m.derivative


# ---------------------------------------------------------------------------
# initial-data members
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PositivityInterval:
    """Maximal interval of ``{d > 0}``; an end is closed iff it is a domain endpoint with ``d > 0``."""

    index: int  # 1-based
    a: float
    b: float
    closed_left: bool
    closed_right: bool


def positivity_intervals(spec: Coefficient, grid: SpatialGrid) -> list[PositivityInterval]:
    zs = sorted(set(spec.zeros(grid.left, grid.right)))
    pts = sorted(set([grid.left, grid.right] + zs))
    out = []
    for lo, hi in zip(pts[:-1], pts[1:]):
        if hi - lo <= 0:
            continue
        out.append(
            PositivityInterval(
                index=len(out) + 1,
                a=lo,
                b=hi,
                closed_left=(lo == grid.left and lo not in zs),
                closed_right=(hi == grid.right and hi not in zs),
            )
        )
    return out


def _sup_d(spec: Coefficient, lo: float, hi: float) -> float:
    return spec.sup(lo, hi)


def _ramp_cap(spec: Coefficient, iv: PositivityInterval) -> float:
    """Largest width keeping ``d <= 2**-i`` on the doubled neighbourhood of each degenerate end."""
    level = 2.0 ** (-iv.index)
    half = 0.5 * (iv.b - iv.a)

    def ok(dl):
        good = True
        if not iv.closed_left:
            good &= _sup_d(spec, iv.a, min(iv.a + 2 * dl, iv.b)) <= level
        if not iv.closed_right:
            good &= _sup_d(spec, max(iv.b - 2 * dl, iv.a), iv.b) <= level
        return good

    if iv.closed_left and iv.closed_right:
        return math.inf
    hi = half
    if ok(hi):
        return hi
    lo = 0.0
    for _ in range(MAX_BISECTIONS):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


def ramp_widths(spec: Coefficient, grid: SpatialGrid, j: int) -> dict[int, float]:
    """Ramp width for every positivity interval at stage ``j``."""
    out = {}
    for iv in positivity_intervals(spec, grid):
        quarter = 0.25 * (iv.b - iv.a) * (1.0 - 1e-9)
        out[iv.index] = min(quarter, 1.0 / j, _ramp_cap(spec, iv))
    return out


def cutoff(spec: Coefficient, grid: SpatialGrid, j: int, x: Optional[np.ndarray] = None) -> np.ndarray:
    """Piecewise-linear cut-off vanishing near every zero of ``d``."""
    x = grid.centers if x is None else x
    widths = ramp_widths(spec, grid, j)
    zeta = np.zeros_like(x, dtype=float)
    for iv in positivity_intervals(spec, grid):
        if iv.index > j:
            continue
        dl = widths[iv.index]
        z = np.ones_like(x, dtype=float)
        if not iv.closed_left:
            z = np.minimum(z, np.clip((x - iv.a - dl) / dl, 0.0, 1.0))
        if not iv.closed_right:
            z = np.minimum(z, np.clip((iv.b - dl - x) / dl, 0.0, 1.0))
        inside = (x >= iv.a) & (x <= iv.b)
        zeta += np.where(inside, z, 0.0)
    return zeta


def build_w0j(w0: ScalarField, spec: Coefficient, grid: SpatialGrid, j: int) -> ScalarField:
    """``zeta_j**2 * w0``: the initial fibre density cut off near the zeros of ``d``."""
    h = grid.h
    for iv in positivity_intervals(spec, grid):
        if (iv.b - iv.a) < 4 * h * (1 - 1e-12):
            raise RegularizationError(
                f"positivity interval ({iv.a}, {iv.b}) spans fewer than 4 cells"
            )
    zeta = cutoff(spec, grid, j)
    return ScalarField(grid, zeta**2 * w0.values)


# ---------------------------------------------------------------------------
# epsilon selection and the assembled family
# ---------------------------------------------------------------------------


def _inv_pow(value: float, power: float) -> float:
    """``value**power`` for a negative ``power``, with ``0 -> +inf``."""
    if value <= 0.0:
        return math.inf
    return value**power


def _halve_until(pred, j: int, what: str) -> float:
    eps = 1.0
    for _ in range(MAX_BISECTIONS):
        if pred(eps):
            return eps
        eps *= 0.5
    raise RegularizationError(f"member j={j}: {what} not met after {MAX_BISECTIONS} halvings")


def member_integrals(m: CoefficientMember) -> dict:
    """Working-grid quadratures of the slope functionals of ``phi_j``."""
    p, px, hw = m.work_phi, m.work_phi_x, m.work_h
    return {
        "slope2_phi3": float(np.sum(px**2 / p**3) * hw),
        "slope4_phi2": float(np.sum(px**4 / p**2) * hw),
        "log_slope_sup": float(np.max(np.abs(px / p))),
        "phi_min": float(np.min(p)),
    }


@dataclass(frozen=True)
class EpsilonChoice:
    eps: float
    candidates: dict


def select_epsilons(
    members: list[CoefficientMember],
    w0j: list[ScalarField],
    spec: Coefficient,
    w0: ScalarField,
) -> list[EpsilonChoice]:
    """Choose the decreasing regularisation parameters ``eps_1 > eps_2 > ...``.

    ``members[k]`` and ``w0j[k]`` belong to ``j = k + 1``.  Zero-valued slope
    integrals impose no constraint.
    """
    grid = w0.grid
    x, h = grid.centers, grid.h
    d = spec.value(x)
    with np.errstate(invalid="ignore"):
        dx = np.nan_to_num(spec.derivative(x))
    c1 = max(weighted_fisher(d, v.values, h) for v in w0j)
    pos = d > 0
    c2 = float(np.sum(dx[pos] ** 2 / d[pos] * w0.values[pos]) * h)
    root_len = math.sqrt(grid.length)

    out: list[EpsilonChoice] = []
    prev = 1.0
    for k, (m, wj) in enumerate(zip(members, w0j)):
        j = k + 1
        ints = member_integrals(m)
        phi, phix = m.field.values, m.derivative.values

        def first(eps, phi=phi, wj=wj):
            return weighted_fisher(phi, wj.values + eps**0.25, h) <= c1 + 1.0

        def second(eps, phi=phi, phix=phix, wj=wj):
            val = float(np.sum(phix**2 / phi * (wj.values + eps**0.25)) * h)
            return val <= c2 + 1.0 + root_len

        cand = {
            "half_previous": prev / 2.0,
            "power_floor": 3.0 ** (-4 * j),
            "slope2_phi3": _inv_pow(ints["slope2_phi3"], -0.5),
            "slope4_phi2": _inv_pow(ints["slope4_phi2"], -2.0),
            "log_slope_sup": _inv_pow(ints["log_slope_sup"], -4.0),
            "w0_fisher": _halve_until(first, j, "initial fibre Fisher bound"),
            "w0_weight": _halve_until(second, j, "initial fibre weight bound"),
            "reciprocal_index": 1.0 / j,
        }
        eps = min(cand.values())
        out.append(EpsilonChoice(eps, cand))
        prev = eps
    return out


@dataclass(frozen=True)
class FamilySlice:
    """Everything the solver needs from one family member."""

    j: int
    eps: float
    d: np.ndarray
    d_x: np.ndarray
    w0eps: np.ndarray


@dataclass
class PropertyLedger:
    """Per-member quantitative properties, one row per ``j``.

    Columns (names fixed by the CSV schema):

    * ``e43_5``: ``eps**2 * int phi_x**2 / phi**3`` (target <= 1)
    * ``e43_55``: ``sqrt(eps) * int phi_x**4 / phi**2`` (target <= 1)
    * ``e43_6``: ``eps**(1/4) / min phi`` (target <= 1)
    * ``e43_99``: ``eps**(1/4) * max |phi_x / phi|`` (target <= 1)
    * ``e45_4``: ``int phi (w0eps)_x**2 / w0eps`` (bounded in ``j``)
    * ``e45_5``: ``int (phi_x**2 / phi) w0eps`` (bounded in ``j``)
    * ``sup_dist``: ``max |phi - d|``
    """

    rows: list = dc_field(default_factory=list)

    COLUMNS = ("j", "eps", "e43_5", "e43_55", "e43_6", "e43_99", "e45_4", "e45_5", "sup_dist")

    @property
    def max_e45_4(self) -> float:
        return max(r["e45_4"] for r in self.rows)

    @property
    def max_e45_5(self) -> float:
        return max(r["e45_5"] for r in self.rows)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows])


@dataclass
class RegularizationFamily:
    grid: SpatialGrid
    spec: Coefficient
    members: list
    epsilons: np.ndarray
    w0j_fields: list
    w0eps_fields: list
    choices: list
    ledger: Optional[PropertyLedger] = None

    @property
    def d_eps_fields(self) -> list:
        return [m.field for m in self.members]

    @property
    def d_eps_x_fields(self) -> list:
        return [m.derivative for m in self.members]

    @property
    def j_max(self) -> int:
        return len(self.members)

    def slice(self, j: int, eps: Optional[float] = None) -> FamilySlice:
        """Member ``j`` (1-based); ``eps`` overrides the selected parameter."""
        if not 1 <= j <= self.j_max:
            raise IndexError(f"family has members 1..{self.j_max}, asked for {j}")
        k = j - 1
        e = float(self.epsilons[k]) if eps is None else float(eps)
        m = self.members[k]
        w0eps = self.w0j_fields[k].values + e**0.25
        return FamilySlice(j, e, m.field.values.copy(), m.derivative.values.copy(), w0eps)


def build_family(spec: Coefficient, init: InitialData, j_max: int, refine: int = REFINE) -> RegularizationFamily:
    grid = init.grid
    bld = _Builder(spec, grid, refine)
    members = [build_member(spec, grid, j, refine, bld) for j in range(1, j_max + 1)]
    w0j = [build_w0j(init.w0, spec, grid, j) for j in range(1, j_max + 1)]
    choices = select_epsilons(members, w0j, spec, init.w0)
    eps = np.array([c.eps for c in choices])
    w0eps = [ScalarField(grid, wj.values + e**0.25) for wj, e in zip(w0j, eps)]
    return RegularizationFamily(grid, spec, members, eps, w0j, w0eps, choices)


def verify_family(family: RegularizationFamily, strict: bool = True) -> PropertyLedger:
    """Evaluate the quantitative properties of every member.

    Raises :class:`FamilyVerificationError` on the first slope bound above 1
    when ``strict``.
    """
    grid, h = family.grid, family.grid.h
    d = family.spec.value(grid.centers)
    ledger = PropertyLedger()
    for m, e, wj in zip(family.members, family.epsilons, family.w0j_fields):
        ints = member_integrals(m)
        w0e = wj.values + e**0.25
        phi, phix = m.field.values, m.derivative.values
        row = {
            "j": m.j,
            "eps": float(e),
            "e43_5": float(e**2 * ints["slope2_phi3"]),
            "e43_55": float(math.sqrt(e) * ints["slope4_phi2"]),
            "e43_6": float(e**0.25 / ints["phi_min"]),
            "e43_99": float(e**0.25 * ints["log_slope_sup"]),
            "e45_4": weighted_fisher(phi, w0e, h),
            "e45_5": float(np.sum(phix**2 / phi * w0e) * h),
            "sup_dist": float(np.max(np.abs(phi - d))),
        }
        if strict:
            for name in ("e43_5", "e43_55", "e43_6", "e43_99"):
                if not row[name] <= 1.0 + LEDGER_SLACK:
                    raise FamilyVerificationError(m.j, name, row[name])
        ledger.rows.append(row)
    family.ledger = ledger
    return ledger


def sandwich_margins(family: RegularizationFamily) -> list[tuple[float, float]]:
    """Per member: ``min(phi - d - 3**-j)`` and ``min(d + 3*3**-j - phi)`` over cell centres."""
    d = family.spec.value(family.grid.centers)
    out = []
    for m in family.members:
        phi = m.field.values
        out.append((float(np.min(phi - d - 3.0**-m.j)), float(np.min(d + 3.0 * 3.0**-m.j - phi))))
    return out


def write_family_csv(family: RegularizationFamily, fields_path, ledger_path) -> None:
    """Write ``j,x,d_eps,d_eps_x,w0j,w0eps`` and the ledger columns."""
    from .io import fmt

    x = family.grid.centers
    with open(fields_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("j,x,d_eps,d_eps_x,w0j,w0eps\n")
        for m, wj, we in zip(family.members, family.w0j_fields, family.w0eps_fields):
            for i in range(x.size):
                fh.write(",".join([str(m.j)] + [fmt(v) for v in (
                    x[i], m.field.values[i], m.derivative.values[i], wj.values[i], we.values[i])]) + "\n")
    ledger = family.ledger or verify_family(family, strict=False)
    with open(ledger_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(PropertyLedger.COLUMNS) + "\n")
        for r in ledger.rows:
            fh.write(",".join([str(r["j"])] + [fmt(r[c]) for c in PropertyLedger.COLUMNS[1:]]) + "\n")
