"""Discrete differential operators shared by the solver and the diagnostics."""
from __future__ import annotations

import numpy as np


def centered_gradient(w: np.ndarray, h: float) -> np.ndarray:
    """Cell-centred slope of ``w``; set to zero in the two boundary cells."""
    gx = np.zeros_like(w)
    gx[1:-1] = (w[2:] - w[:-2]) / (2.0 * h)
    return gx


def face_slopes(v: np.ndarray, h: float) -> np.ndarray:
    """Slopes on the ``n - 1`` interior faces."""
    return np.diff(v) / h


def pad_flux(interior: np.ndarray) -> np.ndarray:
    """Append zero fluxes on the two boundary faces."""
    out = np.zeros(interior.size + 2)
    out[1:-1] = interior
    return out


def weighted_fisher(weight: np.ndarray, w: np.ndarray, h: float) -> float:
    """``sum weight * w_x**2 / w * h`` over cells where ``w > 0``."""
    gx = centered_gradient(w, h)
    pos = w > 0
    return float(np.sum(weight[pos] * gx[pos] ** 2 / w[pos]) * h)


def fibre_diffusion(w: np.ndarray, d: np.ndarray, g_w_face: np.ndarray, h: float) -> np.ndarray:
    """Conservative discretisation of ``(d w_x / sqrt(g(w)))_x`` with zero boundary flux.

    ``g_w_face`` holds ``g`` evaluated at the face averages of ``w``.
    """
    d_face = 0.5 * (d[1:] + d[:-1])
    flux = d_face / np.sqrt(g_w_face) * face_slopes(w, h)
    return np.diff(pad_flux(flux)) / h


def upwind_flux(v: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Interior-face flux ``v_up * s`` with the upwind cell chosen by the sign of ``s``."""
    return np.where(s > 0.0, v[:-1], v[1:]) * s
