"""Simulation and verification tools for a degenerate haptotaxis model with myopic diffusion."""
from __future__ import annotations

from .diagnostics import DiagnosticsRecord, energy_slope_check, equi_integrability, record
from .model import (
    Absorption,
    Constant,
    InitialData,
    PowerLaw,
    ProductOfPowerLaws,
    ScalarField,
    SpatialGrid,
    Tabulated,
    eval_coefficient,
    mu_infinity,
    omega_d,
    validate_hypotheses,
)
from .regularize import RegularizationFamily, build_d_eps, build_family, build_w0j, verify_family
from .solver import Problem, SimState, SolverParams, run, stable_dt, step

__all__ = [
    "Absorption",
    "Constant",
    "DiagnosticsRecord",
    "InitialData",
    "PowerLaw",
    "Problem",
    "ProductOfPowerLaws",
    "RegularizationFamily",
    "ScalarField",
    "SimState",
    "SolverParams",
    "SpatialGrid",
    "Tabulated",
    "build_d_eps",
    "build_family",
    "build_w0j",
    "energy_slope_check",
    "equi_integrability",
    "eval_coefficient",
    "mu_infinity",
    "omega_d",
    "record",
    "run",
    "stable_dt",
    "step",
    "validate_hypotheses",
    "verify_family",
]
