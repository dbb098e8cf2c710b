"""Charge density, current and the explicit 1-d electrostatic field."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import SystemSpec
from .phasespace import PhaseGrid, marginal_density


@dataclass(frozen=True)
class FieldState:
    rho: np.ndarray
    j1: np.ndarray | None
    E1: np.ndarray
    M_signed: float
    M_abs: float


def solve_field(rho, dx):
    """E1(x) = 1/2 (int_{-inf}^x rho - int_x^inf rho) at cell centres.

    Both one-sided integrals use the midpoint-consistent prefix rule
    (full cells strictly on one side plus half the cell itself). The right
    integral is accumulated from the right, so an even density gives an
    exactly odd field.
    """
    rho = np.asarray(rho, dtype=np.float64)
    half = 0.5 * rho * dx
    left = np.cumsum(rho) * dx - half
    right = np.cumsum(rho[::-1])[::-1] * dx - half
    return 0.5 * (left - right)


def charge_density(grid: PhaseGrid, spec: SystemSpec) -> np.ndarray:
    return marginal_density(grid, spec.charges)


def deposit_current(grid: PhaseGrid, spec: SystemSpec) -> np.ndarray:
    """j1(x) = sum_a e_a int velocity(v) f_a dv."""
    g = grid.geometry
    vel = spec.velocity(g.v1[:, None], g.v2[None, :])
    per_species = np.einsum("sxab,ab->sx", grid.values, vel) * g.dv
    return (spec.charges[:, None] * per_species).sum(axis=0)


def compute_field(grid: PhaseGrid, spec: SystemSpec, with_current: bool = False) -> FieldState:
    g = grid.geometry
    rho = charge_density(grid, spec)
    masses = grid.species_mass()
    return FieldState(
        rho=rho,
        j1=deposit_current(grid, spec) if with_current else None,
        E1=solve_field(rho, g.dx),
        M_signed=float(rho.sum() * g.dx),
        M_abs=float(np.sum(np.abs(spec.charges) * masses)),
    )


def centered_derivative(values, dx):
    """Second-order centred difference with zero values outside the grid."""
    padded = np.concatenate(([0.0], np.asarray(values, dtype=np.float64), [0.0]))
    return (padded[2:] - padded[:-2]) / (2.0 * dx)


def check_continuity(rho_prev, rho_next, j1_mid, dt, dx) -> float:
    """L1 residual of the discrete continuity equation d_t rho + d_x j1 = 0."""
    resid = (np.asarray(rho_next) - np.asarray(rho_prev)) / dt + centered_derivative(j1_mid, dx)
    return float(np.abs(resid).sum() * dx)
