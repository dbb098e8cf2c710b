"""Observables computed from a frozen state: support extremes, norms,
energies, virial and moment quantities, and the light-cone ledger."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptySupport, InvalidValue, WrongSystemKind
from .field import FieldState, compute_field
from .model import SystemSpec
from .phasespace import PhaseGrid

SIGMA_RTOL = 1e-12


@dataclass(frozen=True)
class DiagnosticOptions:
    p_norms: tuple = (1.0, 2.0, math.inf)
    support_threshold: float = 1e-6
    cone_apex: float = 0.0

    def __post_init__(self):
        if not 0 < self.support_threshold < 1:
            raise InvalidValue("support_threshold must lie in (0, 1)", key="support_threshold")
        for p in self.p_norms:
            if not p >= 1:
                raise InvalidValue(f"p-norm exponent {p} must be >= 1", key="p_norms")


@dataclass(frozen=True)
class SupportExtremes:
    Q1: float
    p1: float
    P1: float
    R: float
    r: float
    W2: float
    support_threshold: float
    dx_half: float = 0.0
    dv1_half: float = 0.0
    r_index: int = 0


@dataclass
class ConeLedger:
    """Running ray integrals of e -/+ m along x = apex +/- t and the cone top."""

    apex: float = 0.0
    T: list = field(default_factory=list)
    I_plus: list = field(default_factory=list)
    I_minus: list = field(default_factory=list)
    cone_top: list = field(default_factory=list)
    total_energy: list = field(default_factory=list)
    _last: tuple | None = None

    def residual(self, i: int = -1) -> float:
        te = self.total_energy[i]
        gap = abs(self.I_plus[i] + self.I_minus[i] - self.cone_top[i])
        return gap / te if te > 0 else gap


@dataclass
class DiagnosticsRecord:
    t: float
    extremes: SupportExtremes
    rho_norms: dict
    charge_per_species: tuple
    K: float
    total_energy: float | None
    virial: float
    rho_E1sq: float | None
    x2_moment: float
    E1_at_r: float
    E1_max_abs: float
    rho_ceiling_bound: float | None
    sigma_ok: bool | None
    aux: dict = field(default_factory=dict)

    def series_row(self) -> dict:
        e = self.extremes
        row = {
            "t": self.t,
            "Q1": e.Q1,
            "p1": e.p1,
            "P1": e.P1,
            "R": e.R,
            "r": e.r,
            "W2": e.W2,
            "rho_L1": self.rho_norms.get(1.0),
            "rho_L2": self.rho_norms.get(2.0),
            "rho_Linf": self.rho_norms.get(math.inf),
        }
        for k, q in enumerate(self.charge_per_species):
            row[f"charge_s{k}"] = q
        row.update(
            K=self.K,
            total_energy=self.total_energy,
            virial=self.virial,
            rho_E1sq=self.rho_E1sq,
            x2_moment=self.x2_moment,
            E1_at_r=self.E1_at_r,
            E1_max_abs=self.E1_max_abs,
            sigma_ok=self.sigma_ok,
        )
        return row


def _total(grid: PhaseGrid) -> np.ndarray:
    return grid.values.sum(axis=0)


def support_extremes(grid: PhaseGrid, threshold_rel: float = 1e-6) -> SupportExtremes:
    """Extremes over cells where the species-summed density exceeds
    ``threshold_rel`` times its current maximum. Values are cell centres."""
    if not 0 < threshold_rel < 1:
        raise InvalidValue("threshold_rel must lie in (0, 1)", key="support_threshold")
    g = grid.geometry
    S = _total(grid)
    peak = S.max()
    if not peak > 0:
        raise EmptySupport("no cell carries positive density")
    mask = S > threshold_rel * peak
    proj = mask.any(axis=2)
    ix, i1 = np.nonzero(proj)
    x, v1, v2 = g.x, g.v1, g.v2
    Q1 = float(np.abs(v1[i1]).max())
    iP = int(i1.max())
    iR = int(ix.max())
    p1 = float(v1[i1[ix == iR].max()])
    near = i1 >= iP - 1
    ir = int(ix[near].max())
    W2 = float(np.abs(v2[mask.any(axis=(0, 1))]).max())
    return SupportExtremes(
        Q1=Q1,
        p1=p1,
        P1=float(v1[iP]),
        R=float(x[iR]),
        r=float(x[ir]),
        W2=W2,
        support_threshold=threshold_rel,
        dx_half=0.5 * g.dx,
        dv1_half=0.5 * g.dv1,
        r_index=ir,
    )


def lp_norm(rho, p, dx=1.0) -> float:
    rho = np.abs(np.asarray(rho, dtype=np.float64))
    if p == math.inf:
        return float(rho.max()) if rho.size else 0.0
    if p < 1:
        raise InvalidValue(f"p = {p} is below 1", key="p_norms")
    return float((np.sum(rho**p) * dx) ** (1.0 / p))


def _moment_weights(g, relativistic):
    v1 = g.v1[:, None]
    v2 = g.v2[None, :]
    gam = np.sqrt(1.0 + v1 * v1 + v2 * v2)
    ones = np.ones_like(gam)
    vel = v1 / gam if relativistic else v1 * ones
    return {
        "n": ones,
        "v1": v1 * ones,
        "v1sq": v1 * v1 * ones,
        "vsq": v1 * v1 + v2 * v2,
        "gamma": gam,
        "sigma_minus": gam - v1,
        "sigma_plus": gam + v1,
        "velocity": vel,
    }


def velocity_moments(grid: PhaseGrid, names=None, relativistic=True) -> dict:
    """x-profiles ``sum_v w(v) * sum_a f_a * dv1 dv2`` for the named weights."""
    g = grid.geometry
    table = _moment_weights(g, relativistic)
    names = list(table) if names is None else list(names)
    W = np.stack([table[n] for n in names])
    prof = np.einsum("xab,wab->wx", _total(grid), W) * g.dv
    return dict(zip(names, prof))


@dataclass(frozen=True)
class EnergyDensities:
    e: np.ndarray
    m: np.ndarray
    k: np.ndarray
    sigma_minus: np.ndarray
    sigma_plus: np.ndarray


def energy_densities(grid: PhaseGrid, spec: SystemSpec,
                     field: FieldState | None = None) -> EnergyDensities:
    if not spec.relativistic:
        raise WrongSystemKind("energy densities e, m and sigma are defined for relativistic systems")
    field = field or compute_field(grid, spec)
    mom = velocity_moments(grid, ("gamma", "v1", "sigma_minus", "sigma_plus"))
    k = mom["gamma"]
    return EnergyDensities(
        e=k + 0.5 * field.E1**2,
        m=mom["v1"],
        k=k,
        sigma_minus=mom["sigma_minus"],
        sigma_plus=mom["sigma_plus"],
    )


def _sigma_ratios(n, k, sm, sp):
    def ratio(sig):
        denom = 3.0 * np.sqrt(np.maximum(sig * k, 0.0))
        r = np.divide(n, denom, out=np.zeros_like(n), where=denom > 0)
        return float(r.max()) if r.size else 0.0

    return ratio(sm), ratio(sp)


def check_sigma_inequality(grid: PhaseGrid, spec: SystemSpec) -> tuple[float, float]:
    """Worst ratios over x of ``int sum f dv / (3 sqrt(sigma_-/+ k))``.

    Columns with zero density give ratio 0.
    """
    if not spec.relativistic:
        raise WrongSystemKind("the sigma inequality applies to relativistic systems")
    mom = velocity_moments(grid, ("n", "gamma", "sigma_minus", "sigma_plus"))
    return _sigma_ratios(mom["n"], mom["gamma"], mom["sigma_minus"], mom["sigma_plus"])


def virial(grid: PhaseGrid, field: FieldState, spec: SystemSpec) -> tuple[float, float]:
    """Return ``(iint v1 E1 sum f dv dx, int rho E1^2 dx)``."""
    g = grid.geometry
    m = velocity_moments(grid, ("v1",), spec.relativistic)["v1"]
    return float(np.sum(m * field.E1) * g.dx), float(np.sum(field.rho * field.E1**2) * g.dx)


@dataclass(frozen=True)
class Moments:
    x2_moment: float
    K: float
    v1sq_moment: float
    E1sq_integral: float

    @property
    def identity_rhs(self) -> float:
        """Right side of d^2/dt^2 (x^2 moment) = 2 iint v1^2 sum f - int E1^2."""
        return 2.0 * self.v1sq_moment - self.E1sq_integral


def x2_moment_and_K(grid: PhaseGrid, field: FieldState, spec: SystemSpec) -> Moments:
    g = grid.geometry
    mom = velocity_moments(grid, ("n", "vsq", "v1sq"), spec.relativistic)
    return Moments(
        x2_moment=float(np.sum(g.x**2 * mom["n"]) * g.dx),
        K=float(mom["vsq"].sum() * g.dx),
        v1sq_moment=float(mom["v1sq"].sum() * g.dx),
        E1sq_integral=float(np.sum(field.E1**2) * g.dx),
    )


def total_energy(grid: PhaseGrid, field: FieldState, spec: SystemSpec) -> float:
    """Conserved energy of a neutral system.

    Relativistic: ``int (k + E1^2/2) dx``. Classical: ``K/2 + int E1^2/2 dx``.
    """
    if not spec.neutral:
        raise WrongSystemKind("total energy is finite only for neutral systems")
    g = grid.geometry
    if spec.relativistic:
        k = velocity_moments(grid, ("gamma",))["gamma"]
        return float((k.sum() + 0.5 * np.sum(field.E1**2)) * g.dx)
    m = x2_moment_and_K(grid, field, spec)
    return 0.5 * m.K + 0.5 * m.E1sq_integral


def _cone_top(e, g, apex, T):
    # Exact integral of the piecewise-constant cell profile over [apex - T, apex + T].
    cum = np.concatenate(([0.0], np.cumsum(e) * g.dx))
    lo, hi = np.interp([apex - T, apex + T], g.x_edges(), cum)
    return float(hi - lo)


def cone_update(ledger: ConeLedger, t: float, grid: PhaseGrid, field: FieldState,
                spec: SystemSpec) -> ConeLedger:
    """Advance the ray integrals to time ``t`` by the trapezoid rule."""
    if not (spec.relativistic and spec.neutral):
        raise WrongSystemKind("the cone ledger applies to neutral relativistic systems")
    g = grid.geometry
    d = energy_densities(grid, spec, field)
    a = ledger.apex
    plus = float(np.interp(a + t, g.x, d.e - d.m))
    minus = float(np.interp(a - t, g.x, d.e + d.m))
    if ledger._last is None:
        ip = im = 0.0
    else:
        t0, p0, m0 = ledger._last
        h = t - t0
        ip = ledger.I_plus[-1] + 0.5 * h * (p0 + plus)
        im = ledger.I_minus[-1] + 0.5 * h * (m0 + minus)
    ledger._last = (t, plus, minus)
    ledger.T.append(float(t))
    ledger.I_plus.append(ip)
    ledger.I_minus.append(im)
    ledger.cone_top.append(_cone_top(d.e, g, a, t))
    ledger.total_energy.append(float(d.e.sum() * g.dx))
    return ledger


def density_ceiling(spec: SystemSpec) -> float | None:
    """``int F0 dv`` with ``F0(v) = sup_x f0(x, v)``, for monocharged systems."""
    if spec.neutral:
        return None
    s = spec.species[0]
    return abs(s.charge) * s.initial_profile.envelope_integral


def compute_record(t: float, grid: PhaseGrid, field: FieldState, spec: SystemSpec,
                   options: DiagnosticOptions | None = None, ceiling: float | None = None,
                   ledger: ConeLedger | None = None) -> DiagnosticsRecord:
    """One row of every observable at time ``t``.

    Norms, the field and the virial source use ``field`` (so a particle run
    can supply its deposited density); velocity moments use ``grid``.
    """
    options = options or DiagnosticOptions()
    g = grid.geometry
    ext = support_extremes(grid, options.support_threshold)
    mom = velocity_moments(
        grid, ("n", "v1", "v1sq", "vsq", "gamma", "sigma_minus", "sigma_plus"), spec.relativistic
    )
    E1 = field.E1
    dx = g.dx
    norms = {float(p): lp_norm(field.rho, p, dx) for p in options.p_norms}
    for p in (1.0, 2.0, math.inf):
        norms.setdefault(p, lp_norm(field.rho, p, dx))
    masses = grid.species_mass()
    E1sq = float(np.sum(E1**2) * dx)
    K = float(mom["vsq"].sum() * dx)
    if spec.neutral:
        if spec.relativistic:
            energy = float((mom["gamma"].sum() + 0.5 * np.sum(E1**2)) * dx)
        else:
            energy = 0.5 * K + 0.5 * E1sq
    else:
        energy = None
    aux = {
        "v1sq_moment": float(mom["v1sq"].sum() * dx),
        "E1sq_integral": E1sq,
        "mass_total": float(masses.sum()),
    }
    sigma_ok = None
    if spec.relativistic:
        rm, rp = _sigma_ratios(mom["n"], mom["gamma"], mom["sigma_minus"], mom["sigma_plus"])
        aux["sigma_minus_ratio"] = rm
        aux["sigma_plus_ratio"] = rp
        sigma_ok = bool(rm <= 1.0 + SIGMA_RTOL and rp <= 1.0 + SIGMA_RTOL)
    for p, val in norms.items():
        if p not in (1.0, 2.0, math.inf):
            aux[f"rho_L{p:g}"] = val
    if ledger is not None and ledger.T:
        aux.update(
            cone_T=ledger.T[-1],
            cone_I_plus=ledger.I_plus[-1],
            cone_I_minus=ledger.I_minus[-1],
            cone_top=ledger.cone_top[-1],
            cone_residual=ledger.residual(),
        )
    return DiagnosticsRecord(
        t=float(t),
        extremes=ext,
        rho_norms=norms,
        charge_per_species=tuple(float(q) for q in spec.charges * masses),
        K=K,
        total_energy=energy,
        virial=float(np.sum(mom["v1"] * E1) * dx),
        rho_E1sq=None if spec.neutral else float(np.sum(field.rho * E1**2) * dx),
        x2_moment=float(np.sum(g.x**2 * mom["n"]) * dx),
        E1_at_r=float(E1[ext.r_index]),
        E1_max_abs=float(np.abs(E1).max()),
        rho_ceiling_bound=ceiling,
        sigma_ok=sigma_ok,
        aux=aux,
    )
