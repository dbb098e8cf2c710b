"""Time integration: semi-Lagrangian grid stepper, PIC backend, and
characteristic tracing with variational equations."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import diagnostics as diag
from .errors import (
    BoundaryMassLeak,
    CFLViolation,
    InvalidValue,
    NumericalBlowup,
    ParticleLeftDomain,
    TimeOutOfRange,
)
from .field import FieldState, compute_field, solve_field
from .model import SystemSpec, bump_cell_integrals, relativistic_velocity, velocity_jacobian
from .phasespace import LINEAR, SCHEMES, GridGeometry, PhaseGrid, sample_initial, translate

SEMILAG = "semilag"
PIC = "pic"
BACKENDS = (SEMILAG, PIC)

BOUNDARY_RTOL = 1e-14
TRACE_SUBSTEPS = 4


@dataclass(frozen=True)
class StepperConfig:
    dt: float
    t_end: float
    scheme: str = LINEAR
    output_every: int = 1
    backend: str = SEMILAG
    pic_particle_count: int = 200_000
    rng_seed: int = 0

    def __post_init__(self):
        if not self.dt > 0:
            raise InvalidValue("dt must be > 0", key="dt")
        if self.t_end < 0:
            raise InvalidValue("t_end must be >= 0", key="t_end")
        if self.output_every < 1:
            raise InvalidValue("output_every must be >= 1", key="output_every")
        if self.scheme not in SCHEMES:
            raise InvalidValue(f"unknown scheme {self.scheme!r}", key="scheme")
        if self.backend not in BACKENDS:
            raise InvalidValue(f"unknown backend {self.backend!r}", key="backend")
        if self.pic_particle_count < 1:
            raise InvalidValue("pic_particle_count must be >= 1", key="pic_particle_count")

    @property
    def n_steps(self) -> int:
        return int(math.ceil(self.t_end / self.dt - 1e-9))


def cfl_dt(spec: SystemSpec, geometry: GridGeometry) -> float:
    """Largest step for which every fractional remap moves at most one cell.

    The v1 kick is bounded by ``max|e| M_abs / 2``; a relativistic particle
    crosses at most one cell per half x-sweep when ``dt <= 2 dx``. Classical
    x-sweeps are sub-cycled instead of constraining dt.
    """
    kick = spec.max_abs_charge * spec.total_abs_charge / 2.0
    dt = geometry.dv1 / kick if kick > 0 else math.inf
    if spec.relativistic:
        dt = min(dt, 2.0 * geometry.dx)
    if not math.isfinite(dt):
        dt = geometry.dx
    return dt


def snap_dt(dt: float, t_end: float) -> float:
    """Shrink ``dt`` so that a whole number of steps lands on ``t_end``."""
    if t_end <= 0:
        return dt
    return t_end / math.ceil(t_end / dt - 1e-9)


def worker_count() -> int:
    env = os.environ.get("VP_THREADS")
    cap = os.cpu_count() or 1
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise InvalidValue(f"VP_THREADS must be an integer, got {env!r}") from None
    return cap


def _advect(values, shift, axis, scheme, workers):
    # Slices along v2 are independent; chunking them never changes results.
    n2 = values.shape[3]
    if workers <= 1 or n2 < 2:
        return translate(values, shift, axis=axis, scheme=scheme)
    bounds = np.linspace(0, n2, min(workers, n2) + 1).astype(int)
    chunks = [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:])]
    out = np.empty_like(values)

    def job(sl):
        s = shift if shift.shape[3] == 1 else shift[..., sl]
        out[..., sl] = translate(values[..., sl], s, axis=axis, scheme=scheme)

    with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
        list(pool.map(job, chunks))
    return out


def x_shift(spec: SystemSpec, geometry: GridGeometry, dt: float) -> np.ndarray:
    g = geometry
    vel = spec.velocity(g.v1[:, None], g.v2[None, :])
    return (vel * dt / g.dx)[None, None, :, :]


def initial_grid(spec: SystemSpec, geometry: GridGeometry) -> PhaseGrid:
    values = np.stack([sample_initial(s.initial_profile, geometry) for s in spec.species])
    return PhaseGrid(geometry, values)


def check_boundary(grid: PhaseGrid) -> None:
    f = grid.values
    peak = f.max()
    if peak <= 0:
        return
    edge = max(
        f[:, 0].max(), f[:, -1].max(), f[:, :, 0].max(), f[:, :, -1].max()
    )
    if edge > BOUNDARY_RTOL * peak:
        raise BoundaryMassLeak(
            f"boundary cell value {edge!r} exceeds {BOUNDARY_RTOL} x peak {peak!r}"
        )


def step_semilag(grid: PhaseGrid, spec: SystemSpec, dt: float, scheme: str = LINEAR,
                 workers: int = 1) -> tuple[PhaseGrid, FieldState]:
    """One Strang step: half x-sweep, field solve, full v1-kick, half x-sweep.

    Returns the new grid and the mid-step field that drove the kick.
    """
    g = grid.geometry
    if dt == 0:
        return grid.copy(), compute_field(grid, spec)
    half = x_shift(spec, g, 0.5 * dt)
    if np.abs(half).max() > g.nx:
        raise CFLViolation(f"x shift of {np.abs(half).max():.3g} cells crosses the whole grid")
    f = _advect(grid.values, half, 1, scheme, workers)
    mid = PhaseGrid(g, f)
    fld = compute_field(mid, spec)
    kick = (spec.charges[:, None] * fld.E1[None, :] * dt / g.dv1)[:, :, None, None]
    if np.abs(kick).max() > g.nv1:
        raise CFLViolation(f"v1 shift of {np.abs(kick).max():.3g} cells crosses the whole grid")
    f = _advect(f, kick, 2, scheme, workers)
    f = _advect(f, half, 1, scheme, workers)
    return PhaseGrid(g, f), fld


# -- particles -----------------------------------------------------------------


@dataclass
class Particles:
    X: np.ndarray
    V1: np.ndarray
    V2: np.ndarray
    weight: np.ndarray
    species: np.ndarray

    def copy(self) -> "Particles":
        return Particles(self.X.copy(), self.V1.copy(), self.V2.copy(),
                         self.weight.copy(), self.species.copy())


def _lattice_counts(extents, total):
    # Near-isotropic lattice: points per axis proportional to the extent.
    extents = np.asarray(extents, dtype=float)
    scale = (total / np.prod(extents)) ** (1.0 / len(extents))
    return np.maximum(1, np.round(extents * scale).astype(int))


def quiet_start(spec: SystemSpec, particle_count: int, rng_seed: int = 0,
                jitter: float = 0.0) -> Particles:
    """Regular (x, v1, v2) lattice over each species' support box.

    Each lattice point carries the exact integral of f0 over its lattice
    cell, so total weight equals the analytic mass. ``jitter`` (in units of
    a lattice cell) optionally perturbs positions with the seeded RNG.
    """
    rng = np.random.default_rng(rng_seed)
    per_species = max(1, particle_count // len(spec.species))
    parts = []
    for k, s in enumerate(spec.species):
        p = s.initial_profile
        boxes = [p.x_support, p.v1_support, (-p.v2_halfwidth, p.v2_halfwidth)]
        counts = _lattice_counts([b[1] - b[0] for b in boxes], per_species)
        edges = [np.linspace(b[0], b[1], n + 1) for b, n in zip(boxes, counts)]
        centres = [0.5 * (e[1:] + e[:-1]) for e in edges]
        wx = bump_cell_integrals(edges[0], p.x_center, p.x_halfwidth)
        w1 = bump_cell_integrals(edges[1], p.v1_center, p.v1_halfwidth)
        w2 = bump_cell_integrals(edges[2], 0.0, p.v2_halfwidth)
        X, V1, V2 = np.meshgrid(*centres, indexing="ij")
        W = p.amplitude * wx[:, None, None] * w1[None, :, None] * w2[None, None, :]
        keep = W.ravel() > 0
        X, V1, V2, W = (a.ravel()[keep] for a in (X, V1, V2, W))
        if jitter > 0:
            steps = [e[1] - e[0] for e in edges]
            X = X + jitter * steps[0] * rng.uniform(-0.5, 0.5, X.size)
            V1 = V1 + jitter * steps[1] * rng.uniform(-0.5, 0.5, V1.size)
        parts.append((X, V1, V2, W, np.full(X.size, k, dtype=np.int64)))
    return Particles(*(np.concatenate(c) for c in zip(*parts)))


def deposit_cic(X, q, geometry: GridGeometry) -> np.ndarray:
    """Cloud-in-cell deposit of charges ``q`` at positions ``X`` (per unit length)."""
    g = geometry
    u = (X - g.x_min) / g.dx - 0.5
    j = np.floor(u).astype(np.int64)
    frac = u - j
    lo = np.clip(j, 0, g.nx - 1)
    hi = np.clip(j + 1, 0, g.nx - 1)
    rho = np.bincount(lo, weights=q * (1.0 - frac), minlength=g.nx)
    rho += np.bincount(hi, weights=q * frac, minlength=g.nx)
    return rho / g.dx


def particle_field(particles: Particles, spec: SystemSpec, geometry: GridGeometry) -> FieldState:
    q = spec.charges[particles.species] * particles.weight
    rho = deposit_cic(particles.X, q, geometry)
    masses = np.bincount(particles.species, weights=particles.weight, minlength=len(spec.species))
    return FieldState(
        rho=rho,
        j1=None,
        E1=solve_field(rho, geometry.dx),
        M_signed=float(rho.sum() * geometry.dx),
        M_abs=float(np.sum(np.abs(spec.charges) * masses)),
    )


def _check_inside(particles: Particles, geometry: GridGeometry, t):
    if particles.X.size and (
        particles.X.min() < geometry.x_min or particles.X.max() > geometry.x_max
    ):
        raise ParticleLeftDomain(f"particle left [{geometry.x_min}, {geometry.x_max}] at t={t}")


def step_pic(particles: Particles, spec: SystemSpec, dt: float,
             geometry: GridGeometry, frozen_E1=None) -> tuple[Particles, FieldState]:
    """Drift half, deposit and solve, kick, drift half. Weights never change.

    ``frozen_E1`` (a profile on the x-grid) replaces the self-consistent
    field in the kick; the returned FieldState is still the deposited one.
    """
    p = particles.copy()
    p.X += 0.5 * dt * relativistic_velocity(p.V1, p.V2, spec.relativistic)
    _check_inside(p, geometry, None)
    fld = particle_field(p, spec, geometry)
    E1 = fld.E1 if frozen_E1 is None else np.broadcast_to(frozen_E1, geometry.x.shape)
    E_at = np.interp(p.X, geometry.x, E1)
    p.V1 += spec.charges[p.species] * E_at * dt
    p.X += 0.5 * dt * relativistic_velocity(p.V1, p.V2, spec.relativistic)
    _check_inside(p, geometry, None)
    return p, fld


def bin_particles(particles: Particles, spec: SystemSpec, geometry: GridGeometry) -> PhaseGrid:
    """Nearest-grid-point histogram of particles as a phase-space density."""
    g = geometry
    ix = np.clip(((particles.X - g.x_min) / g.dx).astype(np.int64), 0, g.nx - 1)
    i1 = np.clip(np.floor((particles.V1 - g.v1_min) / g.dv1).astype(np.int64), 0, g.nv1 - 1)
    i2 = np.clip(np.floor((particles.V2 - g.v2_min) / g.dv2).astype(np.int64), 0, g.nv2 - 1)
    ns = len(spec.species)
    flat = np.ravel_multi_index((particles.species, ix, i1, i2), (ns,) + g.shape)
    counts = np.bincount(flat, weights=particles.weight, minlength=ns * g.nx * g.nv1 * g.nv2)
    return PhaseGrid(g, counts.reshape((ns,) + g.shape) / g.cell_volume)


# -- run loop ------------------------------------------------------------------


@dataclass
class FieldHistory:
    t0: float
    dt: float
    x: np.ndarray
    E1: np.ndarray  # (n_times, nx)

    def __post_init__(self):
        self.E1 = np.asarray(self.E1, dtype=np.float64)
        self.x = np.asarray(self.x, dtype=np.float64)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.E1.shape[0])

    @property
    def t_last(self) -> float:
        return self.t0 + self.dt * (self.E1.shape[0] - 1)

    def profile(self, s: float) -> np.ndarray:
        """Field profile at time ``s``, linear between stored samples."""
        n = self.E1.shape[0]
        if n == 1:
            return self.E1[0]
        u = (s - self.t0) / self.dt
        i = int(min(max(math.floor(u), 0), n - 2))
        w = min(max(u - i, 0.0), 1.0)
        return (1.0 - w) * self.E1[i] + w * self.E1[i + 1]


@dataclass
class RunResult:
    final: PhaseGrid | Particles
    history: FieldHistory
    records: list = field(default_factory=list)
    initial: PhaseGrid | None = None
    cone: diag.ConeLedger | None = None


def _ensure_finite(values, t, state):
    if not np.all(np.isfinite(values)):
        raise NumericalBlowup(f"non-finite value in state at t={t}", t=t, state=state)


def run(spec: SystemSpec, cfg: StepperConfig, geometry: GridGeometry, sinks=(),
        options: diag.DiagnosticOptions | None = None, on_output=None) -> RunResult:
    """Advance from the sampled initial data to ``cfg.t_end``.

    Diagnostics rows go to every sink (callables taking a record) at step
    0, every ``output_every`` steps, and the final step. ``on_output``, if
    given, receives ``(step, t, grid)`` at the same times.
    """
    options = options or diag.DiagnosticOptions()
    n_steps = cfg.n_steps
    dt = cfg.dt
    if n_steps and abs(n_steps * dt - cfg.t_end) > 1e-9 * max(cfg.t_end, 1.0):
        raise InvalidValue(f"t_end={cfg.t_end} is not a whole number of steps dt={dt}", key="dt")
    workers = worker_count()
    grid0 = initial_grid(spec, geometry)
    ceiling = diag.density_ceiling(spec)
    ledger = (
        diag.ConeLedger(apex=options.cone_apex) if spec.relativistic and spec.neutral else None
    )
    records = []

    if cfg.backend == SEMILAG:
        state = grid0
        snapshot = lambda s: s  # noqa: E731
        field_of = lambda s: compute_field(s, spec)  # noqa: E731
    else:
        state = quiet_start(spec, cfg.pic_particle_count, cfg.rng_seed)
        _check_inside(state, geometry, 0.0)
        snapshot = lambda s: bin_particles(s, spec, geometry)  # noqa: E731
        field_of = lambda s: particle_field(s, spec, geometry)  # noqa: E731

    fld = field_of(state)
    history = [fld.E1]

    def emit(n, st, fl):
        t = n * dt
        grid = snapshot(st)
        rec = diag.compute_record(t, grid, fl, spec, options, ceiling, ledger)
        records.append(rec)
        for sink in sinks:
            sink(rec)
        if on_output is not None:
            on_output(n, t, grid)

    if ledger is not None:
        diag.cone_update(ledger, 0.0, grid_for_cone(state, snapshot), fld, spec)
    emit(0, state, fld)
    for n in range(1, n_steps + 1):
        t = n * dt
        if cfg.backend == SEMILAG:
            state, _ = step_semilag(state, spec, dt, cfg.scheme, workers)
            _ensure_finite(state.values, t, state)
            check_boundary(state)
        else:
            try:
                state, _ = step_pic(state, spec, dt, geometry)
            except ParticleLeftDomain as exc:
                raise ParticleLeftDomain(f"{exc} (t={t})") from None
            _ensure_finite(np.concatenate([state.X, state.V1]), t, state)
        fld = field_of(state)
        _ensure_finite(fld.E1, t, state)
        history.append(fld.E1)
        if ledger is not None:
            diag.cone_update(ledger, t, grid_for_cone(state, snapshot), fld, spec)
        if n % cfg.output_every == 0 or n == n_steps:
            emit(n, state, fld)

    hist = FieldHistory(t0=0.0, dt=dt, x=geometry.x, E1=np.array(history))
    return RunResult(final=state, history=hist, records=records, initial=grid0, cone=ledger)


def grid_for_cone(state, snapshot):
    return snapshot(state)


# -- characteristics -----------------------------------------------------------


@dataclass
class CharacteristicState:
    X: float
    V1: float
    V2: float
    dX_dv1: float
    dV1_dv1: float
    species: int


@dataclass
class CharacteristicPath:
    """Arrays of shape ``(n_times, n_traces)`` along a batch of characteristics."""

    s: np.ndarray
    X: np.ndarray
    V1: np.ndarray
    V2: np.ndarray
    dX_dv1: np.ndarray
    dV1_dv1: np.ndarray
    species: int

    def state(self, i: int = -1, k: int = 0) -> CharacteristicState:
        return CharacteristicState(
            float(self.X[i, k]), float(self.V1[i, k]), float(self.V2[i, k]),
            float(self.dX_dv1[i, k]), float(self.dV1_dv1[i, k]), self.species,
        )


def _field_and_slope(history: FieldHistory, s, X):
    prof = history.profile(s)
    x = history.x
    E = np.interp(X, x, prof)
    dx = x[1] - x[0]
    j = np.floor((X - x[0]) / dx).astype(np.int64)
    inside = (j >= 0) & (j < x.size - 1)
    jc = np.clip(j, 0, x.size - 2)
    slope = np.where(inside, (prof[jc + 1] - prof[jc]) / dx, 0.0)
    return E, slope


def trace_characteristics(history: FieldHistory, t, x, v1, v2, spec: SystemSpec,
                          species: int = 0, direction: str = "backward",
                          t_stop: float | None = None) -> CharacteristicPath:
    """RK4 integration of a batch of characteristics from time ``t``.

    Integrates dX/ds = velocity(V1, v2), dV1/ds = e E1(s, X) together with
    d(dX/dv1)/ds = gamma dV1/dv1 and d(dV1/dv1)/ds = d_x E1 dX/dv1, from
    dX/dv1 = 0, dV1/dv1 = 1 at s = t. The step is a quarter of the history
    spacing; E1 is bilinear in (s, x) between history samples.
    """
    if direction not in ("forward", "backward"):
        raise InvalidValue(f"direction must be forward or backward, got {direction!r}")
    lo, hi = history.t0, history.t_last
    eps = 1e-9 * max(1.0, abs(hi))
    if not (lo - eps <= t <= hi + eps):
        raise TimeOutOfRange(f"start time {t} outside history [{lo}, {hi}]")
    if t_stop is None:
        t_stop = lo if direction == "backward" else hi
    if not (lo - eps <= t_stop <= hi + eps):
        raise TimeOutOfRange(f"stop time {t_stop} outside history [{lo}, {hi}]")
    if (direction == "backward" and t_stop > t + eps) or (direction == "forward" and t_stop < t - eps):
        raise TimeOutOfRange(f"stop time {t_stop} is not {direction} of {t}")

    e = float(spec.charges[species])
    rel = spec.relativistic
    X = np.atleast_1d(np.asarray(x, dtype=float)).copy()
    V1 = np.broadcast_to(np.asarray(v1, dtype=float), X.shape).copy()
    V2 = np.broadcast_to(np.asarray(v2, dtype=float), X.shape).copy()
    A = np.zeros_like(X)
    B = np.ones_like(X)

    span = t_stop - t
    n = int(math.ceil(abs(span) / (history.dt / TRACE_SUBSTEPS) - 1e-9)) if span else 0
    h = span / n if n else 0.0

    def rhs(s, X, V1, A, B):
        E, dE = _field_and_slope(history, s, X)
        return (
            relativistic_velocity(V1, V2, rel),
            e * E,
            velocity_jacobian(V1, V2, rel) * B,
            e * dE * A,
        )

    out = {k: [a.copy()] for k, a in (("X", X), ("V1", V1), ("A", A), ("B", B))}
    times = [t]
    s = t
    for i in range(n):
        y = (X, V1, A, B)
        k1 = rhs(s, *y)
        k2 = rhs(s + h / 2, *(a + h / 2 * b for a, b in zip(y, k1)))
        k3 = rhs(s + h / 2, *(a + h / 2 * b for a, b in zip(y, k2)))
        k4 = rhs(s + h, *(a + h * b for a, b in zip(y, k3)))
        X, V1, A, B = (
            a + h / 6 * (p + 2 * q + 2 * r + w) for a, p, q, r, w in zip(y, k1, k2, k3, k4)
        )
        s = t + (i + 1) * h
        times.append(s)
        for k, a in (("X", X), ("V1", V1), ("A", A), ("B", B)):
            out[k].append(a.copy())
    return CharacteristicPath(
        s=np.array(times),
        X=np.array(out["X"]),
        V1=np.array(out["V1"]),
        V2=np.broadcast_to(V2, (len(times),) + V2.shape).copy(),
        dX_dv1=np.array(out["A"]),
        dV1_dv1=np.array(out["B"]),
        species=species,
    )


def trace_characteristic(history: FieldHistory, start, direction: str, spec: SystemSpec,
                         species: int = 0) -> CharacteristicPath:
    """Single characteristic from ``start = (t, x, v1, v2)``."""
    t, x, v1, v2 = start
    return trace_characteristics(history, t, x, v1, v2, spec, species, direction)
