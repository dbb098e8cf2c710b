"""Physical system declarations: the four 1.5D Vlasov-Poisson families.

Mass and light speed are normalized to 1. Initial data are quartic-bump
products, ``beta(u; c, h) = (1 - ((u - c) / h)**2)**2`` on ``|u - c| < h``,
which are C^1, compactly supported and integrate in closed form.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidValue, NeutralityViolation

BUMP_INTEGRAL = 16.0 / 15.0  # int_{-1}^{1} (1 - u^2)^2 du
NEUTRALITY_RTOL = 1e-10


class SystemKind(str, enum.Enum):
    RVP = "RVP"
    VP = "VP"
    RVPN = "RVPN"
    VPN = "VPN"

    @property
    def relativistic(self) -> bool:
        return self in (SystemKind.RVP, SystemKind.RVPN)

    @property
    def neutral(self) -> bool:
        return self in (SystemKind.RVPN, SystemKind.VPN)


class ProfileFamily(str, enum.Enum):
    PRODUCT_BUMP = "product_bump"
    SHIFTED_PRODUCT_BUMP = "shifted_product_bump"


def bump(u, center, halfwidth):
    """Quartic bump ``(1 - z^2)^2`` with ``z = (u - center) / halfwidth``."""
    u = np.asarray(u, dtype=float)
    if halfwidth <= 0:
        return np.zeros_like(u)
    z = (u - center) / halfwidth
    return np.where(np.abs(z) < 1.0, (1.0 - z * z) ** 2, 0.0)


def bump_antiderivative(u, center, halfwidth):
    """Antiderivative of :func:`bump` vanishing left of the support."""
    u = np.asarray(u, dtype=float)
    if halfwidth <= 0:
        return np.zeros_like(u)
    z = np.clip((u - center) / halfwidth, -1.0, 1.0)
    # (z + 1)^3 (3z^2 - 9z + 8) / 15: exactly 0 at z = -1 and 16/15 at z = 1
    return halfwidth * (z + 1.0) ** 3 * (3.0 * z * z - 9.0 * z + 8.0) / 15.0


def bump_cell_integrals(edges, center, halfwidth):
    """Exact integrals of the bump over the cells delimited by ``edges``."""
    return np.diff(bump_antiderivative(edges, center, halfwidth))


@dataclass(frozen=True)
class InitialProfile:
    """Product of three quartic bumps in (x, v1, v2), scaled by ``amplitude``.

    ``product_bump`` is symmetric in v1 (``v1_center`` must be 0);
    ``shifted_product_bump`` allows a drifting population.
    """

    family: ProfileFamily = ProfileFamily.PRODUCT_BUMP
    amplitude: float = 1.0
    x_center: float = 0.0
    x_halfwidth: float = 1.0
    v1_center: float = 0.0
    v1_halfwidth: float = 1.0
    v2_halfwidth: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "family", ProfileFamily(self.family))
        if self.amplitude < 0:
            raise InvalidValue("amplitude must be >= 0", key="amplitude")
        if self.x_halfwidth <= 0:
            raise InvalidValue("x_halfwidth must be > 0", key="x_halfwidth")
        if self.v1_halfwidth <= 0:
            raise InvalidValue("v1_halfwidth must be > 0", key="v1_halfwidth")
        if self.v2_halfwidth < 0:
            raise InvalidValue("v2_halfwidth must be >= 0", key="v2_halfwidth")
        if self.family is ProfileFamily.PRODUCT_BUMP and self.v1_center != 0.0:
            raise InvalidValue(
                "product_bump is centred at v1 = 0; use shifted_product_bump",
                key="v1_center",
            )

    def __call__(self, x, v1, v2):
        return (
            self.amplitude
            * bump(x, self.x_center, self.x_halfwidth)
            * bump(v1, self.v1_center, self.v1_halfwidth)
            * bump(v2, 0.0, self.v2_halfwidth)
        )

    @property
    def mass(self) -> float:
        return (
            self.amplitude
            * BUMP_INTEGRAL**3
            * self.x_halfwidth
            * self.v1_halfwidth
            * self.v2_halfwidth
        )

    @property
    def x_support(self) -> tuple[float, float]:
        return (self.x_center - self.x_halfwidth, self.x_center + self.x_halfwidth)

    @property
    def v1_support(self) -> tuple[float, float]:
        return (self.v1_center - self.v1_halfwidth, self.v1_center + self.v1_halfwidth)

    def momentum_envelope(self, v1, v2):
        """F0(v) = sup_x f0(x, v); the x-bump peaks at 1."""
        return (
            self.amplitude
            * bump(v1, self.v1_center, self.v1_halfwidth)
            * bump(v2, 0.0, self.v2_halfwidth)
        )

    @property
    def envelope_integral(self) -> float:
        """Closed form of the integral of F0 over momentum space."""
        return self.amplitude * BUMP_INTEGRAL**2 * self.v1_halfwidth * self.v2_halfwidth


@dataclass(frozen=True)
class SpeciesSpec:
    name: str
    charge: float
    initial_profile: InitialProfile = field(default_factory=InitialProfile)

    def __post_init__(self):
        if self.charge == 0:
            raise InvalidValue(f"species {self.name!r} has zero charge", key="charge")


@dataclass(frozen=True)
class SystemSpec:
    kind: SystemKind
    species: tuple[SpeciesSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "kind", SystemKind(self.kind))
        object.__setattr__(self, "species", tuple(self.species))
        n = len(self.species)
        if self.neutral:
            if n < 2:
                raise InvalidValue(f"{self.kind.value} needs at least 2 species", key="species")
            total = sum(s.charge * s.initial_profile.mass for s in self.species)
            scale = sum(abs(s.charge) * s.initial_profile.mass for s in self.species)
            if abs(total) > NEUTRALITY_RTOL * scale:
                raise NeutralityViolation(
                    f"signed initial charge {total!r} violates neutrality "
                    f"(scale {scale!r})"
                )
        else:
            if n != 1:
                raise InvalidValue(f"{self.kind.value} takes exactly one species", key="species")
            if self.species[0].charge != 1.0:
                raise InvalidValue("monocharged systems use charge +1", key="charge")

    @property
    def relativistic(self) -> bool:
        return self.kind.relativistic

    @property
    def neutral(self) -> bool:
        return self.kind.neutral

    @property
    def charges(self) -> np.ndarray:
        return np.array([s.charge for s in self.species], dtype=float)

    @property
    def masses(self) -> np.ndarray:
        return np.array([s.initial_profile.mass for s in self.species], dtype=float)

    @property
    def total_abs_charge(self) -> float:
        return float(np.sum(np.abs(self.charges) * self.masses))

    @property
    def max_abs_charge(self) -> float:
        return float(np.max(np.abs(self.charges)))

    def velocity(self, v1, v2):
        return relativistic_velocity(v1, v2, self.relativistic)


def relativistic_velocity(v1, v2, relativistic=True):
    """First component of the particle velocity for momentum (v1, v2).

    Returns ``v1 / sqrt(1 + v1^2 + v2^2)`` in the relativistic case and
    ``v1`` otherwise.
    """
    v1 = np.asarray(v1, dtype=float)
    if not relativistic:
        return v1 + 0.0 * np.asarray(v2, dtype=float)
    v2 = np.asarray(v2, dtype=float)
    return v1 / np.sqrt(1.0 + v1 * v1 + v2 * v2)


def velocity_jacobian(v1, v2, relativistic=True):
    """d(velocity)/d(v1): ``(1 + v2^2)(1 + |v|^2)^(-3/2)`` or 1."""
    v1 = np.asarray(v1, dtype=float)
    v2 = np.asarray(v2, dtype=float)
    if not relativistic:
        return np.ones(np.broadcast(v1, v2).shape)
    return (1.0 + v2 * v2) * (1.0 + v1 * v1 + v2 * v2) ** -1.5


def check_neutrality(spec: SystemSpec, grid) -> float:
    """Signed total charge of sampled data by cell quadrature.

    Raises :class:`NeutralityViolation` for neutral kinds when the result
    exceeds ``1e-10 * sum |e_a| M_a``.
    """
    per_species = grid.species_mass()
    signed = float(np.sum(spec.charges * per_species))
    if spec.neutral:
        scale = float(np.sum(np.abs(spec.charges) * per_species))
        if abs(signed) > NEUTRALITY_RTOL * scale:
            raise NeutralityViolation(
                f"sampled signed charge {signed!r} exceeds {NEUTRALITY_RTOL} x {scale!r}"
            )
    return signed


@dataclass(frozen=True)
class DomainBounds:
    x_min: float
    x_max: float
    v1_max: float
    v2_max: float
    M_abs: float
    t_end: float


def derive_domain_bounds(spec: SystemSpec, t_end: float, margin: float = 0.1) -> DomainBounds:
    """A-priori phase-space box that no characteristic leaves before ``t_end``.

    Every kick obeys ``|dV1/ds| <= max|e| * M_abs / 2``. Positions move at
    speed < 1 (relativistic) or at most ``v1_max`` (classical).
    """
    if t_end < 0:
        raise InvalidValue("t_end must be >= 0", key="t_end")
    if margin < 0:
        raise InvalidValue("margin must be >= 0", key="margin")
    profiles = [s.initial_profile for s in spec.species]
    x_lo = min(p.x_support[0] for p in profiles)
    x_hi = max(p.x_support[1] for p in profiles)
    v1_bound = max(max(abs(p.v1_support[0]), abs(p.v1_support[1])) for p in profiles)
    w2 = max(p.v2_halfwidth for p in profiles)
    m_abs = spec.total_abs_charge

    grow = 1.0 + margin
    kick = spec.max_abs_charge * m_abs / 2.0
    v1_reach = v1_bound + kick * t_end
    speed = 1.0 if spec.relativistic else v1_reach
    center = 0.5 * (x_lo + x_hi)
    half = grow * (0.5 * (x_hi - x_lo) + speed * t_end)
    return DomainBounds(
        x_min=center - half,
        x_max=center + half,
        v1_max=grow * v1_reach,
        v2_max=grow * w2,
        M_abs=m_abs,
        t_end=float(t_end),
    )


def monocharged_mass(spec: SystemSpec) -> float:
    """Total charge M of a monocharged system (0 for neutral ones)."""
    if spec.neutral:
        return 0.0
    return float(spec.species[0].charge * spec.species[0].initial_profile.mass)

