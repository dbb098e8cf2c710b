import math

import numpy as np
import pytest

from vpsim.errors import InvalidValue, NeutralityViolation
from vpsim.model import (
    BUMP_INTEGRAL,
    InitialProfile,
    SpeciesSpec,
    SystemKind,
    SystemSpec,
    bump,
    bump_antiderivative,
    bump_cell_integrals,
    check_neutrality,
    derive_domain_bounds,
    monocharged_mass,
    relativistic_velocity,
    velocity_jacobian,
)
from vpsim.phasespace import GridGeometry, PhaseGrid
from vpsim.solver import initial_grid

example = pytest.mark.example


@example
@pytest.mark.parametrize("v1, v2, expected", [(0.0, 0.0, 0.0), (1.0, math.sqrt(2.0), 0.5),
                                              (2.0, 2.0, 2.0 / 3.0)])
def test_relativistic_velocity_examples(v1, v2, expected):
    assert relativistic_velocity(v1, v2) == pytest.approx(expected, abs=1e-15)


def test_classical_velocity_is_momentum():
    v1 = np.linspace(-3, 3, 7)
    assert np.array_equal(relativistic_velocity(v1, 5.0, relativistic=False), v1)


def test_velocity_jacobian_matches_finite_difference():
    v1, v2, h = 0.7, -1.3, 1e-6
    fd = (relativistic_velocity(v1 + h, v2) - relativistic_velocity(v1 - h, v2)) / (2 * h)
    assert velocity_jacobian(v1, v2) == pytest.approx(fd, rel=1e-8)


def test_bump_integral_closed_form():
    # brute-force midpoint sum against 16/15
    u = (np.arange(200_000) + 0.5) / 100_000 - 1.0
    assert bump(u, 0.0, 1.0).sum() * 1e-5 == pytest.approx(BUMP_INTEGRAL, rel=1e-9)
    assert bump_antiderivative(5.0, 0.0, 1.0) == pytest.approx(16 / 15, abs=1e-15)
    assert bump_antiderivative(-5.0, 0.0, 1.0) == 0.0


def test_bump_cell_integrals_sum_to_mass():
    edges = np.linspace(-3.0, 4.0, 73)
    cells = bump_cell_integrals(edges, 0.5, 2.0)
    assert cells.sum() == pytest.approx(2.0 * BUMP_INTEGRAL, rel=1e-14)
    assert np.all(cells >= 0)


def test_profile_mass_and_envelope():
    p = InitialProfile(amplitude=0.5, x_halfwidth=2.0, v1_halfwidth=3.0, v2_halfwidth=0.5)
    assert p.mass == pytest.approx(0.5 * (16 / 15) ** 3 * 2 * 3 * 0.5)
    assert p.envelope_integral == pytest.approx(0.5 * (16 * 3 / 15) * (16 * 0.5 / 15))
    assert p.momentum_envelope(0.0, 0.0) == 0.5


def test_profile_rejects_bad_parameters():
    with pytest.raises(InvalidValue):
        InitialProfile(amplitude=-1)
    with pytest.raises(InvalidValue):
        InitialProfile(x_halfwidth=0)
    with pytest.raises(InvalidValue):
        InitialProfile(v1_center=1.0)
    InitialProfile(family="shifted_product_bump", v1_center=1.0)


def test_system_spec_species_counts():
    ion = SpeciesSpec("ion", 1.0)
    with pytest.raises(InvalidValue):
        SystemSpec(SystemKind.RVP, [ion, ion])
    with pytest.raises(InvalidValue):
        SystemSpec(SystemKind.VPN, [ion])
    with pytest.raises(InvalidValue):
        SpeciesSpec("none", 0.0)


def test_neutral_spec_requires_balanced_charge():
    p = InitialProfile()
    with pytest.raises(NeutralityViolation):
        SystemSpec("RVPN", [SpeciesSpec("a", 1.0, p), SpeciesSpec("b", -1.0, InitialProfile(amplitude=0.9))])


def _geometry(spec, t_end=1.0):
    return GridGeometry.from_bounds(derive_domain_bounds(spec, t_end, 0.1), 32, 32, 8)


@example
def test_neutrality_identical_profiles():
    p = InitialProfile(amplitude=0.3)
    spec = SystemSpec("RVPN", [SpeciesSpec("a", 1.0, p), SpeciesSpec("b", -1.0, p)])
    q = check_neutrality(spec, initial_grid(spec, _geometry(spec)))
    assert abs(q) <= 1e-15


@example
def test_neutrality_unit_mass_single_species():
    p = InitialProfile(amplitude=1.0 / BUMP_INTEGRAL**3)
    spec = SystemSpec("RVP", [SpeciesSpec("a", 1.0, p)])
    grid = initial_grid(spec, _geometry(spec))
    assert check_neutrality(spec, grid) == pytest.approx(1.0, rel=1e-12)
    # cross-check against brute-force midpoint summation on a fine grid
    g = GridGeometry.from_bounds(derive_domain_bounds(spec, 0.0, 0.0), 400, 400, 64)
    X, V1, V2 = np.meshgrid(g.x, g.v1, g.v2, indexing="ij")
    assert p(X, V1, V2).sum() * g.cell_volume == pytest.approx(1.0, rel=1e-4)


@example
def test_neutrality_unequal_charges_and_masses():
    spec = SystemSpec("RVPN", [
        SpeciesSpec("a", 1.0, InitialProfile(amplitude=2.0 / BUMP_INTEGRAL**3)),
        SpeciesSpec("b", -2.0, InitialProfile(amplitude=1.0 / BUMP_INTEGRAL**3)),
    ])
    g = _geometry(spec)
    values = np.zeros((2,) + g.shape)
    values[0, 3, 4, 5] = 2.0 / g.cell_volume
    values[1, 10, 4, 5] = 1.0 / g.cell_volume
    assert check_neutrality(spec, PhaseGrid(g, values)) == pytest.approx(0.0, abs=1e-14)


def test_neutrality_violation_on_grid():
    p = InitialProfile()
    spec = SystemSpec("RVPN", [SpeciesSpec("a", 1.0, p), SpeciesSpec("b", -1.0, p)])
    grid = initial_grid(spec, _geometry(spec))
    grid.values[1] *= 0.5
    with pytest.raises(NeutralityViolation):
        check_neutrality(spec, grid)


def _monocharged(kind="RVP", **kw):
    return SystemSpec(kind, [SpeciesSpec("ion", 1.0, InitialProfile(**kw))])


@example
def test_bounds_v1_reach_for_unit_mass():
    spec = _monocharged(amplitude=1.0 / BUMP_INTEGRAL**3)
    assert monocharged_mass(spec) == pytest.approx(1.0)
    b = derive_domain_bounds(spec, 40.0, 0.1)
    assert b.v1_max == pytest.approx(1.1 * (1 + 20), rel=1e-14)


@example
def test_bounds_light_speed_x_range():
    b = derive_domain_bounds(_monocharged(), 40.0, 0.0)
    assert (b.x_min, b.x_max) == (pytest.approx(-41.0), pytest.approx(41.0))


@example
def test_bounds_zero_horizon_is_initial_support():
    b = derive_domain_bounds(_monocharged(x_halfwidth=2.0, v1_halfwidth=3.0, v2_halfwidth=0.5), 0.0, 0.1)
    assert b.x_max == pytest.approx(2.2)
    assert b.x_min == pytest.approx(-2.2)
    assert b.v1_max == pytest.approx(3.3)
    assert b.v2_max == pytest.approx(0.55)


def test_bounds_classical_x_extent():
    spec = _monocharged("VP")
    b = derive_domain_bounds(spec, 10.0, 0.0)
    v1_reach = 1.0 + spec.total_abs_charge / 2 * 10.0
    assert b.x_max - b.x_min >= 2.0 + 2 * v1_reach * 10.0 - 1e-9


def test_bounds_reject_negative_inputs():
    with pytest.raises(InvalidValue):
        derive_domain_bounds(_monocharged(), -1.0)
    with pytest.raises(InvalidValue):
        derive_domain_bounds(_monocharged(), 1.0, -0.1)


def test_kind_flags():
    assert SystemKind.RVPN.relativistic and SystemKind.RVPN.neutral
    assert not SystemKind.VP.relativistic and not SystemKind.VP.neutral
    assert monocharged_mass(SystemSpec("VPN", [SpeciesSpec("a", 1.0), SpeciesSpec("b", -1.0)])) == 0.0
