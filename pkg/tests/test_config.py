import math

import pytest

from vpsim import cli
from vpsim.config import AUTO, RunConfig, parse_config, serialize, with_overrides
from vpsim.errors import InvalidValue, ParseError, UnknownKey

example = pytest.mark.example

MINIMAL = """\
system.kind = RVP
species.0.charge = 1
time.t_end = 40
"""


@example
def test_minimal_file_gets_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.scheme == "linear_conservative"
    assert cfg.support_threshold == 1e-6
    assert cfg.dt == AUTO
    assert cfg.p_norms == (1.0, 2.0, math.inf)
    assert cfg.species[0].name == "s0"


@example
def test_negative_dt_names_the_key():
    with pytest.raises(InvalidValue) as info:
        parse_config(MINIMAL + "time.dt = -1\n")
    assert info.value.key == "time.dt"
    assert "dt" in str(info.value)
    assert info.value.line == 4


@example
def test_stray_key_is_rejected():
    with pytest.raises(UnknownKey) as info:
        parse_config(MINIMAL + "dx = 0.1\n")
    assert info.value.key == "dx" and info.value.line == 4


@pytest.mark.parametrize("extra, err", [
    ("time.t_end = 3\n", ParseError),
    ("grid.nx 12\n", ParseError),
    ("grid.nx = \n", ParseError),
    ("grid.nx = twelve\n", InvalidValue),
    ("grid.nx = 2\n", InvalidValue),
    ("species.0.mass = 2\n", UnknownKey),
    ("species.x.charge = 1\n", UnknownKey),
    ("stepper.scheme = weno\n", InvalidValue),
    ("species.0.v1_center = 0.5\n", InvalidValue),
    ("diagnostics.support_threshold = 1.5\n", InvalidValue),
    ("output.emit_plots = maybe\n", InvalidValue),
])
def test_malformed_entries(extra, err):
    with pytest.raises(err):
        parse_config(MINIMAL + extra)


def test_missing_required_and_gapped_species():
    with pytest.raises(InvalidValue):
        parse_config("system.kind = RVP\nspecies.0.charge = 1\n")
    with pytest.raises(InvalidValue):
        parse_config("system.kind = VPN\ntime.t_end = 1\nspecies.0.charge = 1\nspecies.2.charge = -1\n")


def test_kind_rules_are_enforced_at_parse_time():
    with pytest.raises(InvalidValue):
        parse_config("system.kind = RVP\ntime.t_end = 1\nspecies.0.charge = 1\nspecies.1.charge = 1\n")
    with pytest.raises(InvalidValue):
        parse_config("system.kind = VPN\ntime.t_end = 1\nspecies.0.charge = 1\n"
                     "species.1.charge = -1\nspecies.1.amplitude = 0.5\n")


def test_comments_and_blank_lines():
    cfg = parse_config("# run\n\n" + MINIMAL.replace("= 40", "= 40  # horizon"))
    assert cfg.t_end == 40.0


def test_round_trip_default_and_custom():
    for cfg in (RunConfig(), parse_config(MINIMAL + "time.dt = 0.125\noutput.emit_plots = true\n"
                                          "diagnostics.p_norms = 1, 3, inf\n")):
        assert parse_config(serialize(cfg)) == cfg


@pytest.mark.parametrize("name", cli.DEMOS)
def test_demo_configs_round_trip(name):
    cfg = parse_config(cli.demo_text(name))
    assert parse_config(serialize(cfg)) == cfg


def test_derived_objects():
    cfg = parse_config(MINIMAL + "grid.nx = 64\ngrid.nv1 = 32\ngrid.nv2 = 8\n")
    spec = cfg.system_spec()
    g = cfg.geometry(spec)
    st = cfg.stepper(spec, g)
    assert (g.nx, g.nv1, g.nv2) == (64, 32, 8)
    assert st.n_steps * st.dt == pytest.approx(40.0)
    fixed = with_overrides(cfg, dt=0.5).stepper()
    assert fixed.dt == 0.5
