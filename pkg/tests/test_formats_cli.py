import json
import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from vpsim import cli, solver
from vpsim import formats as fmt
from vpsim.errors import EmptySeries, IncompatibleSystemKind, UnknownQuantity
from vpsim.model import SpeciesSpec, SystemSpec
from vpsim.phasespace import GridGeometry, PhaseGrid
from vpsim.plot import emit_plot, plot_series

example = pytest.mark.example

SMALL_RVP = """\
system.kind = RVP
species.0.charge = 1
grid.nx = 64
grid.nv1 = 32
grid.nv2 = 4
grid.margin = 0.5
time.t_end = 4
output.directory = out
"""

SMALL_VPN = """\
system.kind = VPN
species.0.charge = 1
species.0.amplitude = 0.1
species.1.charge = -1
species.1.amplitude = 0.1
grid.nx = 64
grid.nv1 = 32
grid.nv2 = 4
grid.margin = 0.5
time.dt = 0.1
time.t_end = 1
output.directory = out
"""


def run_text(tmp_path, text, name="run.cfg"):
    cfg = tmp_path / name
    cfg.write_text(text)
    code = cli.cmd_run(cfg)
    return code, tmp_path / "out"


@pytest.fixture(scope="module")
def small_rvp(tmp_path_factory):
    code, out = run_text(tmp_path_factory.mktemp("rvp"), SMALL_RVP)
    assert code == 0
    return out


def test_format_value():
    assert fmt.format_value(0.1) == "0.1"
    assert fmt.format_value(1 / 3) == repr(1 / 3)
    assert fmt.format_value(None) == ""
    assert fmt.format_value(True) == "true" and fmt.format_value(np.bool_(False)) == "false"
    assert fmt.format_value(7) == "7"
    assert fmt.format_value(math.inf) == "inf" and fmt.format_value(math.nan) == "nan"
    assert float(fmt.format_value(np.float64(2.5e-300))) == 2.5e-300


def test_series_columns_exact(small_rvp):
    header = (small_rvp / "series.csv").read_bytes().split(b"\r\n")[0].decode()
    assert header.split(",") == [
        "t", "Q1", "p1", "P1", "R", "r", "W2", "rho_L1", "rho_L2", "rho_Linf", "charge_s0",
        "K", "total_energy", "virial", "rho_E1sq", "x2_moment", "E1_at_r", "E1_max_abs", "sigma_ok",
    ]
    s = fmt.read_csv_columns(small_rvp / "series.csv")
    assert np.all(np.isnan(s["total_energy"]))  # absent for a monocharged run
    assert np.all(s["sigma_ok"] == 1.0)


def test_run_directory_contents_and_manifest(small_rvp):
    names = {p.name for p in small_rvp.iterdir()}
    assert {"config.cfg", "series.csv", "aux.csv", "initial.vpgrid", "final.vpgrid",
            "history.vphist", "manifest.json"} <= names
    assert "cone.csv" not in names
    man = json.loads((small_rvp / "manifest.json").read_text())
    assert man["config"] == SMALL_RVP
    assert man["rng_seed"] == 0
    assert all(fmt.verify_manifest(small_rvp).values())
    assert man["files"]["series.csv"] == fmt.sha256_file(small_rvp / "series.csv")


def test_snapshot_round_trip(tmp_path):
    g = GridGeometry(8, 6, 4, -1.0, 0.25, -1.5, 0.5, -1.0, 0.5)
    vals = np.random.default_rng(1).random((2,) + g.shape)
    path = fmt.write_snapshot(tmp_path / "a.vpgrid", PhaseGrid(g, vals))
    data = path.read_bytes()
    assert data.startswith(fmt.SNAPSHOT_MAGIC)
    back = fmt.read_snapshot(path)
    assert np.array_equal(back.values, vals)
    assert back.geometry == g
    # payload is little-endian binary64 in species, x, v1, v2 order
    assert np.array_equal(np.frombuffer(data[-vals.nbytes:], "<f8"), vals.ravel())


def test_history_round_trip(tmp_path):
    x = np.linspace(-2, 2, 11)
    hist = solver.FieldHistory(0.0, 0.25, x, np.random.default_rng(2).random((5, 11)))
    back = fmt.read_history(fmt.write_history(tmp_path / "h.vphist", hist))
    assert np.array_equal(back.E1, hist.E1)
    assert np.allclose(back.x, x, rtol=0, atol=1e-15)
    assert back.dt == 0.25


@example
def test_zero_horizon_run_writes_one_row(tmp_path):
    code, out = run_text(tmp_path, SMALL_RVP.replace("time.t_end = 4", "time.t_end = 0"))
    assert code == 0
    lines = (out / "series.csv").read_bytes().split(b"\r\n")
    assert len([ln for ln in lines if ln]) == 2


@example
def test_rerun_gives_identical_series(tmp_path, small_rvp):
    code, out = run_text(tmp_path, SMALL_RVP)
    assert code == 0
    assert (out / "series.csv").read_bytes() == (small_rvp / "series.csv").read_bytes()


@example
def test_check_dispatch_two_reports(small_rvp):
    reports = cli.check_directory(small_rvp, ["thm1", "thm3"])
    assert [r.id for r in reports] == ["Thm1", "Thm3/Thm5"]
    stored = json.loads((small_rvp / "report.json").read_text())
    assert [d["id"] for d in stored] == ["Thm1", "Thm3/Thm5"]
    assert set(stored[0]) >= {"id", "passed", "measured", "tolerances", "notes"}
    assert (small_rvp / "report.txt").read_text().count("Thm") >= 2


@example
def test_check_rejects_wrong_kind(tmp_path):
    code, out = run_text(tmp_path, SMALL_VPN)
    assert code == 0
    with pytest.raises(IncompatibleSystemKind):
        cli.check_directory(out, ["thm1"])
    assert cli.main(["check", str(out), "--theorems", "thm1"]) == cli.EXIT_ERROR


def test_aliases_and_defaults():
    assert cli.resolve_checks(["Thm5", "thm3"], SystemSpec("VP", [SpeciesSpec("a", 1.0)]).kind) == ["thm3"]
    assert "cone" in cli.resolve_checks(None, SystemSpec(
        "RVPN", [SpeciesSpec("a", 1.0), SpeciesSpec("b", -1.0)]).kind)


def test_check_requires_complete_run(tmp_path):
    assert cli.main(["check", str(tmp_path)]) == cli.EXIT_ERROR


@example
def test_plot_is_svg_with_slope(small_rvp):
    path = emit_plot(small_rvp / "series.csv", "Q1", small_rvp / "q1.svg")
    root = ET.parse(path).getroot()
    assert root.tag.endswith("svg")
    assert "slope" in path.read_text()
    assert cli.cmd_plot(small_rvp, "rho_Linf") == 0
    assert (small_rvp / "rho_Linf.svg").exists()


@example
def test_plot_errors(small_rvp):
    with pytest.raises(UnknownQuantity):
        emit_plot(small_rvp / "series.csv", "no_such_column")
    with pytest.raises(EmptySeries):
        plot_series({"t": np.array([0.0, 1.0]), "total_energy": np.array([np.nan, np.nan])},
                    "total_energy")
    assert cli.main(["plot", str(small_rvp), "--quantity", "nope"]) == cli.EXIT_ERROR


def test_plot_is_deterministic(small_rvp):
    a = plot_series(fmt.read_csv_columns(small_rvp / "series.csv"), "Q1")
    b = plot_series(fmt.read_csv_columns(small_rvp / "series.csv"), "Q1")
    assert a == b


@example
def test_blowup_leaves_marker_and_no_manifest(tmp_path, monkeypatch):
    real = solver.step_semilag

    def poisoned(grid, *a, **k):
        out, fld = real(grid, *a, **k)
        out.values[0, 10, 10, 1] = np.inf
        return out, fld

    monkeypatch.setattr(solver, "step_semilag", poisoned)
    code, out = run_text(tmp_path, SMALL_RVP)
    assert code == cli.EXIT_BLOWUP
    assert not (out / "manifest.json").exists()
    s = fmt.read_csv_columns(out / "series.csv")
    assert s["_blowup"].startswith(fmt.BLOWUP_MARKER)
    assert s["t"].size == 1
    assert (out / "blowup.vpgrid").exists()


def test_cone_file_for_neutral_relativistic(tmp_path):
    text = SMALL_VPN.replace("VPN", "RVPN")
    code, out = run_text(tmp_path, text)
    assert code == 0
    cone = fmt.read_csv_columns(out / "cone.csv")
    assert list(cone) == list(fmt.CONE_COLUMNS)
    assert cone["T"][-1] == pytest.approx(1.0)
    reports = cli.check_directory(out, ["cone", "lem4", "charge"])
    assert [r.id for r in reports] == ["Cone", "Lem4", "Charge"]
    assert reports[1].passed and reports[2].passed


@example
@pytest.mark.parametrize("name", cli.DEMOS)
def test_demo_command_writes_config(tmp_path, name):
    assert cli.main(["demo", name, "--dest", str(tmp_path)]) == 0
    assert (tmp_path / f"{name}.cfg").read_text() == cli.demo_text(name)


def test_main_run_and_version(tmp_path, capsys):
    cfg = tmp_path / "r.cfg"
    cfg.write_text(SMALL_RVP.replace("time.t_end = 4", "time.t_end = 1"))
    assert cli.main(["run", str(cfg), "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "manifest.json").exists()
    with pytest.raises(SystemExit):
        cli.main(["--version"])
    assert capsys.readouterr().out.strip()


def test_bad_config_exits_with_error(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(SMALL_RVP + "dx = 1\n")
    assert cli.main(["run", str(cfg)]) == cli.EXIT_ERROR
    assert "UnknownKey" in capsys.readouterr().err
