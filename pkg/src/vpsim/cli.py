"""Command-line entry point: ``vpsim run|check|plot|demo``."""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import sys
from importlib import resources
from pathlib import Path

from . import __version__
from . import formats as fmt
from . import verify
from .config import parse_config
from .errors import IncompatibleSystemKind, NumericalBlowup, VPSimError
from .model import SystemKind, monocharged_mass
from .solver import PIC, Particles, bin_particles, run

DEMOS = ("rvp_small", "vp_small", "rvpn_pair", "vpn_pair", "freestream_sanity")

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_ERROR = 2
EXIT_BLOWUP = 3

R, C, RN, CN = SystemKind.RVP, SystemKind.VP, SystemKind.RVPN, SystemKind.VPN
# check name -> kinds it applies to
APPLICABLE = {
    "thm1": {R},
    "thm2": {R},
    "lem1": {R},
    "lem2": {R},
    "thm3": {R, C},
    "virial": {C},
    "thm4": {RN, CN},
    "lem4": {R, RN},
    "cone": {RN},
    "moment": {CN},
    "energy": {RN, CN},
    "charge": {R, C, RN, CN},
    "decay": {C},
}
ALIASES = {"thm5": "thm3", "thm6": "thm4", "lem3": "lem2", "cor": "lem2"}


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


# -- run --------------------------------------------------------------------------


def cmd_run(config_path, out_dir=None) -> int:
    config_path = Path(config_path)
    text = config_path.read_text(encoding="utf-8")
    cfg = parse_config(text)
    directory = Path(out_dir) if out_dir else Path(cfg.directory)
    if not directory.is_absolute() and out_dir is None:
        directory = config_path.parent / directory
    directory.mkdir(parents=True, exist_ok=True)
    stale = directory / "manifest.json"
    if stale.exists():
        stale.unlink()

    spec = cfg.system_spec()
    geometry = cfg.geometry(spec)
    stepper = cfg.stepper(spec, geometry)
    started = _now()
    files = [fmt.atomic_write(directory / "config.cfg", text)]
    sink = fmt.SeriesSink(len(spec.species))

    def snapshot(n, t, grid):
        if cfg.emit_snapshots:
            files.append(fmt.write_snapshot(directory / "snapshots" / f"step_{n:06d}.vpgrid", grid))

    try:
        result = run(spec, stepper, geometry, sinks=[sink], options=cfg.diagnostic_options(),
                     on_output=snapshot)
    except NumericalBlowup as exc:
        sink.write(directory, blowup_t=exc.t)
        state = exc.state
        if isinstance(state, Particles):
            state = bin_particles(state, spec, geometry)
        if state is not None:
            fmt.write_snapshot(directory / "blowup.vpgrid", state)
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_BLOWUP

    files += sink.write(directory)
    final = result.final
    if stepper.backend == PIC:
        final = bin_particles(final, spec, geometry)
    files.append(fmt.write_snapshot(directory / "initial.vpgrid", result.initial))
    files.append(fmt.write_snapshot(directory / "final.vpgrid", final))
    files.append(fmt.write_history(directory / "history.vphist", result.history))
    if result.cone is not None:
        files.append(fmt.atomic_write(directory / "cone.csv", fmt.cone_text(result.cone)))
    if cfg.emit_plots:
        from .plot import emit_plot

        for q in ("Q1", "rho_Linf"):
            files.append(emit_plot(directory / "series.csv", q, directory / "plots" / f"{q}.svg"))
    fmt.write_manifest(
        directory, text, __version__, started, _now(), files, cfg.rng_seed,
        extra={"dt": stepper.dt, "n_steps": stepper.n_steps, "backend": stepper.backend},
    )
    return EXIT_OK


# -- check ------------------------------------------------------------------------


class RunDirectory:
    """Lazy view of a completed run directory."""

    def __init__(self, directory):
        self.path = Path(directory)
        manifest = self.path / "manifest.json"
        if not manifest.exists():
            raise VPSimError(f"{self.path} is not a complete run (no manifest.json)")
        self.manifest = json.loads(manifest.read_text())
        self.config = parse_config(self.manifest["config"])
        self.spec = self.config.system_spec()
        self.geometry = self.config.geometry(self.spec)
        self.series = fmt.read_csv_columns(self.path / "series.csv")
        self._cache = {}

    def _load(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    @property
    def aux(self):
        return self._load("aux", lambda: fmt.read_csv_columns(self.path / "aux.csv"))

    @property
    def cone(self):
        return self._load("cone", lambda: fmt.read_csv_columns(self.path / "cone.csv"))

    @property
    def history(self):
        return self._load("history", lambda: fmt.read_history(self.path / "history.vphist"))

    @property
    def final(self):
        return self._load("final", lambda: fmt.read_snapshot(self.path / "final.vpgrid"))


def _run_check(name: str, rd: RunDirectory) -> verify.TheoremReport:
    s, spec, g = rd.series, rd.spec, rd.geometry
    M = monocharged_mass(spec)
    seed = rd.config.rng_seed
    if name == "thm1":
        return verify.check_thm1_density_floor(s)
    if name == "thm2":
        return verify.check_thm2_jacobian_and_ceiling(rd.history, rd.final, s, spec, seed=seed)
    if name == "lem1":
        return verify.check_lemma1_order(rd.history, spec, seed=seed, v1_extent=2.0 * g.v1_max)
    if name == "lem2":
        return verify.check_lemma2_lemma3_corollary(s, M, g.dv1)
    if name == "thm3":
        return verify.check_thm3_thm5_linear(s, M)
    if name == "virial":
        return verify.check_virial_rate(s, M)
    if name == "thm4":
        return verify.check_thm4_thm6_sqrt(s)
    if name == "lem4":
        return verify.check_lemma4(s, rd.aux)
    if name == "cone":
        return verify.check_cone_identity(rd.cone)
    if name == "moment":
        return verify.check_moment_and_envelope(s, rd.aux, rd.history)
    if name == "energy":
        rep = verify.check_energy_drift(s)
        if spec.kind is CN:
            rep.gating = False
            rep.notes += "; informational for the classical neutral system"
        return rep
    if name == "charge":
        return verify.check_charge_conservation(s)
    if name == "decay":
        return verify.density_decay_exponent(s)
    raise VPSimError(f"unknown check {name!r}")


def resolve_checks(names, kind: SystemKind) -> list[str]:
    """Canonical check names; ``None`` selects every check for ``kind``."""
    if names is None:
        return [n for n, kinds in APPLICABLE.items() if kind in kinds]
    out = []
    for raw in names:
        n = ALIASES.get(raw.strip().lower(), raw.strip().lower())
        if n not in APPLICABLE:
            raise VPSimError(f"unknown check {raw!r}; known: {', '.join(APPLICABLE)}")
        if kind not in APPLICABLE[n]:
            raise IncompatibleSystemKind(f"check {raw!r} does not apply to a {kind.value} run")
        if n not in out:
            out.append(n)
    return out


def report_text(reports) -> str:
    lines = []
    for r in reports:
        status = "PASS" if r.passed else "FAIL"
        tag = "" if r.gating else " (informational)"
        lines.append(f"{status} {r.id}{tag}: {r.notes}")
        for k, v in r.to_dict()["measured"].items():
            lines.append(f"    {k} = {json.dumps(v)}")
    return "\n".join(lines) + "\n"


def check_directory(directory, names=None):
    rd = RunDirectory(directory)
    checks = resolve_checks(names, rd.spec.kind)
    reports = [_run_check(n, rd) for n in checks]
    fmt.write_json(rd.path / "report.json", [r.to_dict() for r in reports])
    fmt.atomic_write(rd.path / "report.txt", report_text(reports))
    return reports


def cmd_check(directory, names=None) -> int:
    reports = check_directory(directory, names)
    sys.stdout.write(report_text(reports))
    ok = all(r.passed for r in reports if r.gating)
    return EXIT_OK if ok else EXIT_CHECK_FAILED


# -- plot / demo ------------------------------------------------------------------


def cmd_plot(directory, quantity, out=None) -> int:
    from .plot import emit_plot

    path = emit_plot(directory, quantity, out)
    print(path)
    return EXIT_OK


def demo_text(name: str) -> str:
    if name not in DEMOS:
        raise VPSimError(f"unknown demo {name!r}; choose from {', '.join(DEMOS)}")
    return resources.files("vpsim").joinpath("demos", f"{name}.cfg").read_text(encoding="utf-8")


def cmd_demo(name, dest=None, do_run=False) -> int:
    text = demo_text(name)
    dest = Path(dest) if dest else Path(f"{name}.cfg")
    if dest.is_dir():
        dest = dest / f"{name}.cfg"
    fmt.atomic_write(dest, text)
    print(dest)
    if do_run:
        return cmd_run(dest)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vpsim", description="Vlasov-Poisson phase-space simulator")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a simulation from a config file")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (overrides output.directory)")

    c = sub.add_parser("check", help="verify a completed run directory")
    c.add_argument("directory")
    c.add_argument("--theorems", help="comma-separated checks, e.g. thm1,thm3")

    pl = sub.add_parser("plot", help="plot one series column as SVG")
    pl.add_argument("directory")
    pl.add_argument("--quantity", required=True)
    pl.add_argument("--out")

    d = sub.add_parser("demo", help="write a bundled demo config")
    d.add_argument("name", choices=DEMOS)
    d.add_argument("--dest", help="file or directory for the config (default ./NAME.cfg)")
    d.add_argument("--run", action="store_true", help="also run it")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args.config, args.out)
        if args.command == "check":
            names = args.theorems.split(",") if args.theorems else None
            return cmd_check(args.directory, names)
        if args.command == "plot":
            return cmd_plot(args.directory, args.quantity, args.out)
        return cmd_demo(args.name, args.dest, args.run)
    except VPSimError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
