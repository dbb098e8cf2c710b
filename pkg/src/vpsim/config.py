"""Flat ``key = value`` run configuration with dotted section prefixes.

Example::

    system.kind = RVP
    species.0.charge = 1
    grid.nx = 256
    time.t_end = 40

Unknown keys are rejected; every error cites the key and line number.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

from .diagnostics import DiagnosticOptions
from .errors import InvalidValue, ParseError, UnknownKey, VPSimError
from .model import (
    InitialProfile,
    ProfileFamily,
    SpeciesSpec,
    SystemKind,
    SystemSpec,
    derive_domain_bounds,
)
from .phasespace import SCHEMES, GridGeometry
from .solver import BACKENDS, StepperConfig, cfl_dt, snap_dt

AUTO = "auto"


@dataclass(frozen=True)
class SpeciesConfig:
    name: str = ""
    charge: float = 1.0
    profile: str = ProfileFamily.PRODUCT_BUMP.value
    amplitude: float = 1.0
    x_center: float = 0.0
    x_halfwidth: float = 1.0
    v1_center: float = 0.0
    v1_halfwidth: float = 1.0
    v2_halfwidth: float = 1.0


@dataclass(frozen=True)
class RunConfig:
    kind: str = "RVP"
    species: tuple = (SpeciesConfig(name="s0"),)
    nx: int = 256
    nv1: int = 128
    nv2: int = 16
    margin: float = 0.1
    dt: float | str = AUTO
    t_end: float = 40.0
    output_every: int = 1
    scheme: str = "linear_conservative"
    backend: str = "semilag"
    pic_particle_count: int = 200_000
    rng_seed: int = 0
    p_norms: tuple = (1.0, 2.0, math.inf)
    support_threshold: float = 1e-6
    cone_apex: float = 0.0
    directory: str = "out"
    emit_snapshots: bool = False
    emit_plots: bool = False

    # -- derived objects --------------------------------------------------

    def system_spec(self) -> SystemSpec:
        return SystemSpec(
            SystemKind(self.kind),
            tuple(
                SpeciesSpec(
                    s.name,
                    s.charge,
                    InitialProfile(
                        family=ProfileFamily(s.profile),
                        amplitude=s.amplitude,
                        x_center=s.x_center,
                        x_halfwidth=s.x_halfwidth,
                        v1_center=s.v1_center,
                        v1_halfwidth=s.v1_halfwidth,
                        v2_halfwidth=s.v2_halfwidth,
                    ),
                )
                for s in self.species
            ),
        )

    def geometry(self, spec: SystemSpec | None = None) -> GridGeometry:
        spec = spec or self.system_spec()
        bounds = derive_domain_bounds(spec, self.t_end, self.margin)
        return GridGeometry.from_bounds(bounds, self.nx, self.nv1, self.nv2)

    def stepper(self, spec: SystemSpec | None = None,
                geometry: GridGeometry | None = None) -> StepperConfig:
        spec = spec or self.system_spec()
        geometry = geometry or self.geometry(spec)
        dt = cfl_dt(spec, geometry) if self.dt == AUTO else float(self.dt)
        return StepperConfig(
            dt=snap_dt(dt, self.t_end),
            t_end=self.t_end,
            scheme=self.scheme,
            output_every=self.output_every,
            backend=self.backend,
            pic_particle_count=self.pic_particle_count,
            rng_seed=self.rng_seed,
        )

    def diagnostic_options(self) -> DiagnosticOptions:
        return DiagnosticOptions(
            p_norms=self.p_norms,
            support_threshold=self.support_threshold,
            cone_apex=self.cone_apex,
        )


# -- value parsers ---------------------------------------------------------------


def _float(text):
    v = float(text)
    if math.isnan(v):
        raise ValueError("nan is not allowed")
    return v


def _int(text):
    v = float(text)
    if not v.is_integer():
        raise ValueError(f"{text!r} is not an integer")
    return int(v)


def _bool(text):
    low = text.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"{text!r} is not a boolean")


def _dt(text):
    return AUTO if text.lower() == AUTO else _float(text)


def _p_list(text):
    out = []
    for part in text.split(","):
        part = part.strip()
        out.append(math.inf if part.lower() in ("inf", "infinity") else _float(part))
    return tuple(out)


def _choice(options):
    def parse(text):
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return text

    return parse


_GLOBAL_KEYS = {
    "system.kind": ("kind", _choice([k.value for k in SystemKind])),
    "grid.nx": ("nx", _int),
    "grid.nv1": ("nv1", _int),
    "grid.nv2": ("nv2", _int),
    "grid.margin": ("margin", _float),
    "time.dt": ("dt", _dt),
    "time.t_end": ("t_end", _float),
    "time.output_every": ("output_every", _int),
    "stepper.scheme": ("scheme", _choice(SCHEMES)),
    "stepper.backend": ("backend", _choice(BACKENDS)),
    "stepper.pic_particle_count": ("pic_particle_count", _int),
    "stepper.rng_seed": ("rng_seed", _int),
    "diagnostics.p_norms": ("p_norms", _p_list),
    "diagnostics.support_threshold": ("support_threshold", _float),
    "diagnostics.cone_apex": ("cone_apex", _float),
    "output.directory": ("directory", str),
    "output.emit_snapshots": ("emit_snapshots", _bool),
    "output.emit_plots": ("emit_plots", _bool),
}

_SPECIES_KEYS = {
    "name": str,
    "charge": _float,
    "profile": _choice([p.value for p in ProfileFamily]),
    "amplitude": _float,
    "x_center": _float,
    "x_halfwidth": _float,
    "v1_center": _float,
    "v1_halfwidth": _float,
    "v2_halfwidth": _float,
}

_REQUIRED = ("system.kind", "time.t_end")


def parse_config(text: str) -> RunConfig:
    """Parse configuration text, fill defaults and validate eagerly."""
    values: dict = {}
    lines: dict = {}
    species: dict[int, dict] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError("expected 'key = value'", line=lineno)
        key, _, val = (p.strip() for p in line.partition("="))
        if not key:
            raise ParseError("missing key", line=lineno)
        if not val:
            raise ParseError("missing value", key=key, line=lineno)
        if key in lines:
            raise ParseError(f"duplicate key (first on line {lines[key]})", key=key, line=lineno)
        lines[key] = lineno
        parts = key.split(".")
        if parts[0] == "species":
            if len(parts) != 3 or not parts[1].isdigit() or parts[2] not in _SPECIES_KEYS:
                raise UnknownKey("unknown key", key=key, line=lineno)
            try:
                parsed = _SPECIES_KEYS[parts[2]](val)
            except ValueError as exc:
                raise InvalidValue(str(exc), key=key, line=lineno) from None
            species.setdefault(int(parts[1]), {})[parts[2]] = (parsed, key, lineno)
            continue
        if key not in _GLOBAL_KEYS:
            raise UnknownKey("unknown key", key=key, line=lineno)
        attr, parser = _GLOBAL_KEYS[key]
        try:
            values[attr] = (parser(val), key, lineno)
        except ValueError as exc:
            raise InvalidValue(str(exc), key=key, line=lineno) from None

    for key in _REQUIRED:
        if key not in lines:
            raise InvalidValue("required key missing", key=key)
    if not species:
        raise InvalidValue("at least one species.N block is required", key="species.0.charge")
    idx = sorted(species)
    if idx != list(range(len(idx))):
        raise InvalidValue("species indices must run 0, 1, 2, ...",
                           key=f"species.{idx[-1]}", line=min(v[2] for v in species[idx[-1]].values()))

    sp = []
    for i in idx:
        entries = species[i]
        kw = {k: v[0] for k, v in entries.items()}
        kw.setdefault("name", f"s{i}")
        sp.append(SpeciesConfig(**kw))
    cfg = RunConfig(species=tuple(sp), **{a: v[0] for a, v in values.items()})
    _validate(cfg, values, species)
    return cfg


def _where(values, species, attr, i=None):
    if i is None:
        entry = values.get(attr)
        key = next(k for k, (a, _) in _GLOBAL_KEYS.items() if a == attr)
    else:
        entry = species.get(i, {}).get(attr)
        key = f"species.{i}.{attr}"
    return {"key": key, "line": entry[2] if entry else None}


def _validate(cfg: RunConfig, values=None, species=None):
    values = values or {}
    species = species or {}

    def bad(msg, attr, i=None):
        raise InvalidValue(msg, **_where(values, species, attr, i))

    for attr in ("nx", "nv1", "nv2"):
        if getattr(cfg, attr) < 4:
            bad("must be >= 4", attr)
    if cfg.margin < 0:
        bad("must be >= 0", "margin")
    if cfg.dt != AUTO and not cfg.dt > 0:
        bad("must be > 0 or 'auto'", "dt")
    if not cfg.t_end >= 0 or math.isinf(cfg.t_end):
        bad("must be finite and >= 0", "t_end")
    if cfg.output_every < 1:
        bad("must be >= 1", "output_every")
    if cfg.pic_particle_count < 1:
        bad("must be >= 1", "pic_particle_count")
    if not 0 < cfg.support_threshold < 1:
        bad("must lie in (0, 1)", "support_threshold")
    if any(p < 1 for p in cfg.p_norms):
        bad("exponents must be >= 1", "p_norms")
    for i, s in enumerate(cfg.species):
        if s.charge == 0:
            bad("must be nonzero", "charge", i)
        if s.amplitude < 0:
            bad("must be >= 0", "amplitude", i)
        for attr in ("x_halfwidth", "v1_halfwidth"):
            if not getattr(s, attr) > 0:
                bad("must be > 0", attr, i)
        if s.v2_halfwidth < 0:
            bad("must be >= 0", "v2_halfwidth", i)
        if s.profile == ProfileFamily.PRODUCT_BUMP.value and s.v1_center != 0:
            bad("product_bump requires v1_center = 0", "v1_center", i)
    try:
        cfg.system_spec()
    except VPSimError as exc:
        raise InvalidValue(str(exc), key=getattr(exc, "key", None) or "species") from None


# -- serialization ---------------------------------------------------------------


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return "inf" if v == math.inf else repr(v)
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    return str(v)


def serialize(cfg: RunConfig) -> str:
    """Canonical text form; ``parse_config(serialize(c)) == c``."""
    out = []
    by_attr = {a: k for k, (a, _) in _GLOBAL_KEYS.items()}
    out.append(f"system.kind = {cfg.kind}")
    for i, s in enumerate(cfg.species):
        for f in fields(SpeciesConfig):
            out.append(f"species.{i}.{f.name} = {_fmt(getattr(s, f.name))}")
    for f in fields(RunConfig):
        if f.name in ("kind", "species"):
            continue
        out.append(f"{by_attr[f.name]} = {_fmt(getattr(cfg, f.name))}")
    return "\n".join(out) + "\n"


def with_overrides(cfg: RunConfig, **changes) -> RunConfig:
    return replace(cfg, **changes)
