"""On-disk formats: series/aux/cone CSV, binary snapshots and field
histories, manifests. Every write goes through a temp file and rename."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import EmptySeries, ParseError, UnknownQuantity
from .phasespace import GridGeometry, PhaseGrid
from .solver import FieldHistory

SNAPSHOT_MAGIC = b"VPGRID1\n"
HISTORY_MAGIC = b"VPHIST1\n"
BLOWUP_MARKER = "NumericalBlowup"

BASE_COLUMNS = ("t", "Q1", "p1", "P1", "R", "r", "W2", "rho_L1", "rho_L2", "rho_Linf")
TAIL_COLUMNS = (
    "K", "total_energy", "virial", "rho_E1sq", "x2_moment", "E1_at_r", "E1_max_abs", "sigma_ok",
)
CONE_COLUMNS = ("T", "I_plus", "I_minus", "cone_top", "total_energy", "residual")


def series_columns(n_species: int) -> list[str]:
    return [*BASE_COLUMNS, *(f"charge_s{k}" for k in range(n_species)), *TAIL_COLUMNS]


def format_value(v) -> str:
    """Shortest round-trip decimal for floats; empty for absent values."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


def atomic_write(path, data: bytes | str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([format_value(row.get(c)) for c in columns])
    return buf.getvalue()


class SeriesSink:
    """Collects diagnostics rows; :meth:`write` emits series.csv and aux.csv."""

    def __init__(self, n_species: int):
        self.columns = series_columns(n_species)
        self.rows: list[dict] = []
        self.aux_rows: list[dict] = []
        self.aux_columns: list[str] = []

    def __call__(self, record):
        self.rows.append(record.series_row())
        aux = {"t": record.t, **record.aux}
        for k in aux:
            if k not in self.aux_columns:
                self.aux_columns.append(k)
        self.aux_rows.append(aux)

    def write(self, directory, blowup_t: float | None = None) -> list[Path]:
        directory = Path(directory)
        rows = list(self.rows)
        text = csv_text(self.columns, rows)
        if blowup_t is not None:
            marker = [f"{BLOWUP_MARKER} t={format_value(blowup_t)}"] + [""] * (len(self.columns) - 1)
            buf = io.StringIO()
            csv.writer(buf, lineterminator="\r\n").writerow(marker)
            text += buf.getvalue()
        out = [atomic_write(directory / "series.csv", text)]
        if self.aux_rows:
            out.append(atomic_write(directory / "aux.csv", csv_text(self.aux_columns, self.aux_rows)))
        return out


def cone_text(ledger) -> str:
    rows = [
        dict(T=T, I_plus=a, I_minus=b, cone_top=c, total_energy=e, residual=ledger.residual(i))
        for i, (T, a, b, c, e) in enumerate(
            zip(ledger.T, ledger.I_plus, ledger.I_minus, ledger.cone_top, ledger.total_energy)
        )
    ]
    return csv_text(CONE_COLUMNS, rows)


def read_csv_columns(path) -> dict[str, np.ndarray]:
    """Numeric columns of a CSV file. Empty fields become NaN; a trailing
    blowup marker row is dropped and reported under the key ``_blowup``."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptySeries(f"{path} has no header") from None
        data = {c: [] for c in header}
        blowup = None
        for lineno, row in enumerate(reader, start=2):
            if row and row[0].startswith(BLOWUP_MARKER):
                blowup = row[0]
                continue
            if len(row) != len(header):
                raise ParseError(f"{path}: expected {len(header)} fields", line=lineno)
            for c, v in zip(header, row):
                data[c].append(_cell(v))
    out = {c: np.array(v, dtype=float) for c, v in data.items()}
    if blowup is not None:
        out["_blowup"] = blowup
    return out


def _cell(v: str) -> float:
    if v == "":
        return math.nan
    if v in ("true", "false"):
        return 1.0 if v == "true" else 0.0
    return float(v)


def series_quantity(series, name) -> np.ndarray:
    if name not in series:
        raise UnknownQuantity(f"no column {name!r}; available: {', '.join(k for k in series if not k.startswith('_'))}")
    return np.asarray(series[name], dtype=float)


# -- binary snapshots -------------------------------------------------------------


def snapshot_bytes(grid: PhaseGrid) -> bytes:
    g = grid.geometry
    header = " ".join(
        [str(grid.n_species), str(g.nx), str(g.nv1), str(g.nv2)]
        + [repr(float(v)) for v in (g.x_min, g.dx, g.v1_min, g.dv1, g.v2_min, g.dv2)]
    )
    body = np.ascontiguousarray(grid.values, dtype="<f8").tobytes()
    return SNAPSHOT_MAGIC + header.encode("ascii") + b"\n" + body


def write_snapshot(path, grid: PhaseGrid) -> Path:
    return atomic_write(path, snapshot_bytes(grid))


def _split_header(data: bytes, magic: bytes, what: str):
    if not data.startswith(magic):
        raise ParseError(f"not a {what} file (bad magic)")
    end = data.index(b"\n", len(magic))
    return data[len(magic):end].decode("ascii").split(), data[end + 1:]


def read_snapshot(path) -> PhaseGrid:
    fields, body = _split_header(Path(path).read_bytes(), SNAPSHOT_MAGIC, "snapshot")
    ns, nx, nv1, nv2 = (int(v) for v in fields[:4])
    x_min, dx, v1_min, dv1, v2_min, dv2 = (float(v) for v in fields[4:10])
    geom = GridGeometry(nx, nv1, nv2, x_min, dx, v1_min, dv1, v2_min, dv2)
    values = np.frombuffer(body, dtype="<f8").reshape(ns, nx, nv1, nv2).astype(np.float64)
    return PhaseGrid(geom, values)


def history_bytes(history: FieldHistory) -> bytes:
    n, nx = history.E1.shape
    x0 = float(history.x[0])
    dx = float(history.x[1] - history.x[0]) if nx > 1 else 0.0
    header = f"{n} {nx} {history.t0!r} {history.dt!r} {x0!r} {dx!r}"
    return HISTORY_MAGIC + header.encode("ascii") + b"\n" + np.ascontiguousarray(
        history.E1, dtype="<f8"
    ).tobytes()


def write_history(path, history: FieldHistory) -> Path:
    return atomic_write(path, history_bytes(history))


def read_history(path) -> FieldHistory:
    fields, body = _split_header(Path(path).read_bytes(), HISTORY_MAGIC, "field history")
    n, nx = int(fields[0]), int(fields[1])
    t0, dt, x0, dx = (float(v) for v in fields[2:6])
    E1 = np.frombuffer(body, dtype="<f8").reshape(n, nx).astype(np.float64)
    return FieldHistory(t0=t0, dt=dt, x=x0 + dx * np.arange(nx), E1=E1)


# -- manifest ---------------------------------------------------------------------


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_json(path, obj) -> Path:
    return atomic_write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_manifest(directory, config_text: str, version: str, started: str, finished: str,
                   files, seed: int, extra: dict | None = None) -> Path:
    directory = Path(directory)
    entries = {}
    for f in sorted(Path(p) for p in files):
        entries[f.relative_to(directory).as_posix()] = sha256_file(f)
    manifest = {
        "config": config_text,
        "code_version": version,
        "started": started,
        "finished": finished,
        "files": entries,
        "rng_seed": seed,
    }
    if extra:
        manifest.update(extra)
    return write_json(directory / "manifest.json", manifest)


def verify_manifest(directory) -> dict[str, bool]:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    return {name: sha256_file(directory / name) == digest for name, digest in manifest["files"].items()}
