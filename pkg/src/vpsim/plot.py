"""SVG plots of series columns. Growth-type quantities default to log-log
axes with the trailing-window slope annotated."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .errors import EmptySeries, InsufficientPoints, NonpositiveValues  # noqa: E402
from .formats import atomic_write, read_csv_columns, series_quantity  # noqa: E402
from .verify import fit_growth_exponent  # noqa: E402

LOGLOG = frozenset({"Q1", "P1", "p1", "R", "virial", "x2_moment", "K"})

plt.rcParams["svg.hashsalt"] = "vpsim"
plt.rcParams["svg.fonttype"] = "path"


def plot_series(series: dict, quantity: str, loglog: bool | None = None) -> bytes:
    """Render ``quantity`` against t; returns SVG bytes."""
    y = series_quantity(series, quantity)
    t = series_quantity(series, "t")
    keep = np.isfinite(y)
    t, y = t[keep], y[keep]
    if y.size == 0:
        raise EmptySeries(f"column {quantity!r} has no values")
    loglog = quantity in LOGLOG if loglog is None else loglog
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    if loglog:
        pos = (t > 0) & (y > 0)
        ax.loglog(t[pos], y[pos], "-", lw=1.5, label=quantity)
        try:
            fit = fit_growth_exponent(t[pos], y[pos])
            tw = np.linspace(*fit.window, 20)
            ax.loglog(tw, np.exp(fit.intercept) * tw**fit.slope, "--", lw=1.0,
                      label=f"slope {fit.slope:.3f}")
        except (InsufficientPoints, NonpositiveValues):
            pass
    else:
        ax.plot(t, y, "-", lw=1.5, label=quantity)
    ax.set_xlabel("t")
    ax.set_ylabel(quantity)
    ax.legend(loc="best")
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    from io import BytesIO

    buf = BytesIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    return buf.getvalue()


def emit_plot(series_path, quantity: str, out_path=None) -> Path:
    series_path = Path(series_path)
    if series_path.is_dir():
        series_path = series_path / "series.csv"
    series = read_csv_columns(series_path)
    out = Path(out_path) if out_path else series_path.parent / f"{quantity}.svg"
    return atomic_write(out, plot_series(series, quantity))
