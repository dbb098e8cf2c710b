"""Theorem-level checks over stored diagnostic series and field histories.

Every check returns a :class:`TheoremReport`. Thresholds are fixed
engineering choices; each report records the tolerances it applied.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientPoints, NonpositiveValues
from .model import SystemSpec
from .phasespace import PhaseGrid
from .solver import FieldHistory, trace_characteristics

LINEAR_BAND = (0.9, 1.05)
SQRT_CEILING = 0.6
JACOBIAN_FLOOR = 1.0 - 1e-6


@dataclass(frozen=True)
class ExponentFit:
    window: tuple[float, float]
    slope: float
    intercept: float
    r_squared: float
    n_points: int


@dataclass
class TheoremReport:
    id: str
    passed: bool
    measured: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    notes: str = ""
    gating: bool = True

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "passed": bool(self.passed),
            "measured": _plain(self.measured),
            "tolerances": _plain(self.tolerances),
            "notes": self.notes,
            "gating": self.gating,
        }


def _plain(obj):
    # numpy scalars and containers to JSON-ready builtins
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    return obj


def _col(series, name):
    return np.asarray(series[name], dtype=float)


def fit_growth_exponent(t, y, window_fraction: float = 0.5, min_points: int = 5) -> ExponentFit:
    """Least-squares slope of log y against log t over the trailing window.

    The window keeps samples with ``t >= (1 - window_fraction) * t_max``.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    t_hi = float(t.max())
    t_lo = (1.0 - window_fraction) * t_hi
    sel = t >= t_lo
    n = int(sel.sum())
    if n < min_points:
        raise InsufficientPoints(f"{n} samples in window [{t_lo}, {t_hi}], need {min_points}")
    tw, yw = t[sel], y[sel]
    if np.any(tw <= 0) or np.any(yw <= 0) or not np.all(np.isfinite(yw)):
        raise NonpositiveValues("log-log fit needs t > 0 and y > 0 in the window")
    lx, ly = np.log(tw), np.log(yw)
    mx, my = lx.mean(), ly.mean()
    sxx = np.sum((lx - mx) ** 2)
    if sxx == 0:
        raise InsufficientPoints("window contains a single distinct time")
    slope = float(np.sum((lx - mx) * (ly - my)) / sxx)
    intercept = float(my - slope * mx)
    resid = ly - (intercept + slope * lx)
    syy = np.sum((ly - my) ** 2)
    r2 = 1.0 if syy == 0 else float(1.0 - np.sum(resid**2) / syy)
    return ExponentFit((float(tw.min()), t_hi), slope, intercept, r2, n)


def _fit_dict(fit: ExponentFit) -> dict:
    return {
        "slope": fit.slope,
        "intercept": fit.intercept,
        "r_squared": fit.r_squared,
        "window": list(fit.window),
        "n_points": fit.n_points,
    }


def check_thm1_density_floor(series, floor_fraction: float = 0.1,
                             norms=("rho_L1", "rho_L2", "rho_Linf")) -> TheoremReport:
    measured, ok = {}, True
    for name in norms:
        y = _col(series, name)
        ratio = float(y.min() / y[0]) if y[0] > 0 else 0.0
        measured[f"min_{name}_over_initial"] = ratio
        ok &= ratio >= floor_fraction
    return TheoremReport(
        "Thm1", bool(ok), measured, {"floor_fraction": floor_fraction},
        "density norms stay above a fixed fraction of their initial values",
    )


def _support_points(grid: PhaseGrid, n: int, rng, threshold: float):
    S = grid.values.sum(axis=0)
    idx = np.flatnonzero(S.ravel() > threshold * S.max())
    pick = rng.choice(idx, size=n, replace=idx.size < n)
    ix, i1, i2 = np.unravel_index(pick, S.shape)
    g = grid.geometry
    return g.x[ix], g.v1[i1], g.v2[i2]


def check_thm2_jacobian_and_ceiling(history: FieldHistory, grid_final: PhaseGrid, series,
                                    spec: SystemSpec, samples: int = 100, seed: int = 0,
                                    threshold: float = 1e-6,
                                    ceiling_slack: float = 0.01) -> TheoremReport:
    """(a) backward traces from random final support points keep
    dV1/dv1 >= 1 - 1e-6 at s = 0; (b) sup_x rho never exceeds int F0 dv."""
    rng = np.random.default_rng(seed)
    x, v1, v2 = _support_points(grid_final, samples, rng, threshold)
    path = trace_characteristics(history, history.t_last, x, v1, v2, spec, direction="backward")
    jac = path.dV1_dv1[-1]
    ceiling = spec.species[0].initial_profile.envelope_integral * abs(spec.charges[0])
    sup_rho = float(_col(series, "rho_Linf").max())
    a = bool(jac.min() >= JACOBIAN_FLOOR)
    b = bool(sup_rho <= ceiling * (1.0 + ceiling_slack))
    return TheoremReport(
        "Thm2",
        a and b,
        {
            "min_dV1_dv1_at_s0": float(jac.min()),
            "traces": int(jac.size),
            "jacobian_ok": a,
            "sup_rho": sup_rho,
            "int_F0_dv": ceiling,
            "ceiling_ok": b,
        },
        {"jacobian_floor": JACOBIAN_FLOOR, "ceiling_slack": ceiling_slack},
        "backward-trace Jacobian floor and density ceiling",
    )


def check_lemma1_order(history: FieldHistory, spec: SystemSpec, pairs: int = 100,
                       seed: int = 0, slack_fraction: float = 1e-6,
                       v1_extent: float | None = None) -> TheoremReport:
    """Forward traces from ordered pairs (x <= x*, v1 <= v1*, |v2| >= |v2*|)
    at s = 0 must stay ordered in X and V1."""
    rng = np.random.default_rng(seed)
    p = spec.species[0].initial_profile
    lo, hi = p.x_support
    vlo, vhi = p.v1_support
    x = np.sort(rng.uniform(lo, hi, (pairs, 2)), axis=1)
    v1 = np.sort(rng.uniform(vlo, vhi, (pairs, 2)), axis=1)
    v2 = rng.uniform(-p.v2_halfwidth, p.v2_halfwidth, (pairs, 2))
    order = np.argsort(-np.abs(v2), axis=1)
    v2 = np.take_along_axis(v2, order, axis=1)
    extent = float(history.x[-1] - history.x[0] + (history.x[1] - history.x[0]))
    vext = v1_extent if v1_extent is not None else extent
    sx, sv = slack_fraction * extent, slack_fraction * vext
    lead = trace_characteristics(history, history.t0, x[:, 0], v1[:, 0], v2[:, 0], spec,
                                 direction="forward")
    star = trace_characteristics(history, history.t0, x[:, 1], v1[:, 1], v2[:, 1], spec,
                                 direction="forward")
    cross_x = (lead.X - star.X).max(axis=0)
    cross_v = (lead.V1 - star.V1).max(axis=0)
    good = (cross_x <= sx) & (cross_v <= sv)
    worst_x, worst_v = float(cross_x.max()), float(cross_v.max())
    return TheoremReport(
        "Lem1",
        bool(good.all()),
        {"pairs": pairs, "ordered_pairs": int(good.sum()),
         "max_X_crossing": worst_x, "max_V1_crossing": worst_v},
        {"X_slack": sx, "V1_slack": sv},
        "order preservation of forward characteristics",
    )


def check_lemma2_lemma3_corollary(series, M: float, dv1: float) -> TheoremReport:
    t = _col(series, "t")
    p1 = _col(series, "p1")
    Er = _col(series, "E1_at_r")
    R = _col(series, "R")
    dt = np.diff(t)
    tol_p = 0.02 * M * dt + dv1
    gap_p = np.diff(p1) - (0.5 * M * dt - tol_p)
    a = bool(np.all(gap_p >= 0))
    drop = np.diff(Er)
    b = bool(np.all(drop >= -1e-6 * M))
    c = bool(Er[-1] >= 0.4 * M)
    # Informational: R increments against the trapezoid integral of p1's velocity.
    vel = p1 / np.sqrt(1.0 + p1 * p1)
    R_pred = R[0] + np.concatenate(([0.0], np.cumsum(0.5 * dt * (vel[1:] + vel[:-1]))))
    return TheoremReport(
        "Lem2/Lem3/Cor",
        a and b and c,
        {
            "min_p1_increment_margin": float(gap_p.min()) if gap_p.size else 0.0,
            "p1_ok": a,
            "min_E1_at_r_increment": float(drop.min()) if drop.size else 0.0,
            "E1_at_r_monotone": b,
            "E1_at_r_final_over_M": float(Er[-1] / M),
            "corollary_ok": c,
            "R_identity_max_abs_error": float(np.abs(R - R_pred).max()),
        },
        {"p1_slack": "0.02*M*dt + dv1", "dv1": dv1, "E1_monotone_slack": 1e-6 * M,
         "E1_target": 0.4 * M},
        "R identity error is informational (grid fronts move in whole cells)",
    )


def check_thm3_thm5_linear(series, M: float, slack: float | None = None,
                           band=LINEAR_BAND) -> TheoremReport:
    t = _col(series, "t")
    Q1 = _col(series, "Q1")
    fit = fit_growth_exponent(t[t > 0], Q1[t > 0])
    slack = 0.05 * M if slack is None else slack
    T = t[-1]
    rate = float(Q1[-1] / T)
    upper = 0.5 * M + Q1[0] / T + slack
    exp_ok = band[0] <= fit.slope <= band[1]
    rate_ok = 0.4 * M <= rate <= upper
    return TheoremReport(
        "Thm3/Thm5",
        bool(exp_ok and rate_ok),
        {"fit": _fit_dict(fit), "Q1_rate": rate, "rate_lower": 0.4 * M, "rate_upper": upper},
        {"exponent_band": list(band), "rate_slack": slack},
        "linear growth of the momentum support; band may need retuning per resolution",
    )


def check_thm4_thm6_sqrt(series, ceiling: float = SQRT_CEILING,
                         envelope_slack: float = 0.1) -> TheoremReport:
    t = _col(series, "t")
    Q1 = _col(series, "Q1")
    fit = fit_growth_exponent(t[t > 0], Q1[t > 0])
    t_w = fit.window[0]
    late = t >= t_w
    w0 = int(np.argmax(late))
    C = Q1[w0] / math.sqrt(1.0 + t[w0])
    env = C * np.sqrt(1.0 + t[late])
    worst = float((Q1[late] / env).max())
    exp_ok = fit.slope <= ceiling
    env_ok = worst <= 1.0 + envelope_slack
    return TheoremReport(
        "Thm4/Thm6",
        bool(exp_ok and env_ok),
        {"fit": _fit_dict(fit), "C": float(C), "max_Q1_over_envelope": worst},
        {"exponent_ceiling": ceiling, "envelope_slack": envelope_slack},
        "square-root bound on the momentum support, C calibrated at the window start",
    )


def check_virial_rate(series, M: float, slope_slack: float = 0.05,
                      source_rtol: float = 0.005) -> TheoremReport:
    t = _col(series, "t")
    V = _col(series, "virial")
    src = _col(series, "rho_E1sq")
    floor = M**3 / 12.0
    slopes = np.diff(V) / np.diff(t)
    a = bool(np.all(slopes >= floor * (1.0 - slope_slack)))
    err = np.abs(src - floor) / floor
    b = bool(np.all(err <= source_rtol))
    return TheoremReport(
        "Virial",
        a and b,
        {"M3_over_12": floor, "min_slope": float(slopes.min()) if slopes.size else math.inf,
         "max_source_rel_error": float(err.max())},
        {"slope_slack": slope_slack, "source_rtol": source_rtol},
        "virial growth rate and the exact field source integral",
    )


def check_cone_identity(cone, rtol: float = 0.01, ray_slack: float = 0.01) -> TheoremReport:
    """``cone`` holds columns T, I_plus, I_minus, cone_top, total_energy."""
    Ip = _col(cone, "I_plus")
    Im = _col(cone, "I_minus")
    top = _col(cone, "cone_top")
    energy = _col(cone, "total_energy")
    e0 = energy[0]
    scale = np.where(energy > 0, energy, 1.0)
    resid = np.abs(Ip + Im - top) / scale
    ray_max = float(max(Ip.max(), Im.max())) if Ip.size else 0.0
    a = bool(np.all(resid <= rtol))
    b = bool(ray_max <= e0 * (1.0 + ray_slack))
    return TheoremReport(
        "Cone",
        a and b,
        {"max_residual": float(resid.max()) if resid.size else 0.0,
         "max_ray_integral": ray_max, "initial_energy": float(e0)},
        {"residual_rtol": rtol, "ray_slack": ray_slack},
        "light-cone energy identity and ray bounds",
    )


def _second_difference(t, y):
    h1 = t[1:-1] - t[:-2]
    h2 = t[2:] - t[1:-1]
    return 2.0 / (h1 + h2) * ((y[2:] - y[1:-1]) / h2 - (y[1:-1] - y[:-2]) / h1)


def check_moment_and_envelope(series, aux, history: FieldHistory, identity_rtol: float = 0.01,
                              envelope_slack: float = 0.1) -> TheoremReport:
    t = _col(series, "t")
    x2 = _col(series, "x2_moment")
    rhs = 2.0 * _col(aux, "v1sq_moment") - _col(aux, "E1sq_integral")
    A = x2[0]
    B = max(0.0, 0.5 * float(rhs.max()))
    bound = A + B * (1.0 + t**2)
    a = bool(np.all(x2 <= bound * (1.0 + 1e-12)))

    d2 = _second_difference(t, x2)
    scale = float(np.abs(rhs).max()) or 1.0
    ident = float(np.abs(d2 - rhs[1:-1]).max() / scale) if d2.size else 0.0
    b = ident <= identity_rtol

    times = history.times
    x = history.x
    t_cal = 0.25 * times[-1]
    env = np.minimum(1.0, (1.0 + times[:, None] ** 2) / np.maximum(x[None, :] ** 2, 1e-300))
    ratio = (np.abs(history.E1) / env).max(axis=1)
    ical = int(np.argmin(np.abs(times - t_cal)))
    C_E = float(ratio[ical])
    worst = float((ratio[ical:] / C_E).max()) if C_E > 0 else 0.0
    c = worst <= 1.0 + envelope_slack
    return TheoremReport(
        "Moment/Envelope",
        bool(a and b and c),
        {"moment_A": float(A), "moment_B": B,
         "max_moment_over_bound": float((x2 / bound).max()),
         "identity_residual": ident, "C_E": C_E, "t_calibration": float(times[ical]),
         "max_field_over_envelope": worst},
        {"identity_rtol": identity_rtol, "envelope_slack": envelope_slack},
        "identity residual normalized by the largest |RHS| over the run",
    )


def check_lemma4(series, aux, rtol: float = 1e-12) -> TheoremReport:
    rm = _col(aux, "sigma_minus_ratio")
    rp = _col(aux, "sigma_plus_ratio")
    worst = float(max(rm.max(), rp.max()))
    ok = worst <= 1.0 + rtol
    flags = series.get("sigma_ok")
    if flags is not None:
        ok = ok and bool(np.all(np.asarray(flags, dtype=float) == 1.0))
    return TheoremReport(
        "Lem4", bool(ok), {"max_ratio": worst}, {"rtol": rtol},
        "pointwise density bound by the sigma-k geometric mean",
    )


def check_energy_drift(series, rtol: float = 0.01) -> TheoremReport:
    E = _col(series, "total_energy")
    drift = float(np.abs(E - E[0]).max() / abs(E[0])) if E[0] else 0.0
    return TheoremReport(
        "Energy", drift <= rtol, {"max_relative_drift": drift}, {"rtol": rtol},
        "total energy conservation",
    )


def check_charge_conservation(series, rtol: float = 1e-8) -> TheoremReport:
    cols = sorted((k for k in series if k.startswith("charge_s")), key=lambda k: int(k[8:]))
    drifts = {}
    for k in cols:
        q = _col(series, k)
        drifts[k] = float(np.abs(q - q[0]).max() / abs(q[0])) if q[0] else 0.0
    worst = max(drifts.values()) if drifts else 0.0
    return TheoremReport(
        "Charge", worst <= rtol, {"relative_drift": drifts}, {"rtol": rtol},
        "per-species charge conservation",
    )


def density_decay_exponent(series) -> TheoremReport:
    """Informational fitted exponent of sup rho over the trailing half."""
    t = _col(series, "t")
    y = _col(series, "rho_Linf")
    fit = fit_growth_exponent(t[t > 0], y[t > 0])
    return TheoremReport(
        "Decay", True, {"fit": _fit_dict(fit)}, {}, "informational, not gating", gating=False
    )
