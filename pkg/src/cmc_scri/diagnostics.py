"""Post-solve verification: asymptotic coefficients, Lipschitz and tilt checks.

fit_asymptotics regresses the solved height against 1, s, s^2, s^3 on a
window well inside the finest annulus and compares the first three
coefficients with the values the expansion predicts from the cut alone.
The cubic column is a nuisance term: every exact solution carries an s^3
part (and the outer Dirichlet pinning excites an s^4 mode), so fitting it
keeps the quadratic coefficient clean, but only c0..c2 are claimed.  The
remainder after subtracting the claimed part must decay like s^3; its
log-log slope is reported with a 2.7 threshold rather than the ideal 3.0
because the s^4 contamination inside a finite window steals a few
hundredths (calibrated on synthetic data with known coefficients).

lipschitz_check tracks sup |difference quotients| of Q across continuation
stages: boundedness of these as the annulus grows is the discrete shadow of
the Lipschitz estimate that makes the limit graph attain its boundary data.
tilt_boundedness watches the two tilt factors, against the leaf through
each point and against the static observer; both stay bounded on a
spacelike-graph limit and their product controls the comparison geometry.

claims_report flattens everything into {claim, value, threshold, pass}
rows; normalized claims divide the measured deviation by the pointwise
tolerance, so threshold 1.0 always means "inside tolerance".
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .charts import r_star
from .curvature import (
    NullGraphJet,
    leaf_pair_tilt,
    spacelike_factor,
    standard_jet_from_null,
    tilt_factor_standard,
)
from .errors import InsufficientWindowError
from .foliation import FoliationParams, height_jet, invert_tau
from .solver import SolveResult, StageResult, stage_fd_jets

__all__ = [
    "AsymptoticFit",
    "LipschitzReport",
    "TiltReport",
    "fit_asymptotics",
    "fit_grid",
    "lipschitz_check",
    "tilt_boundedness",
    "coefficient_targets",
    "solution_rows",
    "fit_residual_rows",
    "tilt_profile_rows",
    "claims_report",
    "plot_script",
]

ROUNDING_FLOOR = 1e-14
SLOPE_THRESHOLD = 2.7
RATIO_THRESHOLD = 1.5
DRIFT_THRESHOLD = 0.10
SPREAD_THRESHOLD = 2.0
SANDWICH_SLACK = 1e-8


@dataclass(frozen=True)
class AsymptoticFit:
    """Fitted expansion of u - r_* = -Q against powers of s = 1/r.

    c0..c2 are the claimed coefficients per theta node; c3 is the nuisance
    cubic.  normalized_errors holds max |c_k - target_k| / tol_k over theta
    (<= 1 passes).  slope is None when the remainder sits at the rounding
    floor on the whole window, which counts as a pass.
    """

    theta: np.ndarray
    s_window: np.ndarray
    c0: np.ndarray
    c1: np.ndarray
    c2: np.ndarray
    c3: np.ndarray
    targets: tuple
    normalized_errors: tuple
    coefficients_pass: bool
    slope: float | None
    slope_pass: bool
    remainder: np.ndarray


def coefficient_targets(params: FoliationParams, h0: float, theta: np.ndarray):
    """Predicted (c0, c1, c2) on the given theta nodes.

    The stored cut is in the internal convention, so the outward-expansion
    targets are the negatives: u - r_* = -(f + phi s + psi s^2 / 2) + O(s^3).
    Derivatives come from the cut itself (exact for the built-in cuts), not
    from the gridded sphere operators, so a clean solve can hit these to
    rounding; the gridded route is cross-checked in the foliation suite.
    """
    tau = 1.0 / h0
    f0 = np.broadcast_to(np.asarray(params.cut.value(theta), float),
                         theta.shape).astype(float)
    f1 = np.asarray(params.cut.derivative(theta, 1), dtype=float)
    f2 = np.asarray(params.cut.derivative(theta, 2), dtype=float)
    lap = f2 + f1 / np.tan(theta)
    phi = -0.5 * (tau**2 + f1**2)
    psi = 0.5 * (tau**2 * lap + 2 * f1**2 * f2)
    return -f0, -phi, -0.5 * psi


def fit_grid(s: np.ndarray, theta: np.ndarray, Q: np.ndarray,
             params: FoliationParams, h0: float) -> AsymptoticFit:
    """Least-squares expansion fit on pre-windowed data Q[s_level, theta].

    Fits powers 0..4 but claims only 0..2.  The cubic is the forced next
    term of any exact solution and the quartic is the free mode the outer
    Dirichlet pinning excites; leaving either out lets it alias onto c2 at
    above-tolerance size on a half-octave window.  Columns are scaled by
    the geometric mean of the window before inversion, otherwise the
    Vandermonde conditioning at s ~ 10^-2 eats the quadratic digits.
    """
    s = np.asarray(s, dtype=float)
    if s.size < 8:
        raise InsufficientWindowError(
            f"only {s.size} s-levels in the fit window; need at least 8"
        )
    s_ref = math.sqrt(s[0] * s[-1])
    A = np.vander(s / s_ref, N=5, increasing=True)
    coef = np.linalg.pinv(A) @ (-Q)
    c0, c1, c2, c3 = (coef[k] / s_ref**k for k in range(4))
    t0, t1, t2 = coefficient_targets(params, h0, theta)

    tol0 = np.full_like(t0, 1e-3)
    tol1 = np.maximum(0.02 * np.abs(t1), 1e-3)
    tol2 = np.maximum(0.02 * np.abs(t2), 1e-3)
    errs = (
        float(np.max(np.abs(c0 - t0) / tol0)),
        float(np.max(np.abs(c1 - t1) / tol1)),
        float(np.max(np.abs(c2 - t2) / tol2)),
    )

    R = (-Q) - (c0[None, :] + np.outer(s, c1) + np.outer(s**2, c2))
    r_sup = np.max(np.abs(R), axis=1)
    live = r_sup > ROUNDING_FLOOR
    if np.count_nonzero(live) >= 4:
        slope = float(np.polyfit(np.log(s[live]), np.log(r_sup[live]), 1)[0])
        slope_pass = slope >= SLOPE_THRESHOLD
    else:
        slope = None  # remainder at rounding everywhere: nothing left to decay
        slope_pass = True
    return AsymptoticFit(
        theta=theta,
        s_window=s,
        c0=c0, c1=c1, c2=c2, c3=c3,
        targets=(t0, t1, t2),
        normalized_errors=errs,
        coefficients_pass=all(e <= 1.0 for e in errs),
        slope=slope,
        slope_pass=slope_pass,
        remainder=R,
    )


def _window_indices(grid, s_lo: float, s_hi: float) -> np.ndarray:
    s = grid.s
    keep = (s >= s_lo) & (s <= s_hi)
    keep[:3] = False
    keep[-3:] = False  # boundary layers carry one-sided FD artifacts
    idx = np.nonzero(keep)[0]
    if idx.size < 8:
        raise InsufficientWindowError(
            f"fit window [{s_lo:g}, {s_hi:g}] keeps {idx.size} of {grid.n_s} "
            "s-levels; need at least 8 (deepen the continuation)"
        )
    return idx


def fit_asymptotics(result: SolveResult, params: FoliationParams | None = None,
                    h0: float | None = None, *, s_lo: float | None = None,
                    s_hi: float | None = None) -> AsymptoticFit:
    """Expansion fit of the finest stage on the window [2 s_min, s_max / 4]."""
    params = result.params if params is None else params
    h0 = result.h0 if h0 is None else h0
    st = result.final
    if st.grid.s_min > result.s_max / 8 * (1 + 1e-12):
        raise InsufficientWindowError(
            f"finest annulus starts at {st.grid.s_min:g} > s_max/8 = "
            f"{result.s_max / 8:g}; run at least 3 continuation stages"
        )
    lo = 2 * st.grid.s_min if s_lo is None else s_lo
    hi = result.s_max / 4 if s_hi is None else s_hi
    idx = _window_indices(st.grid, lo, hi)
    return fit_grid(st.grid.s[idx], st.grid.theta, st.Q[idx, :], params, h0)


@dataclass(frozen=True)
class LipschitzReport:
    """Sup difference quotients per stage and finest-pair stability ratios.

    level_s / level_dtheta / level_ds resolve the finest stage by s-level;
    level_trend compares the deepest eighth of levels against the median
    level (1.0 when everything is at rounding), a report-only view of
    whether the quotients blow up toward the inner boundary.
    """

    sup_dtheta: tuple
    sup_ds: tuple
    ratio_dtheta: float
    ratio_ds: float
    ratios_pass: bool
    positive_radial: tuple
    positive_radial_bound: float
    positive_radial_pass: bool
    level_s: np.ndarray
    level_dtheta: np.ndarray
    level_ds: np.ndarray
    level_trend: float


def _stage_quotients(st: StageResult):
    dq_th = np.abs(np.diff(st.Q, axis=1)) / st.grid.dtheta
    dq_s = np.abs(np.diff(st.Q, axis=0)) / st.grid.ds
    s_int = st.grid.s[1:-1, None]
    Q_s = (st.Q[2:, :] - st.Q[:-2, :]) / (2 * st.grid.ds)
    pos = np.max(np.maximum(Q_s, 0.0) / s_int**3)
    # per-level sups on the lower node of each s-interval, so the theta and
    # s quotient columns share one abscissa grid.s[:-1]
    lv_th = np.max(dq_th[:-1, :], axis=1)
    lv_s = np.max(dq_s, axis=1)
    return float(np.max(dq_th)), float(np.max(dq_s)), float(pos), lv_th, lv_s


def _stable_ratio(prev: float, last: float) -> float:
    if max(prev, last) < 1e-13:
        return 1.0  # both at rounding: vacuously stable
    return last / prev if prev > 0 else math.inf


def lipschitz_check(result: SolveResult) -> LipschitzReport:
    """Difference-quotient stability across continuation stages.

    The positive-part bound 3 (|beta_1| + |beta_2|) comes from the sandwich:
    Q - P is trapped between beta s^3 envelopes and P_s is negative on the
    slab, so any positive radial slope must be of cubic size.
    """
    per = [_stage_quotients(st) for st in result.stages]
    sup_dtheta = tuple(p[0] for p in per)
    sup_ds = tuple(p[1] for p in per)
    pos = tuple(p[2] for p in per)
    if len(per) >= 2:
        ratio_th = _stable_ratio(sup_dtheta[-2], sup_dtheta[-1])
        ratio_s = _stable_ratio(sup_ds[-2], sup_ds[-1])
    else:
        ratio_th = ratio_s = 1.0
    bound = 3 * (abs(result.barriers.beta_lower) + abs(result.barriers.beta_upper))
    lv_th, lv_s = per[-1][3], per[-1][4]
    lv_all = np.maximum(lv_th, lv_s)
    deep = lv_all[: max(1, lv_all.size // 8)]
    trend = _stable_ratio(float(np.median(lv_all)), float(np.max(deep)))
    return LipschitzReport(
        sup_dtheta=sup_dtheta,
        sup_ds=sup_ds,
        ratio_dtheta=ratio_th,
        ratio_ds=ratio_s,
        ratios_pass=ratio_th <= RATIO_THRESHOLD and ratio_s <= RATIO_THRESHOLD,
        positive_radial=pos,
        positive_radial_bound=bound,
        positive_radial_pass=max(pos) <= bound,
        level_s=result.final.grid.s[:-1],
        level_dtheta=lv_th,
        level_ds=lv_s,
        level_trend=trend,
    )


@dataclass(frozen=True)
class TiltReport:
    """Tilt factors of the solved graph, leafwise and against the static frame."""

    sup_nu: tuple
    sup_s_nu_tilde: tuple
    drift: float
    drift_pass: bool
    identity_error: float
    chain_min_slack: float
    profile_s: np.ndarray
    profile_snu: np.ndarray
    decades: float
    spread: float
    spread_pass: bool


def _stage_tilts(params: FoliationParams, st: StageResult):
    s_int, theta, qjet = stage_fd_jets(st.grid, st.Q)
    S = np.broadcast_to(s_int[:, None], qjet.Q.shape)
    TH = np.broadcast_to(theta[None, :], qjet.Q.shape)
    tau_star = invert_tau(params, TH, S, -qjet.Q)
    p = height_jet(params, TH, S, tau_star)
    p_null = NullGraphJet(Q=p.P, Q_s=p.P_s, Q_ss=p.P_ss, Q_theta=p.P_theta,
                          Q_thetatheta=p.P_thetatheta, Q_stheta=p.P_stheta)
    nu = leaf_pair_tilt(params.m, S, p_null, qjet)
    r, sjet = standard_jet_from_null(params.m, S, qjet)
    nut = tilt_factor_standard(params.m, r, sjet.u_r, sjet.u_theta)
    h = 1 - 2 * params.m * S
    L_q, _, _ = spacelike_factor(params.m, S, qjet)
    ident = np.max(np.abs(S * nut * np.sqrt(h * L_q) - 1.0))
    nut_leaf = 1.0 / (S * np.sqrt(h * p.L))
    chain = np.min(2 * nut * nut_leaf - nu)
    snu = S * nut
    return nu, snu, float(ident), float(chain), s_int


def tilt_boundedness(result: SolveResult,
                     params: FoliationParams | None = None) -> TiltReport:
    """Per-stage sup tilts, their drift, and the s nu-tilde profile spread.

    The spread claim (sup_theta s nu-tilde within a factor 2 of its median
    in s) is only probing anything when the finest annulus spans about two
    decades; the report carries the span so callers can tell.
    """
    params = result.params if params is None else params
    sup_nu, sup_snu = [], []
    ident = 0.0
    chain = math.inf
    prof_s = prof_snu = None
    for st in result.stages:
        nu, snu, e, c, s_int = _stage_tilts(params, st)
        sup_nu.append(float(np.max(nu)))
        sup_snu.append(float(np.max(snu)))
        ident = max(ident, e)
        chain = min(chain, c)
        prof_s, prof_snu = s_int, np.max(snu, axis=1)
    drifts = [
        abs(sup_nu[i + 1] - sup_nu[i]) / sup_nu[i]
        for i in range(len(sup_nu) - 1)
    ]
    drift = max(drifts) if drifts else 0.0
    med = float(np.median(prof_snu))
    spread = float(np.max(prof_snu)) / med
    decades = float(np.log10(prof_s[-1] / prof_s[0]))
    return TiltReport(
        sup_nu=tuple(sup_nu),
        sup_s_nu_tilde=tuple(sup_snu),
        drift=drift,
        drift_pass=drift <= DRIFT_THRESHOLD,
        identity_error=ident,
        chain_min_slack=chain,
        profile_s=prof_s,
        profile_snu=prof_snu,
        decades=decades,
        spread=spread,
        spread_pass=spread <= SPREAD_THRESHOLD,
    )


def solution_rows(result: SolveResult):
    """(header, rows) for the solution CSV over the finest stage interior.

    Boundary s-rows hold pure Dirichlet data and have no centered jets, so
    they are omitted; everything exported has an honest second-order jet.
    """
    params = result.params
    st = result.final
    s_int, theta, qjet = stage_fd_jets(st.grid, st.Q)
    S = np.broadcast_to(s_int[:, None], qjet.Q.shape)
    TH = np.broadcast_to(theta[None, :], qjet.Q.shape)
    tau_star = invert_tau(params, TH, S, -qjet.Q)
    p = height_jet(params, TH, S, tau_star)
    p_null = NullGraphJet(Q=p.P, Q_s=p.P_s, Q_ss=p.P_ss, Q_theta=p.P_theta,
                          Q_thetatheta=p.P_thetatheta, Q_stheta=p.P_stheta)
    nu = leaf_pair_tilt(params.m, S, p_null, qjet)
    r, sjet = standard_jet_from_null(params.m, S, qjet)
    nut = tilt_factor_standard(params.m, r, sjet.u_r, sjet.u_theta)
    L, _, _ = spacelike_factor(params.m, S, qjet)
    u = r_star(r, params.m) - qjet.Q
    header = ["theta", "s", "Q", "u", "L", "nu_tilde", "nu"]
    rows = []
    for k in range(S.shape[0]):
        for j in range(S.shape[1]):
            rows.append((TH[k, j], S[k, j], qjet.Q[k, j], u[k, j],
                         L[k, j], nut[k, j], nu[k, j]))
    return header, rows


def fit_residual_rows(fit: AsymptoticFit):
    """(header, rows) of the windowed fit remainder for the residual CSV."""
    header = ["theta", "s", "remainder"]
    rows = []
    for k, sv in enumerate(fit.s_window):
        for j, th in enumerate(fit.theta):
            rows.append((th, sv, fit.remainder[k, j]))
    return header, rows


def tilt_profile_rows(tilt: TiltReport):
    header = ["s", "sup_s_nu_tilde"]
    return header, list(zip(tilt.profile_s, tilt.profile_snu))


def _claim(claim, value, threshold, direction, ok):
    return {
        "claim": claim,
        "value": value,
        "threshold": threshold,
        "direction": direction,
        "pass": bool(ok),
    }


def claims_report(result: SolveResult, fit: AsymptoticFit | None,
                  lips: LipschitzReport, tilt: TiltReport) -> list:
    """Flat claim rows for the run report; fit may be None on shallow runs."""
    cfg = result.config
    cert = result.certificate
    rows = []
    worst_res = max(st.final_residual for st in result.stages)
    rows.append(_claim("newton-final-residual", worst_res, cfg.newton_tol,
                       "<=", worst_res <= cfg.newton_tol))
    margins = result.sandwich_margins()
    lo = min(m[0] for m in margins)
    up = min(m[1] for m in margins)
    rows.append(_claim("sandwich-lower-margin", lo, -SANDWICH_SLACK, ">=",
                       lo >= -SANDWICH_SLACK))
    rows.append(_claim("sandwich-upper-margin", up, -SANDWICH_SLACK, ">=",
                       up >= -SANDWICH_SLACK))
    if cert is not None:
        rows.append(_claim("certificate-final-gap", cert.final_gap,
                           cfg.certificate_tol, "<=",
                           cert.final_gap < cfg.certificate_tol))
        rows.append(_claim("certificate-gaps-decreasing",
                           1.0 if cert.gaps_decreasing else 0.0, 1.0, ">=",
                           cert.gaps_decreasing))
    if fit is not None:
        for name, err in zip(("c0", "c1", "c2"), fit.normalized_errors):
            rows.append(_claim(f"asymptotic-{name}-normalized-error", err,
                               1.0, "<=", err <= 1.0))
        rows.append(_claim("remainder-slope", fit.slope, SLOPE_THRESHOLD,
                           ">=", fit.slope_pass))
    rows.append(_claim("lipschitz-theta-ratio", lips.ratio_dtheta,
                       RATIO_THRESHOLD, "<=",
                       lips.ratio_dtheta <= RATIO_THRESHOLD))
    rows.append(_claim("lipschitz-s-ratio", lips.ratio_ds, RATIO_THRESHOLD,
                       "<=", lips.ratio_ds <= RATIO_THRESHOLD))
    rows.append(_claim("radial-positive-part", max(lips.positive_radial),
                       lips.positive_radial_bound, "<=",
                       lips.positive_radial_pass))
    rows.append(_claim("tilt-drift", tilt.drift, DRIFT_THRESHOLD, "<=",
                       tilt.drift_pass))
    rows.append(_claim("tilt-identity-error", tilt.identity_error, 1e-10,
                       "<=", tilt.identity_error <= 1e-10))
    rows.append(_claim("tilt-profile-spread", tilt.spread, SPREAD_THRESHOLD,
                       "<=", tilt.spread_pass))
    rows.append(_claim("bartnik-chain-slack", tilt.chain_min_slack, -1e-12,
                       ">=", tilt.chain_min_slack >= -1e-12))
    return rows


PLOT_SCRIPT = '''\
"""Render the run artifacts next to this script into three PNG figures.

Needs matplotlib; reads fit_residuals.csv, tilt_profile.csv, report.json
and manifest.json from its own directory.
"""
import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = Path(__file__).resolve().parent


def read_csv(name):
    with open(HERE / name, newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    data = [[float(v) for v in row] for row in rows[1:]]
    return header, data


def fig_remainder():
    _, data = read_csv("fit_residuals.csv")
    by_s = {}
    for theta, s, rem in data:
        by_s.setdefault(s, []).append(abs(rem))
    s = sorted(by_s)
    sup = [max(by_s[k]) for k in s]
    r = [1.0 / v for v in s]
    fig, ax = plt.subplots()
    ax.loglog(r, sup, "o-")
    ax.set_xlabel("r")
    ax.set_ylabel("sup_theta |u - r* - c0 - c1/r - c2/r^2|")
    ax.set_title("Expansion remainder")
    ax.grid(True, which="both", alpha=0.3)
    fig.savefig(HERE / "remainder.png", dpi=150)


def fig_sandwich():
    manifest = json.loads((HERE / "manifest.json").read_text())
    margins = manifest["sandwich_margins"]
    ks = list(range(1, len(margins) + 1))
    fig, ax = plt.subplots()
    ax.semilogy(ks, [m[0] for m in margins], "s-", label="min(Q - Q_lower)")
    ax.semilogy(ks, [m[1] for m in margins], "o-", label="min(Q_upper - Q)")
    ax.set_xlabel("continuation stage")
    ax.set_ylabel("margin")
    ax.set_title("Barrier sandwich margins")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.savefig(HERE / "sandwich.png", dpi=150)


def fig_tilt():
    _, data = read_csv("tilt_profile.csv")
    s = [row[0] for row in data]
    snu = [row[1] for row in data]
    fig, ax = plt.subplots()
    ax.semilogx(s, snu, "-")
    ax.set_xlabel("s")
    ax.set_ylabel("sup_theta s * nu_tilde")
    ax.set_title("Static tilt profile")
    ax.grid(True, which="both", alpha=0.3)
    fig.savefig(HERE / "tilt.png", dpi=150)


if __name__ == "__main__":
    fig_remainder()
    fig_sandwich()
    fig_tilt()
    print("wrote remainder.png, sandwich.png, tilt.png")
'''


def plot_script() -> str:
    """Standalone matplotlib script text for the run artifacts."""
    return PLOT_SCRIPT
