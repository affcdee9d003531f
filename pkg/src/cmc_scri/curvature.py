"""Mean curvature of spacelike radial graphs, in two charts.

Null chart: the surface is v = -Q(theta, s) with s the inverse area radius.
Standard chart: the same surface is t = u(r, theta), u = r_* - Q.  Both
mean curvatures are algebraic in the second-order jet of the graph
function, and must agree pointwise; keeping the two routes separate gives
an end-to-end cross-check of every sign in either derivation.

Sign conventions: future-pointing unit normal, H = (trace K) / 3, so the
upward-opening hyperboloid-like leaves have H > 0.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SpacelikeError

__all__ = [
    "NullGraphJet",
    "StandardGraphJet",
    "spacelike_factor",
    "mean_curvature_null",
    "cmc_residual",
    "mean_curvature_standard",
    "standard_jet_from_null",
    "tilt_factor_standard",
    "quadratic_form_bounds",
    "leaf_pair_tilt",
]


@dataclass(frozen=True)
class NullGraphJet:
    """Second-order jet of the height Q over (theta, s); surface is v = -Q."""

    Q: np.ndarray
    Q_s: np.ndarray
    Q_ss: np.ndarray
    Q_theta: np.ndarray
    Q_thetatheta: np.ndarray
    Q_stheta: np.ndarray


@dataclass(frozen=True)
class StandardGraphJet:
    """Second-order jet of the time height u over (r, theta); surface is t = u."""

    u: np.ndarray
    u_r: np.ndarray
    u_rr: np.ndarray
    u_theta: np.ndarray
    u_thetatheta: np.ndarray
    u_rtheta: np.ndarray


def spacelike_factor(m: float, s, jet: NullGraphJet):
    """L and its chart derivatives; L > 0 exactly where the graph is spacelike.

    L = -(2 Q_s + a Q_s^2 + Q_theta^2) with a = s^2 (1 - 2 m s); L -> tau^2
    on a leaf of the model foliation as s -> 0.
    """
    sv = np.asarray(s, dtype=float)
    a = sv**2 * (1 - 2 * m * sv)
    ap = 2 * sv - 6 * m * sv**2
    L = -(2 * jet.Q_s + a * jet.Q_s**2 + jet.Q_theta**2)
    L_s = -(2 * jet.Q_ss + ap * jet.Q_s**2 + 2 * a * jet.Q_s * jet.Q_ss
            + 2 * jet.Q_theta * jet.Q_stheta)
    L_th = -(2 * jet.Q_stheta + 2 * a * jet.Q_s * jet.Q_stheta
             + 2 * jet.Q_theta * jet.Q_thetatheta)
    return L, L_s, L_th


def _null_rhs(m: float, s, theta, jet: NullGraphJet):
    sv = np.asarray(s, dtype=float)
    th = np.asarray(theta, dtype=float)
    a = sv**2 * (1 - 2 * m * sv)
    L, L_s, L_th = spacelike_factor(m, sv, jet)
    lap = jet.Q_thetatheta + jet.Q_theta / np.tan(th)
    rhs = (sv * L * (a * jet.Q_ss + lap)
           - 0.5 * sv * (L_s + a * L_s * jet.Q_s + L_th * jet.Q_theta)
           - sv**2 * L * jet.Q_s - 3 * L)
    return rhs, L


def mean_curvature_null(m: float, s, theta, jet: NullGraphJet):
    """Mean curvature of v = -Q; returns (H, L).

    Raises SpacelikeError where L <= 0 (H is undefined there).
    """
    rhs, L = _null_rhs(m, s, theta, jet)
    if np.any(L <= 0):
        raise SpacelikeError("graph is not spacelike: min L = %g" % np.min(L))
    return -rhs / (3 * L**1.5), L


def cmc_residual(m: float, h0: float, s, theta, jet: NullGraphJet):
    """Residual F = 3 (h0 - H) L^{3/2} of the prescribed-curvature equation.

    Assembled as rhs + 3 h0 L^{3/2} so it stays a polynomial in the jet
    except for the single L^{3/2}; linear in the second-order entries.
    Returns (F, L); raises SpacelikeError where L <= 0.
    """
    rhs, L = _null_rhs(m, s, theta, jet)
    if np.any(L <= 0):
        raise SpacelikeError("graph is not spacelike: min L = %g" % np.min(L))
    return rhs + 3 * h0 * L**1.5, L


def mean_curvature_standard(m: float, r, theta, jet: StandardGraphJet):
    """Mean curvature of t = u(r, theta) from the divergence-form operator.

    3 H = h^{1/2} W^{-3} (A^{ij} u_{;ij} + B), W^2 = 1 - h |Du|^2,
    |Du|^2 = h u_r^2 + u_theta^2 / r^2.  Raises SpacelikeError if W^2 <= 0.
    """
    rv = np.asarray(r, dtype=float)
    th = np.asarray(theta, dtype=float)
    h = 1 - 2 * m / rv
    h_r = 2 * m / rv**2
    du2 = h * jet.u_r**2 + jet.u_theta**2 / rv**2
    W2 = 1 - h * du2
    if np.any(W2 <= 0):
        raise SpacelikeError("graph is not spacelike: min W^2 = %g" % np.min(W2))
    # covariant Hessian entries on the static slice
    u_c_rr = jet.u_rr + h_r / (2 * h) * jet.u_r
    u_c_rth = jet.u_rtheta - jet.u_theta / rv
    u_c_thth = jet.u_thetatheta + h * rv * jet.u_r
    trace = (h * jet.u_rr + 0.5 * h_r * jet.u_r + jet.u_thetatheta / rv**2
             + 2 * h * jet.u_r / rv + jet.u_theta / (np.tan(th) * rv**2))
    quad = ((h * jet.u_r) ** 2 * u_c_rr
            + 2 * (h * jet.u_r) * (jet.u_theta / rv**2) * u_c_rth
            + (jet.u_theta / rv**2) ** 2 * u_c_thth)
    B = (1 - 0.5 * h * du2) * jet.u_r * h_r
    return np.sqrt(h) * (W2 * trace + h * quad + B) / (3 * W2**1.5)


def standard_jet_from_null(m: float, s, jet: NullGraphJet):
    """Convert a null-chart jet to the standard chart; returns (r, jet).

    u = r_* - Q with r = 1/s; only derivatives convert here, so the u entry
    carries -Q and the caller adds r_*(r) when absolute height matters.
    """
    sv = np.asarray(s, dtype=float)
    rv = 1 / sv
    h = 1 - 2 * m * sv
    u_r = 1 / h + sv**2 * jet.Q_s
    u_rr = -(2 * m * sv**2) / h**2 - sv**2 * (2 * sv * jet.Q_s + sv**2 * jet.Q_ss)
    out = StandardGraphJet(
        u=-jet.Q,
        u_r=u_r,
        u_rr=u_rr,
        u_theta=-jet.Q_theta,
        u_thetatheta=-jet.Q_thetatheta,
        u_rtheta=sv**2 * jet.Q_stheta,
    )
    return rv, out


def tilt_factor_standard(m: float, r, u_r, u_theta):
    """Tilt of the graph normal against the static observer:

    nu = (1 - h |Du|^2)^{-1/2}; equals s^{-1} h^{-1/2} L^{-1/2} on a
    null-chart graph, so s * nu stays bounded toward s = 0.
    """
    rv = np.asarray(r, dtype=float)
    h = 1 - 2 * m / rv
    W2 = 1 - h * (h * np.asarray(u_r) ** 2 + np.asarray(u_theta) ** 2 / rv**2)
    if np.any(W2 <= 0):
        raise SpacelikeError("graph is not spacelike: min W^2 = %g" % np.min(W2))
    return 1 / np.sqrt(W2)


def quadratic_form_bounds(m: float, r, u_r, u_theta, a_r, a_theta):
    """Principal-symbol value with its ellipticity envelope.

    Returns (lower, value, upper) where value = A^{ij} a_i a_j,
    lower = (1 - h |Du|^2) |a|^2, upper = |a|^2, |a|^2 = h a_r^2 + a_th^2/r^2.
    Upper touches exactly when a is parallel to Du, lower when orthogonal.
    """
    rv = np.asarray(r, dtype=float)
    h = 1 - 2 * m / rv
    du2 = h * np.asarray(u_r) ** 2 + np.asarray(u_theta) ** 2 / rv**2
    a2 = h * np.asarray(a_r) ** 2 + np.asarray(a_theta) ** 2 / rv**2
    inner = h * u_r * a_r + u_theta * a_theta / rv**2
    value = (1 - h * du2) * a2 + h * inner**2
    return (1 - h * du2) * a2, value, a2


def leaf_pair_tilt(m: float, s, p_jet: NullGraphJet, q_jet: NullGraphJet):
    """Relative tilt of two spacelike graphs at the same (theta, s) points:

    nu = -(P_theta Q_theta + (1 + a P_s) Q_s + P_s) / sqrt(L_P L_Q),
    symmetric in the two jets, equal to 1 when they agree to first order,
    and >= 1 always (it is -g(T_P, T_Q) for the unit normals).
    """
    sv = np.asarray(s, dtype=float)
    a = sv**2 * (1 - 2 * m * sv)
    L_p, _, _ = spacelike_factor(m, sv, p_jet)
    L_q, _, _ = spacelike_factor(m, sv, q_jet)
    if np.any(L_p <= 0) or np.any(L_q <= 0):
        raise SpacelikeError("tilt undefined: a graph is not spacelike")
    num = (p_jet.Q_theta * q_jet.Q_theta
           + (1 + a * p_jet.Q_s) * q_jet.Q_s + p_jet.Q_s)
    return -num / np.sqrt(L_p * L_q)
