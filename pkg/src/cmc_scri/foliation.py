"""Prescribed-curvature model foliation of the asymptotic region.

Each leaf is the graph v = -P(y, s, tau) over the inverse radius s and the
sphere, with height function

    P = f + s * phi + (s^2 / 2) * psi,
    phi = -(tau^2 + |grad f|^2) / 2,
    psi = (tau^2 lap f + <grad |grad f|^2, grad f>) / 2,

where f is the cut in the *internal* sign convention and grad/lap are round
sphere operators.  The user-facing (theorem) convention describes the same
surfaces through u - r_* = f_out + phi_out / r + psi_out / (2 r^2); the two
are related by f = -f_out, and the leaf tau = 1/H0 matches a mean-curvature
H0 surface through quadratic order in s.

Spacelikeness is tracked through

    L = -(2 P_s + s^2 (1 - 2 m s) P_s^2 + |grad P|^2),

which tends to tau^2 on approach to the conformal boundary s -> 0.  The
future unit normal, lapse, orthonormal tangent frame, and second fundamental
form are assembled pointwise from the jet of P; everything here is algebraic
in that jet, so evaluation is exact for cuts with analytic derivatives.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DegenerateFrameError, SlabInversionError, SpacelikeError
from .sphere import (
    SphereFunction,
    grad_inner,
    grad_norm_sq,
    laplacian,
    theta_derivative,
)

__all__ = [
    "Cut",
    "ZeroCut",
    "CosCut",
    "Legendre2Cut",
    "TabulatedCut",
    "NegatedCut",
    "FoliationParams",
    "FoliationJet",
    "FrameGeometry",
    "expansion_coefficients",
    "height_jet",
    "invert_tau",
    "lapse_and_time_check",
    "foliation_geometry",
    "comparison_norm",
    "sweep_rows",
]

INTERNAL = "internal"
THEOREM = "theorem"


class Cut:
    """Axisymmetric cut with derivatives up to fourth order.

    Subclasses implement value(theta) and derivative(theta, order) for
    order in 1..4.  Derivatives must be exact for the built-in cuts; the
    tabulated cut falls back to repeated finite differences.
    """

    def value(self, theta):
        raise NotImplementedError

    def derivative(self, theta, order: int):
        raise NotImplementedError


class ZeroCut(Cut):
    def value(self, theta):
        return np.zeros_like(np.asarray(theta, dtype=float))

    def derivative(self, theta, order):
        return np.zeros_like(np.asarray(theta, dtype=float))


@dataclass(frozen=True)
class CosCut(Cut):
    """f(theta) = amplitude * cos(theta)."""

    amplitude: float

    def value(self, theta):
        return self.amplitude * np.cos(theta)

    def derivative(self, theta, order):
        cycle = [np.cos, lambda x: -np.sin(x), lambda x: -np.cos(x), np.sin]
        return self.amplitude * cycle[order % 4](np.asarray(theta, dtype=float))


@dataclass(frozen=True)
class Legendre2Cut(Cut):
    """f(theta) = amplitude * (3 cos^2(theta) - 1) / 2."""

    amplitude: float

    def value(self, theta):
        c = np.cos(theta)
        return self.amplitude * 0.5 * (3 * c * c - 1)

    def derivative(self, theta, order):
        th = np.asarray(theta, dtype=float)
        # f = a (3 cos 2th + 1) / 4, so derivatives cycle through sin/cos(2 th)
        pref = self.amplitude * 0.75 * 2**order
        cycle = [lambda x: -np.sin(2 * x), lambda x: -np.cos(2 * x),
                 lambda x: np.sin(2 * x), lambda x: np.cos(2 * x)]
        return pref * cycle[(order - 1) % 4](th)


class TabulatedCut(Cut):
    """Cut given by samples on the cell-centered grid; derivatives by FD chains.

    Each derivative order applies one second-order central difference, so
    order-k values carry an O(dtheta^2) error with growing constants.  Fine
    for boundary data, too coarse for small-s expansion-rate checks.
    """

    def __init__(self, samples: SphereFunction):
        self._f = samples.to_axisymmetric()
        fs = [self._f]
        for _ in range(4):
            fs.append(theta_derivative(fs[-1]))
        self._tables = fs

    def _interp(self, table: SphereFunction, theta, sign: float):
        th = np.asarray(theta, dtype=float)
        grid = table.theta
        # reflection padding (even/odd by derivative parity) keeps the
        # interpolation honest through the half-cell next to each pole
        ext_th = np.concatenate([[-grid[0]], grid, [np.pi + grid[0]]])
        ext_v = np.concatenate(
            [sign * table.values[:1], table.values, sign * table.values[-1:]]
        )
        out = np.interp(th, ext_th, ext_v)
        return float(out) if np.isscalar(theta) else out

    def value(self, theta):
        return self._interp(self._tables[0], theta, 1.0)

    def derivative(self, theta, order):
        return self._interp(self._tables[order], theta, (-1.0) ** order)


@dataclass(frozen=True)
class NegatedCut(Cut):
    """Sign-flipped view of another cut (theorem <-> internal convention)."""

    inner: Cut

    def value(self, theta):
        return -self.inner.value(theta)

    def derivative(self, theta, order):
        return -self.inner.derivative(theta, order)


@dataclass(frozen=True)
class FoliationParams:
    """Foliation data: mass, internal-convention cut, tau window, slab depth.

    Build with from_theorem_data when starting from the user-facing cut and
    target mean curvature H0; that constructor also auto-validates s0.
    """

    m: float
    cut: Cut
    tau_window: tuple
    s0: float
    convention: str = INTERNAL
    n_theta: int = 64

    @classmethod
    def from_theorem_data(cls, m: float, cut: Cut, h0: float, *,
                          n_theta: int = 64, s0: float | None = None,
                          tau_window: tuple | None = None) -> "FoliationParams":
        window = tau_window if tau_window is not None else (0.5 / h0, 2.0 / h0)
        params = cls(m=m, cut=NegatedCut(cut), tau_window=window,
                     s0=s0 if s0 is not None else 1 / (4 * m), n_theta=n_theta)
        if s0 is None:
            params = replace(params, s0=validate_s0(params).s0)
        return params

    @property
    def tau_center(self) -> float:
        return math.sqrt(self.tau_window[0] * self.tau_window[1])

    def theta_grid(self) -> np.ndarray:
        return (np.arange(self.n_theta) + 0.5) * np.pi / self.n_theta


@dataclass(frozen=True)
class FoliationJet:
    """Pointwise jet of the height function and spacelikeness factor."""

    P: np.ndarray
    P_tau: np.ndarray
    P_s: np.ndarray
    P_ss: np.ndarray
    P_theta: np.ndarray
    P_thetatheta: np.ndarray
    P_stheta: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    L: np.ndarray
    L_s: np.ndarray
    L_theta: np.ndarray


def expansion_coefficients(f: SphereFunction, tau: float,
                           convention: str = INTERNAL) -> tuple[SphereFunction, SphereFunction]:
    """Height expansion coefficients from a gridded cut.

    Internal convention: phi = -(tau^2 + |grad f|^2)/2,
    psi = (tau^2 lap f + <grad |grad f|^2, grad f>)/2.
    Theorem convention flips the sign of phi only (psi keeps the same
    formula applied to the outward cut).
    """
    g = grad_norm_sq(f)
    lap = laplacian(f)
    w = grad_inner(g, f)
    phi = 0.5 * (tau**2 + g.values)
    psi = SphereFunction(0.5 * (tau**2 * lap.values + w.values), f.mode)
    if convention == INTERNAL:
        return SphereFunction(-phi, f.mode), psi
    if convention == THEOREM:
        return SphereFunction(phi, f.mode), psi
    raise ValueError(f"unknown convention {convention!r}")


def _cut_jets(cut: Cut, theta):
    th = np.asarray(theta, dtype=float)
    f = cut.value(th)
    d = [cut.derivative(th, k) for k in (1, 2, 3, 4)]
    return f, d[0], d[1], d[2], d[3]


def height_jet(params: FoliationParams, theta, s, tau) -> FoliationJet:
    """Evaluate the height jet at broadcastable (theta, s, tau) arrays."""
    th = np.asarray(theta, dtype=float)
    sv = np.asarray(s, dtype=float)
    tv = np.asarray(tau, dtype=float)
    f0, f1, f2, f3, f4 = _cut_jets(params.cut, th)
    sin = np.sin(th)
    cot = np.cos(th) / sin
    g = f1 * f1
    lam = f2 + cot * f1
    lam1 = f3 + cot * f2 - f1 / sin**2
    lam2 = f4 + cot * f3 - 2 * f2 / sin**2 + 2 * f1 * np.cos(th) / sin**3

    tau2 = tv * tv
    phi = -0.5 * (tau2 + g)
    psi = 0.5 * (tau2 * lam) + f1 * f1 * f2
    phi1 = -f1 * f2
    phi2 = -(f2 * f2 + f1 * f3)
    psi1 = 0.5 * tau2 * lam1 + 2 * f1 * f2 * f2 + f1 * f1 * f3
    psi2 = 0.5 * tau2 * lam2 + 2 * f2**3 + 6 * f1 * f2 * f3 + f1 * f1 * f4

    P = f0 + sv * phi + 0.5 * sv**2 * psi
    P_s = phi + sv * psi
    P_ss = psi * np.ones_like(P)
    P_tau = -tv * sv * (1 - 0.5 * sv * lam)
    P_th = f1 + sv * phi1 + 0.5 * sv**2 * psi1
    P_thth = f2 + sv * phi2 + 0.5 * sv**2 * psi2
    P_sth = phi1 + sv * psi1

    a = sv**2 * (1 - 2 * params.m * sv)
    a_s = 2 * sv - 6 * params.m * sv**2
    L = -(2 * P_s + a * P_s**2 + P_th**2)
    L_s = -(2 * P_ss + a_s * P_s**2 + 2 * a * P_s * P_ss + 2 * P_th * P_sth)
    L_th = -(2 * P_sth + 2 * a * P_s * P_sth + 2 * P_th * P_thth)
    return FoliationJet(P, P_tau, P_s, P_ss, P_th, P_thth, P_sth,
                        phi * np.ones_like(P), psi * np.ones_like(P), L, L_s, L_th)


def invert_tau(params: FoliationParams, theta, s, v, *, tol: float = 1e-12,
               max_iter: int = 60):
    """Find the leaf through the event (theta, s, v).

    v + P(theta, s, tau) is strictly decreasing in tau (P_tau < 0 on a
    validated slab), so the root is unique; Newton with bisection fallback.

    Raises SlabInversionError when the event is outside the tau window.
    """
    th, sv, vv = np.broadcast_arrays(
        np.asarray(theta, float), np.asarray(s, float), np.asarray(v, float)
    )
    t1, t2 = params.tau_window
    pad = 1e-9 * (t2 - t1)

    def resid(tau):
        return vv + height_jet(params, th, sv, tau).P

    r1, r2 = resid(np.full_like(vv, t1)), resid(np.full_like(vv, t2))
    if np.any(r1 < -tol) or np.any(r2 > tol):
        bad = int(np.sum((r1 < -tol) | (r2 > tol)))
        raise SlabInversionError(
            f"{bad} event(s) outside the foliated slab tau in [{t1}, {t2}]"
        )
    lo = np.full_like(vv, t1)
    hi = np.full_like(vv, t2)
    tau = np.full_like(vv, params.tau_center)
    for _ in range(max_iter):
        jet = height_jet(params, th, sv, tau)
        r = vv + jet.P
        if np.all(np.abs(r) < tol):
            break
        hi = np.where(r < 0, tau, hi)
        lo = np.where(r >= 0, tau, lo)
        step = r / jet.P_tau
        nxt = tau - step
        outside = (nxt <= lo) | (nxt >= hi)
        tau = np.where(outside, 0.5 * (lo + hi), nxt)
    else:
        raise SlabInversionError("tau inversion did not converge")
    tau = np.clip(tau, t1 - pad, t2 + pad)
    return float(tau) if np.isscalar(v) and np.ndim(tau) == 0 else tau


def lapse_and_time_check(params: FoliationParams, theta, s, tau):
    """Lapse alpha = -P_tau / (s sqrt(L)) and the pairing g(grad tau, d_t) = -1/P_tau.

    The pairing must be positive (tau increases toward the future along the
    static Killing direction); raises SpacelikeError when L <= 0.
    """
    jet = height_jet(params, theta, s, tau)
    if np.any(jet.L <= 0):
        raise SpacelikeError("L <= 0; leaf is not spacelike at requested points")
    sv = np.asarray(s, dtype=float)
    alpha = -jet.P_tau / (sv * np.sqrt(jet.L))
    pairing = -1.0 / jet.P_tau
    return alpha, pairing


@dataclass(frozen=True)
class FrameGeometry:
    """Orthonormal-frame output of the pointwise geometry assembly.

    K is the physical second fundamental form in the orthonormal tangent
    frame (w_1, w_2, w_3); H its trace over 3.  R maps coordinate frame
    vectors (e_1, e_2, e_3) to the orthonormal frame, lower triangular.
    """

    K: np.ndarray
    H: np.ndarray
    alpha: np.ndarray
    gram: np.ndarray
    R: np.ndarray
    jet: FoliationJet


def _gram_and_frame(jet: FoliationJet, theta, s, m):
    th = np.asarray(theta, dtype=float)
    sv = np.asarray(s, dtype=float)
    a = sv**2 * (1 - 2 * m * sv)
    shape = np.broadcast_shapes(th.shape, sv.shape, jet.P_s.shape)
    G = np.zeros(shape + (3, 3))
    P_s = np.broadcast_to(jet.P_s, shape)
    P_th = np.broadcast_to(jet.P_theta, shape)
    ab = np.broadcast_to(a, shape)
    sin2 = np.broadcast_to(np.sin(th) ** 2, shape)
    G[..., 0, 0] = 1 - ab * P_th**2
    G[..., 1, 1] = sin2
    G[..., 0, 2] = G[..., 2, 0] = -P_th * (1 + ab * P_s)
    G[..., 2, 2] = -2 * P_s - ab * P_s**2
    try:
        chol = np.linalg.cholesky(G)
    except np.linalg.LinAlgError as exc:
        raise DegenerateFrameError(f"tangent Gram matrix not positive definite: {exc}")
    diag = np.diagonal(chol, axis1=-2, axis2=-1)
    if np.any(diag < 1e-10):
        raise DegenerateFrameError("Gram pivot below 1e-10")
    R = np.linalg.inv(chol)
    return G, R


def foliation_geometry(params: FoliationParams, theta, s, tau) -> FrameGeometry:
    """Second fundamental form, mean curvature, and lapse on one leaf.

    Assembles the coordinate-frame second fundamental form of the
    conformally rescaled metric from the height jet and the exact
    connection coefficients of the null chart, orthonormalizes in order
    (angular, angular, radial), and applies the conformal correction to
    land on the physical K(w_i, w_j).
    """
    m = params.m
    th = np.asarray(theta, dtype=float)
    sv = np.asarray(s, dtype=float)
    jet = height_jet(params, th, sv, tau)
    if np.any(jet.L <= 0):
        raise SpacelikeError("L <= 0; leaf is not spacelike at requested points")
    G, R = _gram_and_frame(jet, th, sv, m)
    shape = G.shape[:-2]

    a = np.broadcast_to(sv**2 * (1 - 2 * m * sv), shape)
    svb = np.broadcast_to(sv, shape)
    thb = np.broadcast_to(th, shape)
    P_s = np.broadcast_to(jet.P_s, shape)
    P_th = np.broadcast_to(jet.P_theta, shape)
    P_tau = np.broadcast_to(jet.P_tau, shape)
    L = np.broadcast_to(jet.L, shape)
    alpha = -P_tau / (svb * np.sqrt(L))
    mu = svb * alpha / P_tau  # = -1/sqrt(L), future orientation

    gam_s_vv = svb**3 * (1 - 5 * m * svb + 6 * m**2 * svb**2)
    gam_v_vv = svb * (1 - 3 * m * svb)
    radial = svb * (1 - 3 * m * svb)

    Pvec = np.stack([P_th, np.zeros(shape), P_s], axis=-1)
    hess = np.zeros(shape + (3, 3))
    hess[..., 0, 0] = np.broadcast_to(jet.P_thetatheta, shape)
    hess[..., 0, 2] = hess[..., 2, 0] = np.broadcast_to(jet.P_stheta, shape)
    hess[..., 2, 2] = np.broadcast_to(jet.P_ss, shape)

    Kbar = np.zeros(shape + (3, 3))
    for i in range(3):
        for j in range(3):
            Xs = (
                (1 if i == 2 else 0) * Pvec[..., j] + (1 if j == 2 else 0) * Pvec[..., i]
            ) * radial + Pvec[..., i] * Pvec[..., j] * gam_s_vv
            Xv = -hess[..., i, j] + Pvec[..., i] * Pvec[..., j] * gam_v_vv
            ang = np.zeros(shape)
            if i == 1 and j == 1:
                # round-sphere connection term Gamma^theta_{phi phi} P_theta
                ang = -np.sin(thb) * np.cos(thb) * P_th
            Kbar[..., i, j] = -mu * (ang + Xs * P_s + Xv)

    Kframe = np.einsum("...ik,...kl,...jl->...ij", R, Kbar, R)
    corr = -alpha / P_tau * (1 + a * P_s)
    K = svb[..., None, None] * (Kframe + corr[..., None, None] * np.eye(3))
    H = np.trace(K, axis1=-2, axis2=-1) / 3
    return FrameGeometry(K=K, H=H, alpha=alpha, gram=G, R=R, jet=jet)


def time_normal_components(params: FoliationParams, theta, s, tau):
    """Coordinate components of T = -alpha grad(tau) in (theta, phi, s, v) order."""
    jet = height_jet(params, theta, s, tau)
    sv = np.asarray(s, dtype=float)
    a = sv**2 * (1 - 2 * params.m * sv)
    alpha = -jet.P_tau / (sv * np.sqrt(jet.L))
    pref = alpha * sv**2 / jet.P_tau
    T_th = pref * jet.P_theta
    T_ph = np.zeros_like(T_th)
    T_s = pref * (1 + a * jet.P_s)
    T_v = pref * jet.P_s
    return np.stack(np.broadcast_arrays(T_th, T_ph, T_s, T_v), axis=-1)


def comparison_norm(params: FoliationParams, theta, s, tau, vector) -> np.ndarray:
    """Riemannian comparison norm built from the frame and the time normal.

    ||V||^2 = sum_i g(V, w_i)^2 + g(V, T)^2 for a coordinate 4-vector V in
    (theta, phi, s, v) order.  Reduces to the physical norm for tangent V
    and weighs the normal part positively, so it dominates |g(V, W)| bounds.
    """
    th = np.asarray(theta, dtype=float)
    sv = np.asarray(s, dtype=float)
    V = np.asarray(vector, dtype=float)
    jet = height_jet(params, th, sv, tau)
    G, R = _gram_and_frame(jet, th, sv, params.m)
    shape = G.shape[:-2]
    a = np.broadcast_to(sv**2 * (1 - 2 * params.m * sv), shape)
    P_s = np.broadcast_to(jet.P_s, shape)
    P_th = np.broadcast_to(jet.P_theta, shape)
    P_tau = np.broadcast_to(jet.P_tau, shape)
    L = np.broadcast_to(jet.L, shape)
    svb = np.broadcast_to(sv, shape)
    alpha = -P_tau / (svb * np.sqrt(L))

    Vth, Vph, Vs, Vv = (V[..., k] for k in range(4))
    gb_v = Vs - a * Vv  # gbar(V, d_v)
    e_contr = np.stack(
        [
            Vth - P_th * gb_v,
            np.broadcast_to(np.sin(th) ** 2, shape) * Vph,
            Vv - P_s * gb_v,
        ],
        axis=-1,
    )
    g_w = np.einsum("...ik,...k->...i", R, e_contr) / svb[..., None]
    g_T = alpha / P_tau * (Vth * P_th + Vs * P_s + Vv)
    return np.sqrt(np.sum(g_w**2, axis=-1) + g_T**2)


@dataclass(frozen=True)
class SlabReport:
    """Outcome of the slab validation sweep."""

    s0: float
    ok: bool
    min_L: float
    max_P_tau: float
    threshold: float
    halvings: int
    failures: list


def validate_s0(params: FoliationParams, *, n_s: int = 48, n_tau: int = 9,
                max_halvings: int = 30) -> SlabReport:
    """Shrink s0 by halving until the slab sweep passes.

    Acceptance: min L >= tau_1^2 / 2 and P_tau < 0 over the tau window,
    the theta grid, and a log-spaced s sample of (0, s0].  The choice of
    threshold is recorded in the report for downstream manifests.
    """
    t1, t2 = params.tau_window
    threshold = 0.5 * t1 * t1
    th = params.theta_grid()
    taus = np.linspace(t1, t2, n_tau)
    s0 = params.s0
    for halving in range(max_halvings + 1):
        ss = np.geomspace(max(1e-6, s0 * 1e-4), s0, n_s)
        grid_th = th[:, None, None]
        grid_s = ss[None, :, None]
        grid_tau = taus[None, None, :]
        jet = height_jet(params, grid_th, grid_s, grid_tau)
        min_L = float(np.min(jet.L))
        max_ptau = float(np.max(jet.P_tau))
        if min_L >= threshold and max_ptau < 0:
            return SlabReport(s0=s0, ok=True, min_L=min_L, max_P_tau=max_ptau,
                              threshold=threshold, halvings=halving, failures=[])
        s0 *= 0.5
    return SlabReport(s0=s0, ok=False, min_L=min_L, max_P_tau=max_ptau,
                      threshold=threshold, halvings=max_halvings, failures=[])


def slab_failures(params: FoliationParams, *, n_s: int = 32, n_tau: int = 5) -> list:
    """Locations (theta, s, tau, L, P_tau) violating the slab criteria at s0."""
    t1, t2 = params.tau_window
    threshold = 0.5 * t1 * t1
    th = params.theta_grid()
    taus = np.linspace(t1, t2, n_tau)
    ss = np.geomspace(max(1e-6, params.s0 * 1e-3), params.s0, n_s)
    out = []
    jet = height_jet(params, th[:, None, None], ss[None, :, None], taus[None, None, :])
    bad = (jet.L < threshold) | (jet.P_tau >= 0)
    for i, j, k in zip(*np.nonzero(bad)):
        out.append(
            {
                "theta": float(th[i]),
                "s": float(ss[j]),
                "tau": float(taus[k]),
                "L": float(jet.L[i, j, k]),
                "P_tau": float(jet.P_tau[i, j, k]),
            }
        )
    return out


def sweep_rows(params: FoliationParams, thetas, ss, taus):
    """Rows (theta, s, tau, L, alpha, H, K11, K22, K33) for the sweep CSV."""
    rows = []
    for tau in np.atleast_1d(taus):
        geo = foliation_geometry(
            params, np.asarray(thetas)[:, None], np.asarray(ss)[None, :], float(tau)
        )
        for i, th in enumerate(np.atleast_1d(thetas)):
            for j, sv in enumerate(np.atleast_1d(ss)):
                rows.append(
                    (
                        th,
                        sv,
                        tau,
                        geo.jet.L[i, j],
                        geo.alpha[i, j],
                        geo.H[i, j],
                        geo.K[i, j, 0, 0],
                        geo.K[i, j, 1, 1],
                        geo.K[i, j, 2, 2],
                    )
                )
    return rows
