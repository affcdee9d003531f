"""Barrier graphs for the prescribed-curvature equation near s = 0.

A barrier is the model height plus a cubic bump, Q = P(., ., 1/h0) + beta s^3.
Its curvature expands as H = h0 + (beta h0^3 - 1/(8 h0)) s^2 + O(s^3), so a
positive (negative) beta of modest size pushes H strictly above (below) h0
on a thin enough slab.  select_barriers certifies that ordering on an
explicit grid and returns the pair; solutions with boundary data between
the barriers stay between them, giving the a priori enclosure
|Q - P| <= max(|beta|) s^3 used by the solver certificate.

The same family with bump beta s^(k+1) probes the linearized response of
the k-th s-derivative of H at s = 0; the first derivative in beta of that
response is a universal number (2 h0^3 at k = 2, zero at k = 3, -40 h0^3
at k = 4) and higher_order_obstruction estimates it by a Richardson-
extrapolated symmetric difference.  The vanishing at k = 3 is the reason
the cubic bump is the only usable rung of the ladder.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .curvature import NullGraphJet, mean_curvature_null
from .errors import NoBarrierError, SpacelikeError, UnstableEstimateError
from .foliation import FoliationParams, height_jet

__all__ = [
    "BarrierPair",
    "ObstructionEstimate",
    "barrier_jet",
    "barrier_margin",
    "select_barriers",
    "higher_order_obstruction",
]


def barrier_jet(params: FoliationParams, h0: float, theta, s, beta: float,
                power: int = 3) -> NullGraphJet:
    """Jet of the bumped model height Q = P(theta, s, 1/h0) + beta s^power."""
    sv = np.asarray(s, dtype=float)
    p = height_jet(params, theta, sv, 1.0 / h0)
    bump = beta * sv**power
    return NullGraphJet(
        Q=p.P + bump,
        Q_s=p.P_s + power * beta * sv ** (power - 1),
        Q_ss=p.P_ss + power * (power - 1) * beta * sv ** (power - 2),
        Q_theta=p.P_theta,
        Q_thetatheta=p.P_thetatheta,
        Q_stheta=p.P_stheta,
    )


def barrier_margin(params: FoliationParams, h0: float, beta: float,
                   s_values, power: int = 3) -> float:
    """min over the grid of sign(beta) * (H(Q_beta) - h0); > 0 certifies.

    Raises SpacelikeError if the bump destroys spacelikeness somewhere.
    """
    th = params.theta_grid()[:, None]
    sv = np.atleast_1d(np.asarray(s_values, dtype=float))[None, :]
    jet = barrier_jet(params, h0, th, sv, beta, power)
    H, _ = mean_curvature_null(params.m, sv, th, jet)
    return float(np.min(math.copysign(1.0, beta) * (H - h0)))


def _margin_grid(s_max: float, stage_s_values) -> np.ndarray:
    lo = max(1e-5, 1e-4 * s_max)
    if lo < s_max:
        tail = np.geomspace(lo, s_max, 160)
    else:
        tail = np.array([s_max])
    if stage_s_values is not None:
        tail = np.concatenate([tail, np.asarray(stage_s_values, dtype=float)])
    tail = tail[(tail > 0) & (tail <= s_max)]
    return np.unique(tail)


@dataclass(frozen=True)
class BarrierPair:
    """Validated barrier pair on (0, s_max]."""

    beta_lower: float
    beta_upper: float
    s_max: float
    margin_lower: float
    margin_upper: float
    halvings: int

    def enclosure_width(self, s) -> np.ndarray:
        """A priori width (beta_upper - beta_lower) s^3 of the sandwich."""
        return (self.beta_upper - self.beta_lower) * np.asarray(s, float) ** 3


def select_barriers(params: FoliationParams, h0: float, s_max: float, *,
                    stage_s_values=None, max_doublings: int = 20,
                    max_halvings: int = 10) -> BarrierPair:
    """Search beta in +/-{1, 2, 4, ...}, halving s_max when neither side works.

    A candidate must pass the exact leading-coefficient sign test
    sign(beta) (beta h0^3 - 1/(8 h0)) > 0 and then the grid margin check;
    grid rows that break spacelikeness disqualify the candidate.
    """
    tau1 = 1.0 / h0
    s_cur = float(s_max)
    for halving in range(max_halvings + 1):
        grid = _margin_grid(s_cur, stage_s_values)
        grid = grid[grid <= s_cur]
        found = {}
        for sign in (1.0, -1.0):
            for j in range(max_doublings):
                beta = sign * 2.0**j
                if sign * (beta / tau1**3 - tau1 / 8) <= 0:
                    continue
                try:
                    margin = barrier_margin(params, h0, beta, grid)
                except SpacelikeError:
                    break  # larger |beta| only makes L worse
                if margin > 0:
                    found[sign] = (beta, margin)
                    break
        if 1.0 in found and -1.0 in found:
            return BarrierPair(
                beta_lower=found[-1.0][0],
                beta_upper=found[1.0][0],
                s_max=s_cur,
                margin_lower=found[-1.0][1],
                margin_upper=found[1.0][1],
                halvings=halving,
            )
        s_cur *= 0.5
    raise NoBarrierError(
        f"no barrier pair found down to s_max = {s_cur * 2} "
        f"after {max_halvings} halvings"
    )


@dataclass(frozen=True)
class ObstructionEstimate:
    """Richardson estimate of d(d^k_s H)/dbeta at s = 0."""

    order: int
    value: float
    spread: float
    scale: float
    s_eval: float


def higher_order_obstruction(params: FoliationParams, h0: float, order: int, *,
                             s_eval: float | None = None,
                             beta_base: float = 1.0) -> ObstructionEstimate:
    """Estimate the universal response coefficient at the given order.

    Probes with bump beta s^(order+1), isolates the beta-odd part of H at
    s_eval and s_eval/2, rescales by order!/s^order, and Richardson-
    extrapolates the O(s) error away.  Runs at two beta bases; if the two
    extrapolations disagree by more than 20 percent of the natural scale
    (order+1)!/3 h0^(order+1), raises UnstableEstimateError.
    """
    k = order
    tau1 = 1.0 / h0
    if s_eval is None:
        s_eval = 0.01 * tau1
    th = params.theta_grid()

    def g_ratio(beta, sv):
        up = barrier_jet(params, h0, th, sv, beta, power=k + 1)
        dn = barrier_jet(params, h0, th, sv, -beta, power=k + 1)
        H_up, _ = mean_curvature_null(params.m, sv, th, up)
        H_dn, _ = mean_curvature_null(params.m, sv, th, dn)
        return float(np.mean(H_up - H_dn)) / (2 * beta)

    stars = []
    for beta in (beta_base, 2 * beta_base):
        G_full = math.factorial(k) * g_ratio(beta, s_eval) / s_eval**k
        G_half = math.factorial(k) * g_ratio(beta, s_eval / 2) / (s_eval / 2) ** k
        stars.append(2 * G_half - G_full)
    value = 0.5 * (stars[0] + stars[1])
    spread = abs(stars[0] - stars[1])
    scale = max(abs(stars[0]), abs(stars[1]),
                math.factorial(k + 1) / (3 * tau1 ** (k + 1)))
    if spread > 0.2 * scale:
        raise UnstableEstimateError(
            f"order-{k} response estimates disagree: {stars[0]:g} vs {stars[1]:g}"
        )
    return ObstructionEstimate(order=k, value=value, spread=spread,
                               scale=scale, s_eval=s_eval)
