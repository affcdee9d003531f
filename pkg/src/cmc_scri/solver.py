"""Newton continuation solver for the prescribed-curvature graph equation.

The unknown is the height Q(theta, s) of the spacelike graph v = -Q over an
annulus s in [s_min, s_max], with Dirichlet data taken from the model height
P at both edges.  The discrete system applies the pointwise residual
F = 3 (h0 - H) L^{3/2} to second-order finite-difference jets on a tensor
grid (cell-centered in theta with reflection ghosts, node-centered in s).

The Jacobian is assembled by forward differences over a 9-coloring of the
grid: nodes with equal (theta index mod 3, s index mod 3) never share a
stencil box, so one perturbed residual evaluation per color yields every
matrix entry with unambiguous column attribution.  The matrix is banded
with bandwidth n_theta + 1 in the s-major ordering and is solved by
scipy.linalg.solve_banded.

Newton steps are damped by an Armijo backtracking line search on the sup
norm, and a trial iterate is rejected outright if it leaves the guarded
spacelike region min L >= guard.  Continuation proceeds over expanding
annuli s in [2^-k s_max, s_max]; each stage warm-starts from the previous
one and the run ends with an enclosure certificate: successive stages must
agree increasingly well on the fixed window [s_max/4, s_max/2], inside the
a priori barrier sandwich.
"""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .barriers import BarrierPair, barrier_margin, select_barriers
from .curvature import NullGraphJet, cmc_residual, spacelike_factor
from .errors import (
    ConfigError,
    GuardStarvationError,
    NewtonConvergenceError,
    SpacelikeError,
)
from .foliation import FoliationParams, height_jet
from .io_utils import worker_count

__all__ = [
    "AnnulusGrid",
    "SolverConfig",
    "StageResult",
    "Certificate",
    "SolveResult",
    "solve_stage",
    "solve_cmc_graph",
    "stage_fd_jets",
]


@dataclass(frozen=True)
class AnnulusGrid:
    """Tensor grid: n_s nodes uniform in [s_min, s_max], cell-centered theta."""

    s_min: float
    s_max: float
    n_s: int
    n_theta: int

    def __post_init__(self):
        if not (0 < self.s_min < self.s_max):
            raise ConfigError("need 0 < s_min < s_max")
        if self.n_s < 8 or self.n_theta < 4:
            raise ConfigError("grid too small")

    @property
    def s(self) -> np.ndarray:
        return np.linspace(self.s_min, self.s_max, self.n_s)

    @property
    def theta(self) -> np.ndarray:
        return (np.arange(self.n_theta) + 0.5) * np.pi / self.n_theta

    @property
    def ds(self) -> float:
        return (self.s_max - self.s_min) / (self.n_s - 1)

    @property
    def dtheta(self) -> float:
        return np.pi / self.n_theta


@dataclass(frozen=True)
class SolverConfig:
    """Knobs for one continuation run.

    guard_factor scales the spacelike floor: iterates must keep
    min L > guard_factor / h0^2.  boundary_offset shifts the Dirichlet
    data by a constant (time translation); it exists for the
    equivariance check and defaults to zero.
    """

    n_theta: int = 64
    n_s: int = 256
    n_stages: int = 4
    newton_tol: float = 1e-10
    max_newton: int = 50
    guard_factor: float = 1e-3
    armijo: float = 1e-4
    min_step: float = 2.0**-20
    boundary_offset: float = 0.0
    certificate_tol: float = 1e-6


def _fd_jets(grid: AnnulusGrid, Q: np.ndarray) -> NullGraphJet:
    """Second-order FD jets on the interior s-rows (reflection theta ghosts)."""
    ds, dth = grid.ds, grid.dtheta
    Qg = np.empty((Q.shape[0], Q.shape[1] + 2))
    Qg[:, 1:-1] = Q
    Qg[:, 0] = Q[:, 0]
    Qg[:, -1] = Q[:, -1]
    return NullGraphJet(
        Q=Q[1:-1, :],
        Q_s=(Q[2:, :] - Q[:-2, :]) / (2 * ds),
        Q_ss=(Q[2:, :] - 2 * Q[1:-1, :] + Q[:-2, :]) / ds**2,
        Q_theta=(Qg[1:-1, 2:] - Qg[1:-1, :-2]) / (2 * dth),
        Q_thetatheta=(Qg[1:-1, 2:] - 2 * Q[1:-1, :] + Qg[1:-1, :-2]) / dth**2,
        Q_stheta=(Qg[2:, 2:] - Qg[2:, :-2] - Qg[:-2, 2:] + Qg[:-2, :-2])
        / (4 * ds * dth),
    )


def stage_fd_jets(grid: AnnulusGrid, Q: np.ndarray):
    """(s_interior, theta, jet) triple for downstream diagnostics."""
    return grid.s[1:-1], grid.theta, _fd_jets(grid, Q)


class _Residual:
    """Discrete residual in deviation form, with Dirichlet rows.

    The unknown is W = Q - P.  Jets of the model P enter analytically and
    finite differences touch only the small deviation, which keeps the
    rounding floor of the residual several orders below the Newton
    tolerance even when the cut is O(1).
    """

    def __init__(self, params: FoliationParams, h0: float, grid: AnnulusGrid,
                 offset: float, guard_factor: float = SolverConfig.guard_factor):
        self.params = params
        self.h0 = h0
        self.grid = grid
        self.offset = offset
        tau1 = 1.0 / h0
        self.guard = guard_factor * tau1**2
        self.s_int = grid.s[1:-1, None]
        self.th_int = grid.theta[None, :]
        p = height_jet(params, self.th_int, self.s_int, tau1)
        self.pjet = p

    def model_height(self) -> np.ndarray:
        tau1 = 1.0 / self.h0
        return height_jet(
            self.params, self.grid.theta[None, :], self.grid.s[:, None], tau1
        ).P

    def full_jet(self, W: np.ndarray) -> NullGraphJet:
        d = _fd_jets(self.grid, W)
        p = self.pjet
        return NullGraphJet(
            Q=p.P + d.Q,
            Q_s=p.P_s + d.Q_s,
            Q_ss=p.P_ss + d.Q_ss,
            Q_theta=p.P_theta + d.Q_theta,
            Q_thetatheta=p.P_thetatheta + d.Q_thetatheta,
            Q_stheta=p.P_stheta + d.Q_stheta,
        )

    def __call__(self, W: np.ndarray):
        """Residual array (n_s, n_theta) or None if the iterate violates the guard."""
        if not np.all(np.isfinite(W)):
            return None, -np.inf
        jet = self.full_jet(W)
        L, _, _ = spacelike_factor(self.params.m, self.s_int, jet)
        mn = float(np.min(L))
        if mn <= self.guard:
            return None, mn
        F = np.empty_like(W)
        F[1:-1, :], _ = cmc_residual(self.params.m, self.h0, self.s_int,
                                     self.th_int, jet)
        F[0, :] = W[0, :] - self.offset
        F[-1, :] = W[-1, :] - self.offset
        return F, mn


def _banded_jacobian(res: _Residual, W: np.ndarray, F0: np.ndarray,
                     workers: int) -> np.ndarray:
    """Forward-difference Jacobian in solve_banded layout via 9-coloring."""
    ns, nt = W.shape
    n = ns * nt
    bw = nt + 1
    ab = np.zeros((2 * bw + 1, n))
    eps = np.sqrt(np.finfo(float).eps) * (1 + np.abs(W))
    kk, jj = np.meshgrid(np.arange(ns), np.arange(nt), indexing="ij")

    def one_color(color):
        cj, ck = color
        mask = (jj % 3 == cj) & (kk % 3 == ck)
        if not mask.any():
            return color, None
        Fp, _ = res(W + eps * mask)
        if Fp is None:
            raise SpacelikeError("guard violated during Jacobian assembly")
        return color, (Fp - F0)

    colors = [(cj, ck) for cj in range(3) for ck in range(3)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(one_color, colors))
    else:
        results = [one_color(c) for c in colors]

    idx = kk * nt + jj
    for (cj, ck), dF in results:
        if dF is None:
            continue
        mask = (jj % 3 == cj) & (kk % 3 == ck)
        for dk in (-1, 0, 1):
            for dj in (-1, 0, 1):
                # rows (k, j) whose stencil box contains the colored node
                # (k - dk, j - dj); exactly one color hit per row and shift
                k_lo, k_hi = max(0, dk), ns + min(0, dk)
                j_lo, j_hi = max(0, dj), nt + min(0, dj)
                sub_rows = (slice(k_lo, k_hi), slice(j_lo, j_hi))
                sub_cols = (slice(k_lo - dk, k_hi - dk),
                            slice(j_lo - dj, j_hi - dj))
                hit = mask[sub_cols]
                if not hit.any():
                    continue
                rows = idx[sub_rows][hit]
                cols = idx[sub_cols][hit]
                vals = dF[sub_rows][hit] / eps[sub_cols][hit]
                ab[bw + rows - cols, cols] += vals
    return ab


@dataclass
class StageResult:
    grid: AnnulusGrid
    Q: np.ndarray
    W: np.ndarray
    newton_iterations: int
    final_residual: float
    min_L: float
    elapsed: float
    residual_history: tuple = ()
    guard_activations: int = 0


def solve_stage(params: FoliationParams, h0: float, grid: AnnulusGrid,
                config: SolverConfig, W0: np.ndarray) -> StageResult:
    """Damped Newton on one annulus from the given initial deviation W = Q - P."""
    t0 = time.perf_counter()
    res = _Residual(params, h0, grid, config.boundary_offset, config.guard_factor)
    workers = worker_count(9)
    W = W0.copy()
    F, mnL = res(W)
    if F is None:
        raise GuardStarvationError(
            f"initial iterate violates the spacelike guard: min L = {mnL:g} "
            f"<= floor {res.guard:g}"
        )
    norm = float(np.max(np.abs(F)))
    history = [norm]
    guard_hits = 0
    bw = grid.n_theta + 1

    def finish(iters):
        return StageResult(grid, res.model_height() + W, W, iters, norm, mnL,
                           time.perf_counter() - t0, tuple(history), guard_hits)

    for it in range(config.max_newton):
        if norm < config.newton_tol:
            return finish(it)
        ab = _banded_jacobian(res, W, F, workers)
        step = solve_banded((bw, bw), ab, -F.ravel()).reshape(W.shape)
        lam = 1.0
        while True:
            trial = W + lam * step
            Ft, mnL_t = res(trial)
            if Ft is not None:
                norm_t = float(np.max(np.abs(Ft)))
                if norm_t <= (1 - config.armijo * lam) * norm:
                    W, F, norm, mnL = trial, Ft, norm_t, mnL_t
                    history.append(norm)
                    break
            else:
                guard_hits += 1
            lam *= 0.5
            if lam < config.min_step:
                raise GuardStarvationError(
                    f"line search exhausted at residual {norm:g} "
                    f"(min L on last trial {mnL_t:g})"
                )
    if norm < config.newton_tol:
        return finish(config.max_newton)
    raise NewtonConvergenceError(
        f"no convergence in {config.max_newton} iterations; residual {norm:g}"
    )


@dataclass(frozen=True)
class Certificate:
    """Stage-to-stage agreement on the fixed window [s_max/4, s_max/2]."""

    window: tuple
    gaps: tuple
    final_gap: float
    gaps_decreasing: bool
    barrier_width: float
    passed: bool


@dataclass
class SolveResult:
    params: FoliationParams
    h0: float
    s_max: float
    config: SolverConfig
    barriers: BarrierPair
    stages: list = field(default_factory=list)
    certificate: Certificate | None = None

    @property
    def final(self) -> StageResult:
        return self.stages[-1]

    def probe(self, s_values) -> np.ndarray:
        """Final solution interpolated per theta row; shape (n_theta, len(s))."""
        return _probe_stage(self.final, np.asarray(s_values, dtype=float))

    def sandwich_margins(self) -> list:
        """Per stage: (min(Q - Q_lower), min(Q_upper - Q)) over all nodes.

        Both must exceed -1e-8 for the enclosure claim; Q - Q_beta equals
        W - beta s^3 exactly, so the margins cost nothing to recompute.
        """
        out = []
        for st in self.stages:
            bump = st.grid.s[:, None] ** 3
            lo = float(np.min(st.W - self.barriers.beta_lower * bump))
            up = float(np.min(self.barriers.beta_upper * bump - st.W))
            out.append((lo, up))
        return out


def _probe_stage(stage: StageResult, s_values: np.ndarray) -> np.ndarray:
    out = np.empty((stage.grid.n_theta, s_values.size))
    for j in range(stage.grid.n_theta):
        out[j] = np.interp(s_values, stage.grid.s, stage.Q[:, j])
    return out


def solve_cmc_graph(params: FoliationParams, h0: float, *,
                    s_max: float | None = None,
                    config: SolverConfig = SolverConfig()) -> SolveResult:
    """Continuation solve over expanding annuli with enclosure certificate.

    s_max defaults to min(validated barrier slab, 1/(20 m)); the barrier
    pair is re-validated on the union of all stage s-grids before the first
    solve, so the sandwich argument applies at every node the solver sees.
    """
    pair0 = select_barriers(params, h0, params.s0)
    if s_max is None:
        s_max = min(pair0.s_max, 1.0 / (20 * params.m))
    elif s_max > pair0.s_max:
        raise ConfigError(
            f"requested s_max {s_max:g} exceeds the barrier-validated slab "
            f"{pair0.s_max:g}"
        )
    grids = [
        AnnulusGrid(s_max * 2.0 ** (-k), s_max, config.n_s, config.n_theta)
        for k in range(1, config.n_stages + 1)
    ]
    union = np.unique(np.concatenate([g.s for g in grids]))
    pair = select_barriers(params, h0, s_max, stage_s_values=union)
    # margins rechecked on the exact node set for the record
    m_lo = barrier_margin(params, h0, pair.beta_lower, union)
    m_up = barrier_margin(params, h0, pair.beta_upper, union)
    if m_lo <= 0 or m_up <= 0:
        raise SpacelikeError("barrier margins failed on the stage node union")

    result = SolveResult(params=params, h0=h0, s_max=s_max, config=config,
                         barriers=pair)
    prev: StageResult | None = None
    for grid in grids:
        if prev is None:
            W0 = np.full((grid.n_s, grid.n_theta), config.boundary_offset)
        else:
            W0 = np.empty((grid.n_s, grid.n_theta))
            for j in range(grid.n_theta):
                W0[:, j] = np.interp(grid.s, prev.grid.s, prev.W[:, j])
            fresh = grid.s < prev.grid.s_min
            W0[fresh, :] = config.boundary_offset
        stage = solve_stage(params, h0, grid, config, W0)
        result.stages.append(stage)
        prev = stage

    window = (s_max / 4, s_max / 2)
    probes = np.linspace(window[0], window[1], 33)
    # only stages whose annulus covers the window can be compared there
    covering = [st for st in result.stages
                if st.grid.s_min <= window[0] * (1 + 1e-12)]
    vals = [_probe_stage(st, probes) for st in covering]
    gaps = tuple(
        float(np.max(np.abs(vals[i + 1] - vals[i]))) for i in range(len(vals) - 1)
    )
    decreasing = all(gaps[i + 1] < gaps[i] for i in range(len(gaps) - 1))
    width = float(pair.enclosure_width(window[1]))
    final_gap = gaps[-1] if gaps else np.inf
    result.certificate = Certificate(
        window=window,
        gaps=gaps,
        final_gap=final_gap,
        gaps_decreasing=decreasing,
        barrier_width=width,
        passed=bool(gaps) and decreasing and final_gap < config.certificate_tol,
    )
    return result
