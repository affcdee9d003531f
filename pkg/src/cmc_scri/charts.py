"""Schwarzschild exterior charts and metric evaluation.

Two charts cover the exterior region r > 2m:

* the standard static chart (t, r, theta, phi), presented in Cartesian
  spatial coordinates x^i = r n^i with n the unit radial direction, where
  the metric is -h dt^2 + g_ij dx^i dx^j with h = 1 - 2m/r and
  g_ij = delta_ij + (h^{-1} - 1) n_i n_j;

* the retarded null chart (y^1, y^2, s, v) with s = 1/r the inverse radius
  and v = t - r_* the retarded time built from the tortoise coordinate
  r_* = r + 2m log(r/(2m) - 1).  In this chart the conformally rescaled
  (unphysical) metric is block diagonal: the unit round sphere on the
  angular block and [[0, 1], [1, -s^2 (1 - 2ms)]] on the (s, v) block.

The physical metric is s^{-2} times the unphysical one.  All routines work
pointwise and accept plain floats.

Conventions
-----------
Angular coordinates are spherical (theta, phi) with theta in (0, pi).
Coordinate order in all 4x4 matrices: null chart (theta, phi, s, v),
standard chart (t, x^1, x^2, x^3).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ChartDomainError

__all__ = [
    "MassParam",
    "StandardPoint",
    "NullPoint",
    "MetricAtPoint",
    "r_star",
    "r_from_rstar",
    "unphysical_metric",
    "standard_metric",
    "chart_convert",
]


@dataclass(frozen=True)
class MassParam:
    """Mass of the Schwarzschild exterior.

    Parameters
    ----------
    m : float
        Mass parameter; must be strictly positive.
    """

    m: float

    def __post_init__(self):
        if not (self.m > 0 and math.isfinite(self.m)):
            raise ChartDomainError(f"mass must be positive and finite, got {self.m}")


def _mass_value(m) -> float:
    return m.m if isinstance(m, MassParam) else float(m)


@dataclass(frozen=True)
class StandardPoint:
    """Event in the standard static chart (t, r, theta, phi)."""

    t: float
    r: float
    theta: float
    phi: float = 0.0

    def cartesian(self) -> np.ndarray:
        """Spatial position x^i = r n^i."""
        st, ct = math.sin(self.theta), math.cos(self.theta)
        return self.r * np.array([st * math.cos(self.phi), st * math.sin(self.phi), ct])


@dataclass(frozen=True)
class NullPoint:
    """Event in the retarded null chart (v, s, theta, phi), s = 1/r."""

    v: float
    s: float
    theta: float
    phi: float = 0.0


@dataclass(frozen=True)
class MetricAtPoint:
    """Metric components (and inverse) evaluated at one event.

    Attributes
    ----------
    components, inverse : (4, 4) ndarray
        Symmetric coordinate components g_ab and g^ab.
    chart : str
        "null" or "standard".
    coords : tuple of str
        Coordinate order of the rows/columns.
    """

    components: np.ndarray
    inverse: np.ndarray
    chart: str
    coords: tuple

    def signature_ok(self) -> bool:
        """True when the eigenvalues show Lorentzian signature (-, +, +, +)."""
        eig = np.linalg.eigvalsh(self.components)
        return int((eig < 0).sum()) == 1 and int((eig > 0).sum()) == 3


def _check_exterior_r(r: float, m: float) -> None:
    if not r > 2 * m:
        raise ChartDomainError(f"r = {r} is not in the exterior r > 2m = {2 * m}")


def r_star(r, m):
    """Tortoise coordinate r_* = r + 2m log(r/(2m) - 1).

    Parameters
    ----------
    r : float or array_like
        Area radius, r > 2m.
    m : float or MassParam

    Returns
    -------
    float or ndarray

    Notes
    -----
    dr_*/dr = 1/h with h = 1 - 2m/r, so r_* is strictly increasing and maps
    (2m, infinity) onto the whole real line.
    """
    mv = _mass_value(m)
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr <= 2 * mv):
        raise ChartDomainError(f"r must exceed 2m = {2 * mv}")
    out = r_arr + 2 * mv * np.log(r_arr / (2 * mv) - 1)
    return float(out) if np.isscalar(r) or out.ndim == 0 else out


def r_from_rstar(rstar, m, *, rel_tol: float = 1e-12, max_iter: int = 200):
    """Invert the tortoise coordinate.

    Solves r_*(r) = rstar for r > 2m by a bisection bracket followed by
    Newton polish in the variable x = log(r/(2m) - 1), where the residual
    2m (1 + e^x + x) - rstar is smooth, strictly increasing and convex.

    Parameters
    ----------
    rstar : float or array_like
    m : float or MassParam
    rel_tol : float
        Relative tolerance on r.
    max_iter : int
        Iteration cap; exceeding it raises ChartDomainError.

    Returns
    -------
    float or ndarray
    """
    mv = _mass_value(m)
    scalar = np.isscalar(rstar)
    vals = np.atleast_1d(np.asarray(rstar, dtype=float))
    out = np.empty_like(vals)
    for idx, target in enumerate(vals):
        out[idx] = _invert_rstar_scalar(target, mv, rel_tol, max_iter)
    return float(out[0]) if scalar else out.reshape(np.shape(rstar))


def _invert_rstar_scalar(target: float, m: float, rel_tol: float, max_iter: int) -> float:
    def g(x):
        return 2 * m * (1 + math.exp(x) + x) - target

    # bracket the root in x
    x_lo, x_hi = -1.0, 1.0
    it = 0
    while g(x_lo) > 0:
        x_lo = 2 * x_lo - 1
        it += 1
        if it > max_iter:
            raise ChartDomainError("tortoise inversion failed to bracket from below")
    while g(x_hi) < 0:
        x_hi = 2 * x_hi + 1
        it += 1
        if it > max_iter:
            raise ChartDomainError("tortoise inversion failed to bracket from above")
    x = 0.5 * (x_lo + x_hi)
    for it in range(max_iter):
        val = g(x)
        if val > 0:
            x_hi = x
        else:
            x_lo = x
        step = val / (2 * m * (math.exp(x) + 1))
        x_new = x - step
        if not (x_lo <= x_new <= x_hi):
            x_new = 0.5 * (x_lo + x_hi)
        r_old = 2 * m * (1 + math.exp(x))
        x = x_new
        r_new = 2 * m * (1 + math.exp(x))
        if abs(r_new - r_old) <= rel_tol * abs(r_new):
            return r_new
    raise ChartDomainError(f"tortoise inversion did not reach {rel_tol} in {max_iter} iterations")


def unphysical_metric(point: NullPoint, m) -> MetricAtPoint:
    """Conformally rescaled metric in the null chart at one event.

    Returns components in coordinate order (theta, phi, s, v):
    unit round sphere, plus the off-diagonal (s, v) block with
    g_sv = 1 and g_vv = -s^2 (1 - 2ms).

    Raises
    ------
    ChartDomainError
        If s is outside (0, 1/(2m)).
    """
    mv = _mass_value(m)
    s = point.s
    if not (0 < s < 1 / (2 * mv)):
        raise ChartDomainError(f"s = {s} outside (0, {1 / (2 * mv)})")
    a = s * s * (1 - 2 * mv * s)
    sin2 = math.sin(point.theta) ** 2
    comp = np.zeros((4, 4))
    comp[0, 0] = 1.0
    comp[1, 1] = sin2
    comp[2, 3] = comp[3, 2] = 1.0
    comp[3, 3] = -a
    inv = np.zeros((4, 4))
    inv[0, 0] = 1.0
    inv[1, 1] = 1.0 / sin2
    inv[2, 2] = a
    inv[2, 3] = inv[3, 2] = 1.0
    return MetricAtPoint(comp, inv, "null", ("theta", "phi", "s", "v"))


def standard_metric(point: StandardPoint, m) -> MetricAtPoint:
    """Static-chart metric at one event in Cartesian spatial coordinates.

    Components in order (t, x^1, x^2, x^3): g_tt = -h and
    g_ij = delta_ij + (1/h - 1) n_i n_j with n = x/r.
    """
    mv = _mass_value(m)
    _check_exterior_r(point.r, mv)
    h = 1 - 2 * mv / point.r
    n = point.cartesian() / point.r
    comp = np.zeros((4, 4))
    comp[0, 0] = -h
    comp[1:, 1:] = np.eye(3) + (1 / h - 1) * np.outer(n, n)
    inv = np.zeros((4, 4))
    inv[0, 0] = -1 / h
    inv[1:, 1:] = np.eye(3) + (h - 1) * np.outer(n, n)
    return MetricAtPoint(comp, inv, "standard", ("t", "x1", "x2", "x3"))


def chart_convert(point, m):
    """Map an event between the standard and null charts.

    StandardPoint(t, r, theta, phi) maps to NullPoint(t - r_*(r), 1/r, ...),
    and NullPoint(v, s, theta, phi) maps back with t = v + r_*(1/s).
    """
    mv = _mass_value(m)
    if isinstance(point, StandardPoint):
        _check_exterior_r(point.r, mv)
        return NullPoint(point.t - r_star(point.r, mv), 1 / point.r, point.theta, point.phi)
    if isinstance(point, NullPoint):
        if not (0 < point.s < 1 / (2 * mv)):
            raise ChartDomainError(f"s = {point.s} outside (0, {1 / (2 * mv)})")
        r = 1 / point.s
        return StandardPoint(point.v + r_star(r, mv), r, point.theta, point.phi)
    raise ChartDomainError(f"cannot convert object of type {type(point).__name__}")
