"""Finite-difference calculus on the unit round sphere.

Functions live on a cell-centered latitude grid theta_j = (j + 1/2) pi / N,
which keeps every node strictly away from the poles.  Ghost nodes come from
reflection: across a pole an axisymmetric function is even, and in full
(theta, phi) mode the pole reflection shifts phi by pi (N_phi must be even).
All operators are second-order central differences.

The axisymmetric mode is the production path; full mode exists so the
operators can be cross-checked against phi-independent data.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import GridMismatchError
from .io_utils import fmt

__all__ = ["SphereFunction", "grad_norm_sq", "laplacian", "grad_inner", "theta_derivative"]

AXISYM = "axisymmetric"
FULL = "full"


@dataclass(frozen=True)
class SphereFunction:
    """Scalar sample on the cell-centered sphere grid.

    values has shape (N_theta,) in axisymmetric mode and (N_theta, N_phi)
    in full mode.
    """

    values: np.ndarray
    mode: str = AXISYM

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if self.mode == AXISYM:
            if v.ndim != 1:
                raise GridMismatchError("axisymmetric values must be 1-D")
        elif self.mode == FULL:
            if v.ndim != 2:
                raise GridMismatchError("full-mode values must be 2-D (theta, phi)")
            if v.shape[1] % 2:
                raise GridMismatchError("N_phi must be even for pole reflection")
        else:
            raise GridMismatchError(f"unknown mode {self.mode!r}")

    @property
    def n_theta(self) -> int:
        return self.values.shape[0]

    @property
    def theta(self) -> np.ndarray:
        n = self.n_theta
        return (np.arange(n) + 0.5) * np.pi / n

    @property
    def phi(self) -> np.ndarray:
        if self.mode != FULL:
            raise GridMismatchError("phi grid only exists in full mode")
        n = self.values.shape[1]
        return (np.arange(n) + 0.5) * 2 * np.pi / n

    @classmethod
    def from_profile(cls, profile, n_theta: int) -> "SphereFunction":
        """Sample an axisymmetric profile theta -> f(theta)."""
        th = (np.arange(n_theta) + 0.5) * np.pi / n_theta
        return cls(np.asarray(profile(th), dtype=float) * np.ones(n_theta), AXISYM)

    @classmethod
    def from_profile_full(cls, profile, n_theta: int, n_phi: int) -> "SphereFunction":
        th = (np.arange(n_theta) + 0.5) * np.pi / n_theta
        ph = (np.arange(n_phi) + 0.5) * 2 * np.pi / n_phi
        return cls(profile(th[:, None], ph[None, :]) * np.ones((n_theta, n_phi)), FULL)

    def to_axisymmetric(self) -> "SphereFunction":
        """Collapse a phi-independent full-mode sample to axisymmetric mode."""
        if self.mode == AXISYM:
            return self
        return SphereFunction(self.values.mean(axis=1), AXISYM)

    # -- serialization ---------------------------------------------------

    def to_csv(self, path) -> None:
        lines = []
        if self.mode == AXISYM:
            lines.append("theta,value")
            for t, v in zip(self.theta, self.values):
                lines.append(f"{fmt(t)},{fmt(v)}")
        else:
            lines.append("theta,phi,value")
            for i, t in enumerate(self.theta):
                for j, p in enumerate(self.phi):
                    lines.append(f"{fmt(t)},{fmt(p)},{fmt(self.values[i, j])}")
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path) -> "SphereFunction":
        lines = Path(path).read_text().strip().splitlines()
        header = lines[0].split(",")
        body = [line.split(",") for line in lines[1:]]
        if header == ["theta", "value"]:
            return cls(np.array([float(r[1]) for r in body]), AXISYM)
        if header == ["theta", "phi", "value"]:
            thetas = sorted({float(r[0]) for r in body})
            phis = sorted({float(r[1]) for r in body})
            vals = np.empty((len(thetas), len(phis)))
            ti = {t: i for i, t in enumerate(thetas)}
            pj = {p: j for j, p in enumerate(phis)}
            for r in body:
                vals[ti[float(r[0])], pj[float(r[1])]] = float(r[2])
            return cls(vals, FULL)
        raise GridMismatchError(f"unrecognized sphere CSV header {header}")

    def to_json(self) -> str:
        return json.dumps(
            {"mode": self.mode, "values": self.values.tolist()}, sort_keys=True
        )

    @classmethod
    def from_json(cls, text: str) -> "SphereFunction":
        obj = json.loads(text)
        return cls(np.asarray(obj["values"], dtype=float), obj["mode"])

    def integrate(self) -> float:
        """Midpoint-rule integral against the round measure sin(theta) dtheta dphi."""
        dth = np.pi / self.n_theta
        w = np.sin(self.theta) * dth
        if self.mode == AXISYM:
            return float(2 * np.pi * np.sum(w * self.values))
        dph = 2 * np.pi / self.values.shape[1]
        return float(np.sum(w[:, None] * self.values) * dph)


def _check_same_grid(a: SphereFunction, b: SphereFunction) -> None:
    if a.mode != b.mode or a.values.shape != b.values.shape:
        raise GridMismatchError(
            f"grid mismatch: {a.mode}{a.values.shape} vs {b.mode}{b.values.shape}"
        )


def _pad_theta(v: np.ndarray, mode: str) -> np.ndarray:
    """Add one reflection ghost row on each side of the theta axis."""
    if mode == AXISYM:
        return np.concatenate([v[:1], v, v[-1:]])
    half = v.shape[1] // 2
    top = np.roll(v[:1], half, axis=1)
    bot = np.roll(v[-1:], half, axis=1)
    return np.concatenate([top, v, bot], axis=0)


def _theta_d1_d2(f: SphereFunction) -> tuple[np.ndarray, np.ndarray]:
    dth = np.pi / f.n_theta
    p = _pad_theta(f.values, f.mode)
    if f.mode == AXISYM:
        d1 = (p[2:] - p[:-2]) / (2 * dth)
        d2 = (p[2:] - 2 * p[1:-1] + p[:-2]) / dth**2
    else:
        d1 = (p[2:, :] - p[:-2, :]) / (2 * dth)
        d2 = (p[2:, :] - 2 * p[1:-1, :] + p[:-2, :]) / dth**2
    return d1, d2


def _phi_d1_d2(f: SphereFunction) -> tuple[np.ndarray, np.ndarray]:
    dph = 2 * np.pi / f.values.shape[1]
    v = f.values
    d1 = (np.roll(v, -1, axis=1) - np.roll(v, 1, axis=1)) / (2 * dph)
    d2 = (np.roll(v, -1, axis=1) - 2 * v + np.roll(v, 1, axis=1)) / dph**2
    return d1, d2


def theta_derivative(f: SphereFunction) -> SphereFunction:
    """First latitude derivative (second-order central, reflection ghosts)."""
    d1, _ = _theta_d1_d2(f)
    return SphereFunction(d1, f.mode)


def grad_norm_sq(f: SphereFunction) -> SphereFunction:
    """Squared round-metric gradient norm.

    Axisymmetric: (f')^2.  Full: f_theta^2 + f_phi^2 / sin^2(theta).
    """
    d1, _ = _theta_d1_d2(f)
    if f.mode == AXISYM:
        return SphereFunction(d1**2, AXISYM)
    p1, _ = _phi_d1_d2(f)
    sin2 = np.sin(f.theta)[:, None] ** 2
    return SphereFunction(d1**2 + p1**2 / sin2, FULL)


def laplacian(f: SphereFunction) -> SphereFunction:
    """Round-sphere Laplacian, f'' + cot(theta) f' plus the phi block in full mode."""
    d1, d2 = _theta_d1_d2(f)
    cot = 1 / np.tan(f.theta)
    if f.mode == AXISYM:
        return SphereFunction(d2 + cot * d1, AXISYM)
    _, p2 = _phi_d1_d2(f)
    sin2 = np.sin(f.theta)[:, None] ** 2
    return SphereFunction(d2 + cot[:, None] * d1 + p2 / sin2, FULL)


def grad_inner(a: SphereFunction, b: SphereFunction) -> SphereFunction:
    """Round-metric inner product of two gradients."""
    _check_same_grid(a, b)
    da, _ = _theta_d1_d2(a)
    db, _ = _theta_d1_d2(b)
    if a.mode == AXISYM:
        return SphereFunction(da * db, AXISYM)
    pa, _ = _phi_d1_d2(a)
    pb, _ = _phi_d1_d2(b)
    sin2 = np.sin(a.theta)[:, None] ** 2
    return SphereFunction(da * db + pa * pb / sin2, FULL)
