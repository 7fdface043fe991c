"""Discrete Lebesgue, Sobolev and Sobolev-Slobodeckij diagnostics."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .fem import Field, FunctionSpace


class NormKind(str, Enum):
    LEBESGUE = "lebesgue"
    SOBOLEV = "sobolev"
    SLOBODECKIJ = "slobodeckij-seminorm"
    ANISOTROPIC = "anisotropic"


@dataclass(frozen=True)
class NormSpec:
    """Spatial index ``s``, integrability ``q``, temporal index ``r``."""

    kind: NormKind = NormKind.ANISOTROPIC
    s: float = 1.0
    q: float = 6.0
    r: float = 0.5

    def __post_init__(self):
        if not self.q > 1:
            raise ValueError(f"q must exceed 1, got {self.q}")
        if not 0 <= self.s <= 2:
            raise ValueError(f"s must lie in [0, 2], got {self.s}")
        if not 0 <= self.r <= 1:
            raise ValueError(f"r must lie in [0, 1], got {self.r}")
        if self.kind == NormKind.SLOBODECKIJ and not 0 < self.s < 1:
            raise ValueError("Slobodeckij seminorm needs 0 < s < 1")


@dataclass
class Trajectory:
    """Snapshots of one field on a uniform time grid."""

    space: FunctionSpace
    times: np.ndarray
    values: np.ndarray  # (N+1, ncomp * ndofs)
    ncomp: int = 1

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if len(self.times) < 2:
            raise ValueError("a trajectory needs at least two time nodes")
        if self.values.shape != (len(self.times), self.ncomp * self.space.ndofs):
            raise ValueError(f"snapshot array has shape {self.values.shape}")

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    def truncate(self, n: int) -> "Trajectory":
        return Trajectory(self.space, self.times[: n + 1], self.values[: n + 1], self.ncomp)

    def snapshot(self, k: int) -> Field:
        return Field(self.space, self.values[k], self.ncomp)

    def components(self):
        return [self]


# ------------------------------------------------------------ spatial

def pairwise_seminorm(values: np.ndarray, points: np.ndarray, weights: np.ndarray,
                      s: float, q: float, chunk: int = 2048) -> float:
    """Midpoint double sum ``sum_{i != j} |f_i - f_j|^q / |x_i - x_j|^(d + s q) w_i w_j``.

    ``values`` may carry trailing vector components; its q-th root is returned.
    """
    v = values.reshape(len(values), -1)
    d = points.shape[1]
    total = 0.0
    n = len(v)
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        diff = np.linalg.norm(v[lo:hi, None, :] - v[None, :, :], axis=2)
        dist = np.linalg.norm(points[lo:hi, None, :] - points[None, :, :], axis=2)
        idx = np.arange(lo, hi)
        dist[idx - lo, idx] = np.inf
        total += float((weights[lo:hi, None] * weights[None, :]
                        * diff ** q / dist ** (d + s * q)).sum())
    return total ** (1.0 / q)


def slobodeckij_seminorm(f: Field, s: float, q: float) -> float:
    """Sobolev-Slobodeckij seminorm of ``f`` by the cell-barycentre midpoint rule.

    Self-pairs are excluded from the double sum.
    """
    if not 0 < s < 1:
        raise ValueError(f"Slobodeckij index must satisfy 0 < s < 1, got {s}")
    if not q > 1:
        raise ValueError(f"q must exceed 1, got {q}")
    mesh = f.space.mesh
    cells = f.space.cells
    return pairwise_seminorm(f.at_barycenters(), mesh.barycenters()[cells],
                             mesh.cell_areas()[cells], s, q)


def _lq_power(space: FunctionSpace, vals: np.ndarray, q: float, trailing: int) -> np.ndarray:
    """``int |v|^q`` with ``trailing`` component axes after ``(nc, nq)``."""
    if trailing:
        axes = tuple(range(vals.ndim - trailing, vals.ndim))
        vals = np.sqrt((vals ** 2).sum(axis=axes))
    return (np.abs(vals) ** q * space.weights).sum(axis=(-2, -1))


def spatial_norm_power(space: FunctionSpace, coef: np.ndarray, ncomp: int,
                       s: float, q: float) -> np.ndarray:
    """``||f||_{W^s_q}^q`` for each leading snapshot of ``coef``.

    ``s = 0`` gives the Lebesgue norm, ``s = 1`` adds the gradient; fractional
    ``0 < s < 1`` adds the barycentric Slobodeckij seminorm.
    """
    coef = np.atleast_2d(coef)
    vec = int(ncomp > 1)
    out = _lq_power(space, space.eval(coef, ncomp), q, vec)
    if s == 0:
        return out
    if 0 < s < 1:
        sem = np.array([slobodeckij_seminorm(Field(space, c, ncomp), s, q) ** q
                        for c in coef])
        return out + sem
    if s == 1:
        return out + _lq_power(space, space.eval_grad(coef, ncomp), q, 1 + vec)
    raise ValueError(f"spatial index s={s} is not supported by the discrete surrogate")


# ------------------------------------------------------------ temporal

def trapezoid_weights(times: np.ndarray) -> np.ndarray:
    dt = np.diff(times)
    w = np.zeros(len(times))
    w[:-1] += 0.5 * dt
    w[1:] += 0.5 * dt
    return w


def temporal_seminorm(traj: Trajectory, r: float, q: float) -> float:
    """``W^r_q(0, T; L^q)`` seminorm of the trajectory by a trapezoidal double sum."""
    if not 0 < r < 1:
        raise ValueError(f"temporal index must satisfy 0 < r < 1, got {r}")
    vals = traj.space.eval(traj.values, traj.ncomp)
    t = traj.times
    w = trapezoid_weights(t)
    total = 0.0
    for i in range(len(t)):
        diff = vals - vals[i]
        p = _lq_power(traj.space, diff, q, int(traj.ncomp > 1))
        gap = np.abs(t - t[i])
        gap[i] = np.inf
        total += float((w[i] * w * p / gap ** (1 + r * q)).sum())
    return total ** (1.0 / q)


def trajectory_norm(w, spec: NormSpec) -> float:
    """Discrete norm of a trajectory or of every component of a state.

    For objects exposing ``components()`` (e.g. a Picard iterate) the maximum
    over components is returned.
    """
    comps = w.components()
    if not comps:
        raise ValueError("empty trajectory")
    return max(_single_norm(c, spec) for c in comps)


def _single_norm(traj: Trajectory, spec: NormSpec) -> float:
    if len(traj.times) == 0:
        raise ValueError("empty trajectory")
    w = trapezoid_weights(traj.times)
    if spec.kind == NormKind.LEBESGUE:
        p = spatial_norm_power(traj.space, traj.values, traj.ncomp, 0.0, spec.q)
        return float((w * p).sum() ** (1 / spec.q))
    if spec.kind == NormKind.SLOBODECKIJ:
        p = np.array([slobodeckij_seminorm(traj.snapshot(k), spec.s, spec.q) ** spec.q
                      for k in range(len(traj.times))])
        return float((w * p).sum() ** (1 / spec.q))
    p = spatial_norm_power(traj.space, traj.values, traj.ncomp, spec.s, spec.q)
    bochner = float((w * p).sum() ** (1 / spec.q))
    if spec.kind == NormKind.SOBOLEV:
        return bochner
    if spec.r == 0:
        return bochner
    return max(bochner, temporal_seminorm(traj, spec.r, spec.q))
