"""Closed-form manufactured Stokes flow in the fluid strip, for convergence studies.

The velocity derives from the stream function ``theta(t) P(y) sin(k x)`` with
``P(y) = y^2 (y + a)^2``, so it is divergence-free, periodic in ``x`` and
vanishes with its normal derivative's partner on the wall ``y = -a``.  The
pressure is ``theta(t) cos(k x) (y + 1)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fluid import StokesSolver
from .mesh import build_strip_mesh


@dataclass(frozen=True)
class StokesManufactured:
    depth: float = 0.5          # fluid height ``a``
    length: float = 1.0
    rho: float = 1.0
    nu: float = 1.0
    profile: str = "linear"     # ``linear`` (theta = t) or ``sine`` (theta = sin(omega t))
    omega: float = 1.0

    @property
    def k(self) -> float:
        return 2.0 * np.pi / self.length

    def theta(self, t):
        return t if self.profile == "linear" else np.sin(self.omega * t)

    def dtheta(self, t):
        return 1.0 if self.profile == "linear" else self.omega * np.cos(self.omega * t)

    def _P(self, y):
        a = self.depth
        return (y ** 2 * (y + a) ** 2, 2 * y * (y + a) * (2 * y + a),
                12 * y ** 2 + 12 * a * y + 2 * a ** 2, 24 * y + 12 * a)

    def velocity(self, x, y, t):
        P, P1, _, _ = self._P(y)
        th, k = self.theta(t), self.k
        return np.stack([th * P1 * np.sin(k * x), -th * k * P * np.cos(k * x)], axis=-1)

    def pressure(self, x, y, t):
        return self.theta(t) * np.cos(self.k * x) * (y + 1.0)

    def force(self, x, y, t):
        P, P1, P2, P3 = self._P(y)
        th, dth, k, nu = self.theta(t), self.dtheta(t), self.k, self.nu
        s, c = np.sin(k * x), np.cos(k * x)
        div_x = th * k * (y + 1.0) * s + nu * th * (P3 - k ** 2 * P1) * s
        div_y = -th * c + nu * th * k * (k ** 2 * P - P2) * c
        return np.stack([self.rho * dth * P1 * s - div_x,
                         -self.rho * dth * k * P * c - div_y], axis=-1)

    def traction(self, x, y, t):
        """``n . S`` on ``y = 0`` with ``n = (0, 1)``."""
        P, P1, P2, _ = self._P(y)
        th, k, nu = self.theta(t), self.k, self.nu
        sxy = nu * th * (P2 + k ** 2 * P) * np.sin(k * x)
        syy = -self.pressure(x, y, t) - 2 * nu * th * k * P1 * np.cos(k * x)
        return np.stack([sxy, syy], axis=-1)

    def march(self, n: int, dt: float, T: float) -> tuple[StokesSolver, np.ndarray]:
        """Implicit-Euler Taylor-Hood solution; returns the solver and final velocity."""
        nsteps = int(round(T / dt))
        if abs(nsteps * dt - T) > 1e-9 * T:
            raise ValueError(f"T={T} is not a multiple of dt={dt}")
        mesh = build_strip_mesh(self.length, self.depth, self.depth, n)
        sol = StokesSolver(mesh, self.rho, self.nu, dt)
        xq, r = sol.V.xq, sol.iface_rule.x

        def load(k):
            t = k * dt
            return (sol.body_load(self.force(xq[..., 0], xq[..., 1], t))
                    + sol.traction_load(self.traction(r[..., 0], r[..., 1], t)))

        u0 = sol.V.interpolate(lambda x, y: tuple(np.moveaxis(self.velocity(x, y, 0.0), -1, 0)), 2)
        res = sol.solve(u0, nsteps, load)
        return sol, res.velocity.values[-1]

    def solve_error(self, n: int, dt: float, T: float) -> float:
        """Velocity ``L^2`` error at ``T`` against the exact flow."""
        sol, u = self.march(n, dt, T)
        xq = sol.V.xq
        err = sol.V.eval(u, 2) - self.velocity(xq[..., 0], xq[..., 1], T)
        return float(np.sqrt(((err ** 2).sum(-1) * sol.V.weights).sum()))

    def temporal_errors(self, n: int, dts, T: float, refine: int = 8) -> list[float]:
        """Velocity ``L^2`` errors at ``T`` against a same-mesh run with step
        ``min(dts) / refine``, which removes the spatial error from the comparison."""
        sol, ref = self.march(n, min(dts) / refine, T)
        out = []
        for dt in dts:
            _, u = self.march(n, dt, T)
            e = sol.V.eval(u - ref, 2)
            out.append(float(np.sqrt(((e ** 2).sum(-1) * sol.V.weights).sum())))
        return out
