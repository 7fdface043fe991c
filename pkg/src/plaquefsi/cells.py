"""Two-domain concentration transport and the foam-cell/growth ODEs.

The concentration is stored as two P2 fields, one per subdomain, whose
interface nodes coincide geometrically but carry independent values so that a
jump ``[[c]] = c_s - c_f`` can develop.  The interface law
``D grad c . n = zeta [[c]]`` (``n`` from fluid to solid) is either lagged
into the right-hand side or treated implicitly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fem import (FunctionSpace, assemble_mass, assemble_stiffness, facet_mass, facet_rule,
                  load_flux, load_scalar, match_rule, node_map)
from .kinematics import GROWTH_FLOOR, InvalidDeformation
from .mesh import FacetTag, Mesh, Subdomain
from .norms import Trajectory


@dataclass(frozen=True)
class TransmissionParams:
    D_f: float = 1.0
    D_s: float = 0.5
    zeta: float = 1.0
    beta: float = 0.1
    gamma: float = 0.1
    rho_s: float = 1.0

    def __post_init__(self):
        for name in ("D_f", "D_s", "rho_s"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("zeta", "beta", "gamma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


class TransmissionSolver:
    """Implicit-Euler diffusion on both sides coupled through the interface."""

    def __init__(self, mesh: Mesh, params: TransmissionParams, dt: float,
                 implicit_transmission: bool = False):
        if dt <= 0:
            raise ValueError("time step must be positive")
        self.mesh, self.params, self.dt = mesh, params, dt
        self.implicit = implicit_transmission
        self.Vf = FunctionSpace(mesh, 2, Subdomain.FLUID)
        self.Vs = FunctionSpace(mesh, 2, Subdomain.SOLID)
        self.nf, self.ns = self.Vf.ndofs, self.Vs.ndofs
        self.Mf = assemble_mass(self.Vf).tocsr()
        self.Ms = assemble_mass(self.Vs).tocsr()
        self.M = sp.block_diag([self.Mf, self.Ms], format="csr")
        self.K = sp.block_diag([params.D_f * assemble_stiffness(self.Vf),
                                params.D_s * assemble_stiffness(self.Vs)], format="csr")
        self.rule_f = facet_rule(self.Vf, FacetTag.INTERFACE)
        self.rule_s = match_rule(self.Vs, self.rule_f)
        self.outer_rule = facet_rule(self.Vs, FacetTag.OUTER)
        self.iface_f = self.Vf.boundary_dofs(FacetTag.INTERFACE)
        self.iface_s = node_map(self.Vf, self.Vs, self.iface_f)
        # jump form: int [[c]] [[psi]] with [[.]] = solid - fluid
        ff = facet_mass(self.Vf, self.rule_f, self.Vf, self.rule_f)
        fs = facet_mass(self.Vf, self.rule_f, self.Vs, self.rule_s)
        ss = facet_mass(self.Vs, self.rule_s, self.Vs, self.rule_s)
        self.Jump = sp.bmat([[ff, -fs], [-fs.T, ss]], format="csr")
        S = self.M / dt + self.K
        if self.implicit:
            S = S + params.zeta * self.Jump
        self._lu = spla.splu(S.tocsc())

    # -------------------------------------------------------- layout
    def split(self, c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return c[..., : self.nf], c[..., self.nf:]

    def join(self, cf: np.ndarray, cs: np.ndarray) -> np.ndarray:
        return np.concatenate([cf, cs], axis=-1)

    def interpolate(self, fn_f, fn_s) -> np.ndarray:
        return self.join(self.Vf.interpolate(fn_f), self.Vs.interpolate(fn_s))

    def jump(self, c: np.ndarray) -> np.ndarray:
        """Nodal interface jump ``c_s - c_f`` ordered like ``iface_f``."""
        cf, cs = self.split(c)
        return cs[..., self.iface_s] - cf[..., self.iface_f]

    def masses(self, c: np.ndarray) -> tuple[float, float]:
        cf, cs = self.split(c)
        return float(np.asarray(self.Mf.sum(axis=0)).ravel() @ cf), \
            float(np.asarray(self.Ms.sum(axis=0)).ravel() @ cs)

    # -------------------------------------------------------- loads
    def transmission_load(self, c: np.ndarray) -> np.ndarray:
        """Lagged interface exchange: fluid gains ``+zeta [[c]]``, solid loses it."""
        return -self.params.zeta * (self.Jump @ c)

    def flux_load(self, flux_f_q: np.ndarray | None, flux_s_q: np.ndarray | None) -> np.ndarray:
        """``-int F . grad psi`` on each side for quadrature-point vector fields."""
        lf = np.zeros(self.nf) if flux_f_q is None else -load_flux(self.Vf, flux_f_q)
        ls = np.zeros(self.ns) if flux_s_q is None else -load_flux(self.Vs, flux_s_q)
        return self.join(lf, ls)

    def source_load(self, src_f_q: np.ndarray | None, src_s_q: np.ndarray | None) -> np.ndarray:
        lf = np.zeros(self.nf) if src_f_q is None else load_scalar(self.Vf, src_f_q)
        ls = np.zeros(self.ns) if src_s_q is None else load_scalar(self.Vs, src_s_q)
        return self.join(lf, ls)

    # -------------------------------------------------------- stepping
    def step(self, prev: np.ndarray, load: np.ndarray) -> np.ndarray:
        if not np.all(np.isfinite(load)):
            raise ValueError("non-finite concentration source data")
        return self._lu.solve(self.M @ prev / self.dt + load)

    def solve(self, c0: np.ndarray, nsteps: int,
              load: Callable[[int, np.ndarray], np.ndarray] | None = None
              ) -> tuple[Trajectory, Trajectory]:
        """March ``nsteps``; ``load(k, c_k)`` returns data for step ``k + 1``.

        Without a load callback the lagged transmission term is added
        automatically (unless the transmission is implicit).
        """
        C = np.zeros((nsteps + 1, self.nf + self.ns))
        C[0] = c0
        for k in range(nsteps):
            if load is not None:
                f = load(k, C[k])
            elif self.implicit:
                f = np.zeros(self.nf + self.ns)
            else:
                f = self.transmission_load(C[k])
            C[k + 1] = self.step(C[k], f)
        t = self.dt * np.arange(nsteps + 1)
        cf, cs = self.split(C)
        return Trajectory(self.Vf, t, cf), Trajectory(self.Vs, t, cs)


# ------------------------------------------------------------ ODEs

@dataclass
class OdeState:
    cstar: np.ndarray
    g: np.ndarray


def step_odes(prev: OdeState, c_s: np.ndarray, dt: float, beta: float, gamma: float,
              rho_s: float, dim: int = 2) -> OdeState:
    """Pointwise implicit Euler for ``c*' = beta c_s (1 - gamma c*/rho_s)`` and
    ``g' = gamma beta c_s g / (d rho_s)`` with ``c_s`` at the new time level."""
    a = gamma * beta / rho_s
    cstar = (prev.cstar + dt * beta * c_s) / (1.0 + dt * a * c_s)
    denom = 1.0 - dt * a * c_s / dim
    if np.any(denom <= 0):
        raise InvalidDeformation("growth update is singular for this time step")
    g = prev.g / denom
    if g.size and g.min() < GROWTH_FLOOR:
        raise InvalidDeformation(f"growth metric {g.min():.3g} dropped below {GROWTH_FLOOR}")
    return OdeState(cstar, g)


def ode_linear_residuals(cstar, g, c_s, cstar0, g0, beta, gamma, rho_s, dim=2):
    """Split form: linear operators minus their correction terms.

    Returns ``(r4, r5)`` such that ``c*' = -beta(gamma c*0/rho_s - 1) c_s + F4``
    equals ``c*' = r4`` and likewise for ``g``; they coincide with the full
    nonlinear right-hand sides.
    """
    a = gamma * beta / rho_s
    F4 = -a * c_s * (cstar - cstar0)
    F5 = a / dim * c_s * (g - g0)
    r4 = -beta * (gamma * cstar0 / rho_s - 1.0) * c_s + F4
    r5 = a * g0 / dim * c_s + F5
    return r4, r5


@dataclass
class PositivityReport:
    min_value: float
    node: int
    time_index: int
    time: float
    location: tuple[float, float]


def positivity_report(traj: Trajectory) -> PositivityReport:
    """Global nodal minimum over all snapshots of a scalar trajectory."""
    v = traj.values
    k, a = np.unravel_index(np.argmin(v), v.shape)
    x, y = traj.space.coords[a]
    return PositivityReport(float(v[k, a]), int(a), int(k), float(traj.times[k]),
                            (float(x), float(y)))
