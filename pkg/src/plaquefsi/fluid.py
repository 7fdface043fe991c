"""Nonstationary Stokes problem in the fluid strip.

Taylor-Hood P2/P1 in space, theta-scheme in time (implicit Euler by default).
No-slip is imposed strongly on the bottom wall; the interface carries traction
data, so the pressure is determined without a gauge.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fem import (FunctionSpace, assemble_divergence, assemble_mass, assemble_tensor_form,
                  block_diag_vector, facet_load_vector, facet_mass, facet_rule, load_matrix,
                  load_scalar, load_vector)
from .mesh import FacetTag, Mesh, Subdomain
from .norms import Trajectory

log = logging.getLogger(__name__)


def viscous_tensor(nu: float, dim: int = 2) -> np.ndarray:
    """``C`` with ``C[grad u] = nu (grad u + grad u^T)``."""
    I = np.eye(dim)
    return nu * (np.einsum("ik,jl->ijkl", I, I) + np.einsum("il,jk->ijkl", I, I))


class SaddleSolver:
    """Factored block system ``[[A, B^T], [B, 0]]`` with strongly fixed velocity dofs."""

    def __init__(self, A: sp.spmatrix, B: sp.spmatrix, fixed: np.ndarray):
        self.nv = A.shape[0]
        self.np = B.shape[0]
        self.A = A.tocsr()
        self.B = B.tocsr()
        self.fixed = np.asarray(fixed, dtype=np.int64)
        self.free = np.setdiff1d(np.arange(self.nv), self.fixed)
        K = sp.bmat([[self.A[self.free][:, self.free], self.B[:, self.free].T],
                     [self.B[:, self.free], None]], format="csc")
        try:
            self.lu = spla.splu(K)
        except RuntimeError as exc:
            raise np.linalg.LinAlgError(f"singular saddle-point system: {exc}") from exc

    def solve(self, f: np.ndarray, g: np.ndarray,
              fixed_values: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Solve ``A u + B^T p = f``, ``B u = g`` with ``u[fixed] = fixed_values``."""
        u = np.zeros(self.nv)
        rhs_f = f[self.free].copy()
        rhs_g = g.copy()
        if fixed_values is not None and np.any(fixed_values):
            u[self.fixed] = fixed_values
            rhs_f -= self.A[self.free][:, self.fixed] @ fixed_values
            rhs_g -= self.B[:, self.fixed] @ fixed_values
        x = self.lu.solve(np.concatenate([rhs_f, rhs_g]))
        if not np.all(np.isfinite(x)):
            raise np.linalg.LinAlgError("saddle-point solve produced non-finite values")
        u[self.free] = x[: len(self.free)]
        return u, x[len(self.free):]


@dataclass
class StokesSolution:
    velocity: Trajectory
    pressure: Trajectory
    div_residuals: np.ndarray


class StokesSolver:
    """Implicit time stepping for ``rho du/dt - div S(u, p) = f``, ``div u = g``.

    Loads are passed as dual vectors (already integrated against the velocity
    or pressure basis) so volume forces, divergence-form forces and interface
    tractions can be combined freely.
    """

    def __init__(self, mesh: Mesh, rho: float, nu: float, dt: float, theta: float = 1.0):
        if rho <= 0 or nu <= 0 or dt <= 0:
            raise ValueError("density, viscosity and time step must be positive")
        if not 0.5 <= theta <= 1.0:
            raise ValueError("theta must lie in [1/2, 1]")
        self.mesh, self.rho, self.nu, self.dt, self.theta = mesh, rho, nu, dt, theta
        self.V = FunctionSpace(mesh, 2, Subdomain.FLUID)
        self.Q = FunctionSpace(mesh, 1, Subdomain.FLUID)
        self.M = block_diag_vector(assemble_mass(self.V))
        self.A = assemble_tensor_form(self.V, viscous_tensor(nu))
        self.B = assemble_divergence(self.V, self.Q)
        self.MQ = assemble_mass(self.Q).tocsc()
        self._mq_lu = spla.splu(self.MQ)
        wall = self.V.boundary_dofs(FacetTag.WALL)
        if not mesh.periodic:
            wall = np.union1d(wall, self.V.boundary_dofs(FacetTag.LATERAL))
        self.fixed = np.concatenate([wall, wall + self.V.ndofs])
        self.iface_rule = facet_rule(self.V, FacetTag.INTERFACE)
        self.iface_nodes = self.V.boundary_dofs(FacetTag.INTERFACE)
        self.system = SaddleSolver(rho / dt * self.M + theta * self.A, self.B, self.fixed)

    # -------------------------------------------------------- data helpers
    def body_load(self, f_q: np.ndarray) -> np.ndarray:
        return load_vector(self.V, f_q)

    def divergence_form_load(self, K_q: np.ndarray) -> np.ndarray:
        """Dual vector of ``div K`` paired weakly: ``-int K : grad phi``."""
        return -load_matrix(self.V, K_q)

    def traction_load(self, h: np.ndarray) -> np.ndarray:
        """``int_Gamma h . phi`` for ``h`` sampled on the interface rule."""
        return facet_load_vector(self.V, self.iface_rule, h)

    def div_load(self, g_q: np.ndarray | float) -> np.ndarray:
        """``int psi g`` on the pressure space."""
        g_q = np.broadcast_to(np.asarray(g_q, dtype=float), self.Q.weights.shape)
        return load_scalar(self.Q, g_q)

    # -------------------------------------------------------- stepping
    def step(self, prev: np.ndarray, load: np.ndarray, div_load: np.ndarray,
             prev_load: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
        """One step; ``load`` and ``div_load`` are data at the new time level."""
        rhs = self.rho / self.dt * (self.M @ prev) + self.theta * load
        if self.theta < 1.0:
            rhs -= (1.0 - self.theta) * (self.A @ prev)
            if prev_load is not None:
                rhs += (1.0 - self.theta) * prev_load
        # B u = -int psi div u, so the constraint data enters with a minus sign
        return self.system.solve(rhs, -div_load)

    def momentum_residual(self, u, p, prev, load) -> np.ndarray:
        """Full residual of the discrete momentum equation (implicit Euler)."""
        return (self.rho / self.dt * (self.M @ (u - prev)) + self.A @ u
                + self.B.T @ p - load)

    def div_residual(self, u: np.ndarray, div_load: np.ndarray) -> float:
        """``L^2`` norm of the ``P1`` projection of ``div u - g``."""
        z = self._mq_lu.solve(-(self.B @ u) - div_load)
        return float(np.sqrt(z @ (self.MQ @ z)))

    def traction_trace(self, u, p, prev, load) -> np.ndarray:
        """Nodal interface traction ``S(u, p) n`` obtained by residual lifting.

        ``load`` must not contain the interface traction itself.  Returns an
        array ``(len(iface_nodes), 2)`` of nodal values on the interface.
        """
        r = self.momentum_residual(u, p, prev, load)
        return self.lift_interface(r)

    def lift_interface(self, dual: np.ndarray) -> np.ndarray:
        nodes = self.iface_nodes
        Mg = facet_mass(self.V, self.iface_rule, self.V, self.iface_rule).tocsr()
        Mg = sp.csc_matrix(Mg[nodes][:, nodes])
        n = self.V.ndofs
        lu = spla.splu(Mg)
        return np.stack([lu.solve(dual[k * n + nodes]) for k in range(2)], axis=1)

    def solve(self, u0: np.ndarray, nsteps: int,
              load: Callable[[int], np.ndarray] | None = None,
              div_load: Callable[[int], np.ndarray] | None = None,
              p0: np.ndarray | None = None) -> StokesSolution:
        """March ``nsteps`` steps; callbacks give data at step index ``k + 1``."""
        nv = 2 * self.V.ndofs
        U = np.zeros((nsteps + 1, nv))
        P = np.zeros((nsteps + 1, self.Q.ndofs))
        U[0] = u0
        if p0 is not None:
            P[0] = p0
        res = np.zeros(nsteps)
        prev_f = load(0) if (load is not None and self.theta < 1) else None
        for k in range(nsteps):
            f = load(k + 1) if load is not None else np.zeros(nv)
            g = div_load(k + 1) if div_load is not None else np.zeros(self.Q.ndofs)
            U[k + 1], P[k + 1] = self.step(U[k], f, g, prev_f)
            prev_f = f
            res[k] = self.div_residual(U[k + 1], g)
            log.debug("fluid step %d div-residual %.3e", k + 1, res[k])
        t = self.dt * np.arange(nsteps + 1)
        return StokesSolution(Trajectory(self.V, t, U, 2), Trajectory(self.Q, t, P), res)
