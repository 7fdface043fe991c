"""Quasi-stationary incompressible-type elasticity in the solid layer.

The displacement is clamped to Dirichlet data on the interface, the outer
boundary carries traction data, and the divergence constraint includes the
time-integrated growth source.  Right-hand sides in divergence form are
assembled through ``int K : grad phi`` so that the matching outer traction is
built in.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import cumulative_trapezoid

from .fem import (FunctionSpace, assemble_divergence, assemble_mass, assemble_tensor_form,
                  block_diag_vector, facet_load_vector, facet_rule, load_matrix, load_scalar,
                  load_vector)
from .fluid import SaddleSolver
from .materials import EnergyDensity
from .mesh import FacetTag, Mesh, Subdomain

log = logging.getLogger(__name__)


class EigenIterationError(RuntimeError):
    pass


@dataclass
class ElasticSolution:
    displacement: np.ndarray
    pressure: np.ndarray
    constraint_residual: float


def growth_integral(c_values: np.ndarray, dt: float) -> np.ndarray:
    """Cumulative trapezoidal ``int_0^{t_k} c`` for snapshots along axis 0."""
    return cumulative_trapezoid(c_values, dx=dt, axis=0, initial=0.0)


class ElasticSolver:
    """Saddle-point solver for ``-div(D^2W(I) grad u) + grad p = f``, ``div u = g``."""

    def __init__(self, mesh: Mesh, energy: EnergyDensity | None = None):
        self.mesh = mesh
        self.energy = energy or EnergyDensity()
        self.V = FunctionSpace(mesh, 2, Subdomain.SOLID)
        self.Q = FunctionSpace(mesh, 1, Subdomain.SOLID)
        self.A = assemble_tensor_form(self.V, self.energy.d2w_identity_tensor).tocsr()
        self.B = assemble_divergence(self.V, self.Q).tocsr()
        self.M = block_diag_vector(assemble_mass(self.V)).tocsr()
        self.MQ = assemble_mass(self.Q).tocsc()
        self._mq_lu = spla.splu(self.MQ)
        clamp = self.V.boundary_dofs(FacetTag.INTERFACE)
        if len(clamp) == 0:
            raise ValueError("the solid needs a nonempty Dirichlet interface")
        if not mesh.periodic:
            clamp = np.union1d(clamp, self.V.boundary_dofs(FacetTag.LATERAL))
        self.iface_nodes = self.V.boundary_dofs(FacetTag.INTERFACE)
        self.fixed = np.concatenate([clamp, clamp + self.V.ndofs])
        self.outer_rule = facet_rule(self.V, FacetTag.OUTER)
        self.system = SaddleSolver(self.A, self.B, self.fixed)
        self._resolvent: dict[float, SaddleSolver] = {0.0: self.system}

    # -------------------------------------------------------- data helpers
    def body_load(self, f_q: np.ndarray) -> np.ndarray:
        return load_vector(self.V, f_q)

    def divergence_form_load(self, K_q: np.ndarray) -> np.ndarray:
        """``f = div K`` with matching outer traction ``-K n``: ``-int K : grad phi``."""
        return -load_matrix(self.V, K_q)

    def traction_load(self, h: np.ndarray) -> np.ndarray:
        """``int_{outer} h . phi`` for ``h`` sampled on the outer facet rule."""
        return facet_load_vector(self.V, self.outer_rule, h)

    def div_load(self, g_q) -> np.ndarray:
        g_q = np.broadcast_to(np.asarray(g_q, dtype=float), self.Q.weights.shape)
        return load_scalar(self.Q, g_q)

    def dirichlet_values(self, values: np.ndarray) -> np.ndarray:
        """Pack interface nodal values ``(n_iface, 2)`` into the fixed-dof layout."""
        out = np.zeros(len(self.fixed))
        m = len(self.fixed) // 2
        pos = np.searchsorted(self.fixed[:m], self.iface_nodes)
        out[pos] = values[:, 0]
        out[m + pos] = values[:, 1]
        return out

    # -------------------------------------------------------- solves
    def solve(self, load: np.ndarray | None = None, div_load: np.ndarray | None = None,
              dirichlet: np.ndarray | None = None, lam: float = 0.0) -> ElasticSolution:
        """Solve one quasi-static (or resolvent, ``lam > 0``) problem.

        ``div_load`` is ``int psi (g + growth source)``; ``dirichlet`` holds
        nodal interface values ``(n_iface, 2)``.
        """
        nv = 2 * self.V.ndofs
        load = np.zeros(nv) if load is None else load
        div_load = np.zeros(self.Q.ndofs) if div_load is None else div_load
        fixed = None if dirichlet is None else self.dirichlet_values(dirichlet)
        u, p = self._system(lam).solve(load, -div_load, fixed)
        return ElasticSolution(u, p, self.constraint_residual(u, div_load))

    def _system(self, lam: float) -> SaddleSolver:
        if lam < 0:
            raise ValueError("resolvent parameter must be nonnegative")
        if lam not in self._resolvent:
            self._resolvent[lam] = SaddleSolver(lam * self.M + self.A, self.B, self.fixed)
        return self._resolvent[lam]

    def solve_resolvent(self, lam: float, f_q: np.ndarray) -> ElasticSolution:
        """``lam u - div(D^2W(I) grad u) + grad p = f`` with clamped interface."""
        return self.solve(self.body_load(f_q), lam=lam)

    def constraint_residual(self, u: np.ndarray, div_load: np.ndarray) -> float:
        z = self._mq_lu.solve(-(self.B @ u) - div_load)
        return float(np.sqrt(z @ (self.MQ @ z)))

    def interface_traction_dual(self, u: np.ndarray, p: np.ndarray, load: np.ndarray) -> np.ndarray:
        """Residual of the solid equations; on interface rows it is the dual of
        the traction the solid exerts, ``-int_Gamma sigma n . phi`` with
        ``n`` pointing from fluid to solid."""
        return self.A @ u + self.B.T @ p - load

    def growth_source(self, c_integral_q: np.ndarray, gamma: float, beta: float,
                      rho: float) -> np.ndarray:
        """Pressure-space dual of ``(gamma beta / rho) int_0^t c``."""
        return self.div_load(gamma * beta / rho * c_integral_q)

    # -------------------------------------------------------- spectrum
    def estimate_spectral_bound(self, tol: float = 1e-12, max_iter: int = 500,
                                seed: int = 0) -> tuple[float, np.ndarray]:
        """Largest eigenvalue of ``-A`` on the clamped divergence-free space.

        Inverse iteration on ``A u + B^T p = omega M u``, ``B u = 0``.  Returns
        ``(omega_max, eigenvector)``.
        """
        rng = np.random.default_rng(seed)
        free = self.system.free
        u = np.zeros(2 * self.V.ndofs)
        u[free] = rng.standard_normal(len(free))
        lam_old = np.inf
        for it in range(max_iter):
            x, _ = self.system.solve(self.M @ u, np.zeros(self.Q.ndofs))
            x /= np.sqrt(x @ (self.M @ x))
            lam = float(x @ (self.A @ x))
            u = x
            if abs(lam - lam_old) <= tol * abs(lam):
                log.debug("inverse iteration converged in %d steps", it + 1)
                return -lam, u
            lam_old = lam
        raise EigenIterationError(f"inverse iteration did not converge in {max_iter} steps")
