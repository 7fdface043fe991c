"""Deformation gradients, growth split and Piola-identity diagnostics.

Matrix fields live at cell quadrature points with shape ``(..., nc, nq, d, d)``
and use the row convention ``F = I + grad u`` with ``(grad u)[i, j] = d_i u_j``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fem import Field, FunctionSpace, assemble_mass, block_diag_vector, load_matrix
from .mesh import FacetTag

# working bound on |F - I| for the Neumann-series inverse
INVERSE_BOUND = 0.5
GROWTH_FLOOR = 0.5


class InvalidDeformation(RuntimeError):
    """Raised when a deformation leaves the admissible regime."""

    def __init__(self, message: str, cell: int | None = None):
        super().__init__(message)
        self.cell = cell


def deformation_gradient(u: Field) -> np.ndarray:
    """``I + grad u`` at the quadrature points of ``u``'s space."""
    if u.ncomp != 2:
        raise ValueError("deformation gradient needs a vector field")
    return np.eye(2) + u.space.eval_grad(u.coef, 2)


@dataclass
class InverseDiagnostics:
    max_strain: float          # sup |F - I|
    max_inverse_strain: float  # sup |F^{-1} - I|


def _opnorm(A: np.ndarray) -> np.ndarray:
    if A.shape[-2:] == (2, 2):
        # closed form of the largest singular value, much cheaper than an SVD
        a, b, c, d = A[..., 0, 0], A[..., 0, 1], A[..., 1, 0], A[..., 1, 1]
        return 0.5 * (np.hypot(a + d, b - c) + np.hypot(a - d, b + c))
    return np.linalg.norm(A, ord=2, axis=(-2, -1))


def invert_F(F: np.ndarray, bound: float = INVERSE_BOUND,
             cells: np.ndarray | None = None) -> tuple[np.ndarray, InverseDiagnostics]:
    """Pointwise inverse of ``F`` guarded by ``|F - I| <= bound`` (spectral norm).

    ``cells`` maps the cell axis of ``F`` to global cell ids for error reports.
    """
    if bound > INVERSE_BOUND:
        raise ValueError(f"inverse bound can only be lowered below {INVERSE_BOUND}")
    d = F.shape[-1]
    strain = _opnorm(F - np.eye(d))
    if strain.size and strain.max() > bound:
        idx = np.unravel_index(np.argmax(strain), strain.shape)
        c = int(idx[-2])
        if cells is not None:
            c = int(cells[c])
        raise InvalidDeformation(
            f"|F - I| = {strain.max():.3g} exceeds {bound} in cell {c}", cell=c)
    Finv = np.linalg.inv(F)
    diag = InverseDiagnostics(float(strain.max(initial=0.0)),
                              float(_opnorm(Finv - np.eye(d)).max(initial=0.0)))
    return Finv, diag


@dataclass
class DeformationState:
    F: np.ndarray
    J: np.ndarray
    Finv: np.ndarray
    g: np.ndarray
    Fe: np.ndarray
    Je: np.ndarray

    @property
    def incompressibility_defect(self) -> float:
        return float(np.abs(self.Je - 1.0).max(initial=0.0))


def growth_split(F: np.ndarray, g: np.ndarray, floor: float = GROWTH_FLOOR) -> DeformationState:
    """Isotropic multiplicative split ``F = Fe (g I)``."""
    g = np.asarray(g, dtype=float)
    if g.size and g.min() < floor:
        raise InvalidDeformation(f"growth metric {g.min():.3g} dropped below {floor}")
    d = F.shape[-1]
    Fe = F / g[..., None, None]
    return DeformationState(F=F, J=np.linalg.det(F), Finv=np.linalg.inv(F), g=g,
                            Fe=Fe, Je=np.linalg.det(Fe))


# ------------------------------------------------------------ Piola identity

def nodal_jacobian(u: Field) -> Field:
    """Continuous P1 field of vertex-averaged ``det F``."""
    from .fem import FunctionSpace as _FS
    space = u.space
    p1 = _FS(space.mesh, 1, space.restriction)
    rows = np.arange(len(space.cells))
    corners = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    xi = np.broadcast_to(corners, (len(rows), 3, 2))
    grad = space.eval_points_grad(u.coef, rows, xi, 2)
    det = np.linalg.det(np.eye(2) + grad)  # (nc, 3)
    area = np.abs(space.geometry.det)[:, None] * np.ones((1, 3))
    num = np.bincount(p1.cell_dofs.ravel(), (det * area).ravel(), p1.ndofs)
    den = np.bincount(p1.cell_dofs.ravel(), area.ravel(), p1.ndofs)
    return Field(p1, num / den)


def _clamped_dofs(space: FunctionSpace) -> np.ndarray:
    tags = [FacetTag.INTERFACE, FacetTag.OUTER, FacetTag.WALL, FacetTag.LATERAL]
    nodes = np.unique(np.concatenate([space.boundary_dofs(t) for t in tags]))
    return np.concatenate([nodes, nodes + space.ndofs])


def piola_identity_residual(space: FunctionSpace, F: np.ndarray, J: np.ndarray,
                            q: float = 2.0) -> float:
    """Discrete ``L^q`` norm of the weak divergence of ``J F^{-T}``.

    The functional ``phi -> int J F^{-T} : grad phi`` over vector test
    functions vanishing on non-periodic boundaries is mapped to a finite
    element field through the mass matrix, and that field's norm is returned.
    ``F`` and ``J`` are quadrature-point values on ``space``.
    """
    P = J[..., None, None] * np.swapaxes(np.linalg.inv(F), -1, -2)
    r = load_matrix(space, P)
    M = block_diag_vector(assemble_mass(space), 2).tocsr()
    free = np.setdiff1d(np.arange(2 * space.ndofs), _clamped_dofs(space))
    z = np.zeros(2 * space.ndofs)
    if not np.any(r[free]):
        return 0.0
    z[free] = spla.spsolve(sp.csc_matrix(M[free][:, free]), r[free])
    v = space.eval(z, 2)
    return float(((np.linalg.norm(v, axis=-1) ** q) * space.weights).sum() ** (1.0 / q))
