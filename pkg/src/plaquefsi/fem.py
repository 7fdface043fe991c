"""Lagrange P1/P2 elements on the strip mesh with vectorised assembly.

Vector fields are stored component-blocked: dof ``k * space.ndofs + a`` is
component ``k`` at node ``a``.  Gradients follow the row convention
``(grad u)[i, j] = d_i u_j`` and matrix fields are paired with test gradients
as ``A : grad(phi)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .mesh import LOCAL_EDGES, FacetTag, Mesh, Subdomain


# ---------------------------------------------------------------- quadrature

def triangle_quadrature(npts: int = 3) -> tuple[np.ndarray, np.ndarray]:
    """Collapsed Gauss rule on the unit reference triangle.

    Exact for polynomials of total degree ``2 * npts - 2``.
    """
    g, w = np.polynomial.legendre.leggauss(npts)
    g = 0.5 * (g + 1.0)
    w = 0.5 * w
    U, V = np.meshgrid(g, g, indexing="ij")
    WU, WV = np.meshgrid(w, w, indexing="ij")
    pts = np.stack([U.ravel(), (V * (1.0 - U)).ravel()], axis=1)
    wts = (WU * WV * (1.0 - U)).ravel()
    return pts, wts


def line_quadrature(npts: int = 4) -> tuple[np.ndarray, np.ndarray]:
    g, w = np.polynomial.legendre.leggauss(npts)
    return 0.5 * (g + 1.0), 0.5 * w


# ---------------------------------------------------------------- basis

def basis(degree: int, xi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Values ``(..., nloc)`` and reference gradients ``(..., nloc, 2)``."""
    x, y = xi[..., 0], xi[..., 1]
    l0, l1, l2 = 1.0 - x - y, x, y
    one = np.ones_like(x)
    zero = np.zeros_like(x)
    dl = [(-one, -one), (one, zero), (zero, one)]
    lam = [l0, l1, l2]
    if degree == 1:
        val = np.stack(lam, axis=-1)
        grad = np.stack([np.stack(d, axis=-1) for d in dl], axis=-2)
        return val, grad
    if degree != 2:
        raise ValueError(f"unsupported degree {degree}")
    vals, grads = [], []
    for i in range(3):
        vals.append(lam[i] * (2 * lam[i] - 1))
        f = 4 * lam[i] - 1
        grads.append(np.stack([f * dl[i][0], f * dl[i][1]], axis=-1))
    for a, b in LOCAL_EDGES:
        vals.append(4 * lam[a] * lam[b])
        grads.append(np.stack([4 * (dl[a][0] * lam[b] + lam[a] * dl[b][0]),
                               4 * (dl[a][1] * lam[b] + lam[a] * dl[b][1])], axis=-1))
    return np.stack(vals, axis=-1), np.stack(grads, axis=-2)


def nloc(degree: int) -> int:
    return 3 if degree == 1 else 6


# ---------------------------------------------------------------- geometry

@dataclass
class CellGeometry:
    """Affine maps of a set of cells evaluated at a reference rule."""

    cells: np.ndarray
    x0: np.ndarray       # (nc, 2)
    jac: np.ndarray      # (nc, 2, 2) columns are edge vectors
    inv_jac: np.ndarray  # (nc, 2, 2)
    det: np.ndarray      # (nc,)
    points: np.ndarray   # (nq, 2) reference
    qweights: np.ndarray  # (nq,)

    @classmethod
    def build(cls, mesh: Mesh, cells: np.ndarray, npts: int = 3) -> "CellGeometry":
        p = mesh.vertices[mesh.cells[cells]]
        jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
        det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
        pts, wts = triangle_quadrature(npts)
        return cls(cells, p[:, 0], jac, np.linalg.inv(jac), det, pts, wts)

    @cached_property
    def weights(self) -> np.ndarray:
        return np.abs(self.det)[:, None] * self.qweights[None, :]

    @cached_property
    def xq(self) -> np.ndarray:
        return self.x0[:, None, :] + np.einsum("cij,qj->cqi", self.jac, self.points)

    def to_reference(self, idx: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Reference coordinates of physical points ``x (n, m, 2)`` in cells ``idx``."""
        return np.einsum("cij,cmj->cmi", self.inv_jac[idx], x - self.x0[idx][:, None, :])


# ---------------------------------------------------------------- spaces

class FunctionSpace:
    """Continuous Lagrange space of degree 1 or 2 on a subdomain.

    Nodes are numbered through the periodic vertex identification, so fields
    are automatically periodic in ``x``.
    """

    def __init__(self, mesh: Mesh, degree: int, restriction: Subdomain | None = None,
                 npts: int = 3):
        if degree not in (1, 2):
            raise ValueError(f"degree must be 1 or 2, got {degree}")
        self.mesh = mesh
        self.degree = degree
        self.restriction = restriction
        self.cells = mesh.cells_of(restriction)
        master = mesh.vertex_master[mesh.cells[self.cells]]
        if degree == 1:
            gnodes = master
        else:
            nv = len(mesh.vertices)
            ekey = np.sort(master[:, LOCAL_EDGES], axis=2)
            eid = _edge_ids(mesh) [ekey[..., 0], ekey[..., 1]]
            gnodes = np.concatenate([master, nv + eid], axis=1)
        uniq, inv = np.unique(gnodes, return_inverse=True)
        self.global_nodes = uniq
        self.cell_dofs = inv.reshape(gnodes.shape)
        self.ndofs = len(uniq)
        self.geometry = CellGeometry.build(mesh, self.cells, npts)
        coords = np.zeros((self.ndofs, 2))
        ref = np.array([[0, 0], [1, 0], [0, 1], [.5, 0], [.5, .5], [0, .5]])[: nloc(degree)]
        xl = self.geometry.x0[:, None, :] + np.einsum("cij,lj->cli", self.geometry.jac, ref)
        # assign from cells; periodic copies resolve to the leftmost image
        order = np.argsort(-xl[..., 0].ravel(), kind="stable")
        coords[self.cell_dofs.ravel()[order]] = xl.reshape(-1, 2)[order]
        self.coords = coords
        self._ref_val, self._ref_grad = basis(degree, self.geometry.points)

    @property
    def nloc(self) -> int:
        return nloc(self.degree)

    @cached_property
    def grads(self) -> np.ndarray:
        """Physical basis gradients at quadrature points ``(nc, nq, nloc, 2)``."""
        return np.einsum("cji,qlj->cqli", self.geometry.inv_jac, self._ref_grad)

    @property
    def vals(self) -> np.ndarray:
        return self._ref_val

    @property
    def weights(self) -> np.ndarray:
        return self.geometry.weights

    @property
    def xq(self) -> np.ndarray:
        return self.geometry.xq

    def cell_index(self) -> np.ndarray:
        """Map from global cell id to row in ``self.cells`` (``-1`` elsewhere)."""
        m = -np.ones(self.mesh.num_cells, dtype=np.int64)
        m[self.cells] = np.arange(len(self.cells))
        return m

    def boundary_dofs(self, tag: FacetTag) -> np.ndarray:
        """Nodes lying on facets with the given tag."""
        fidx = self.mesh.facets_tagged(tag)
        cmap = self.cell_index()
        out = []
        for side in (0, 1):
            c = self.mesh.facet_cells[fidx, side]
            ok = c >= 0
            ok[ok] = cmap[c[ok]] >= 0
            if not ok.any():
                continue
            rows = cmap[c[ok]]
            le = self.mesh.facet_local[fidx[ok], side]
            loc = [LOCAL_EDGES[le, 0], LOCAL_EDGES[le, 1]]
            if self.degree == 2:
                loc.append(3 + le)
            for l in loc:
                out.append(self.cell_dofs[rows, l])
        return np.unique(np.concatenate(out)) if out else np.zeros(0, dtype=np.int64)

    def interpolate(self, fn, ncomp: int = 1) -> np.ndarray:
        """Nodal interpolation of ``fn(x, y)``; vector functions return a tuple."""
        x, y = self.coords[:, 0], self.coords[:, 1]
        v = fn(x, y)
        if ncomp == 1:
            return np.broadcast_to(np.asarray(v, dtype=float), (self.ndofs,)).copy()
        return np.concatenate([np.broadcast_to(np.asarray(c, dtype=float), (self.ndofs,))
                               for c in v])

    # evaluation at the cell quadrature rule

    def eval(self, coef: np.ndarray, ncomp: int = 1) -> np.ndarray:
        """Values at quadrature points: ``(nc, nq)`` or ``(nc, nq, ncomp)``.

        A leading batch axis on ``coef`` (e.g. time) is carried through.
        """
        c = self._local(coef, ncomp)  # (..., nc, ncomp, nloc)
        out = np.einsum("...ckl,ql->...cqk", c, self._ref_val)
        return out[..., 0] if ncomp == 1 else out

    def eval_grad(self, coef: np.ndarray, ncomp: int = 1) -> np.ndarray:
        """Gradients ``(nc, nq, 2)`` for scalars, ``(nc, nq, 2, ncomp)`` with
        ``[..., i, j] = d_i u_j`` for vectors."""
        c = self._local(coef, ncomp)
        out = np.einsum("...ckl,cqli->...cqik", c, self.grads)
        return out[..., 0] if ncomp == 1 else out

    def _local(self, coef, ncomp):
        coef = np.asarray(coef)
        lead = coef.shape[:-1]
        c = coef.reshape(*lead, ncomp, self.ndofs)
        return np.moveaxis(c[..., self.cell_dofs], -3, -2)

    def eval_points(self, coef: np.ndarray, rows: np.ndarray, xi: np.ndarray,
                    ncomp: int = 1) -> np.ndarray:
        """Values at reference points ``xi (n, m, 2)`` of cells ``rows``."""
        val, _ = basis(self.degree, xi)
        c = self._local(coef, ncomp)[..., rows, :, :]
        out = np.einsum("...ckl,cml->...cmk", c, val)
        return out[..., 0] if ncomp == 1 else out

    def eval_points_grad(self, coef, rows, xi, ncomp=1):
        _, g = basis(self.degree, xi)
        pg = np.einsum("cji,cmlj->cmli", self.geometry.inv_jac[rows], g)
        c = self._local(coef, ncomp)[..., rows, :, :]
        out = np.einsum("...ckl,cmli->...cmik", c, pg)
        return out[..., 0] if ncomp == 1 else out


_EDGE_CACHE_KEY = "edge_ids"


def _edge_ids(mesh: Mesh):
    if _EDGE_CACHE_KEY not in mesh._cache:
        master = mesh.vertex_master[mesh.cells]
        key = np.sort(master[:, LOCAL_EDGES], axis=2).reshape(-1, 2)
        uniq = np.unique(key, axis=0)
        nv = len(mesh.vertices)
        table = sp.csr_matrix((np.arange(len(uniq)) + 1, (uniq[:, 0], uniq[:, 1])),
                              shape=(nv, nv))

        class _Lookup:
            def __getitem__(self, ij):
                i, j = ij
                return np.asarray(table[i.ravel(), j.ravel()]).reshape(i.shape) - 1

        mesh._cache[_EDGE_CACHE_KEY] = _Lookup()
    return mesh._cache[_EDGE_CACHE_KEY]


# ---------------------------------------------------------------- facets

@dataclass
class FacetRule:
    """Quadrature on a set of facets as seen from one side's space."""

    facets: np.ndarray
    rows: np.ndarray      # row of the adjacent cell in the space
    xi: np.ndarray        # (nf, m, 2) reference coordinates in that cell
    x: np.ndarray         # (nf, m, 2) physical points
    weights: np.ndarray   # (nf, m)
    normals: np.ndarray   # (nf, 2) facet normals (interface: fluid -> solid)


def facet_rule(space: FunctionSpace, tag: FacetTag, npts: int = 4) -> FacetRule:
    mesh = space.mesh
    fidx = mesh.facets_tagged(tag)
    cmap = space.cell_index()
    c0 = mesh.facet_cells[fidx, 0]
    c1 = mesh.facet_cells[fidx, 1]
    r0 = np.where(c0 >= 0, cmap[np.maximum(c0, 0)], -1)
    r1 = np.where(c1 >= 0, cmap[np.maximum(c1, 0)], -1)
    rows = np.where(r0 >= 0, r0, r1)
    keep = rows >= 0
    fidx, rows = fidx[keep], rows[keep]
    t, w = line_quadrature(npts)
    a = mesh.vertices[mesh.facets[fidx, 0]]
    b = mesh.vertices[mesh.facets[fidx, 1]]
    x = a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]
    xi = space.geometry.to_reference(rows, x)
    lengths = np.linalg.norm(b - a, axis=1)
    return FacetRule(fidx, rows, xi, x, lengths[:, None] * w[None, :],
                     mesh.facet_normals(fidx))


def facet_basis(space: FunctionSpace, rule: FacetRule):
    val, g = basis(space.degree, rule.xi)
    pg = np.einsum("cji,cmlj->cmli", space.geometry.inv_jac[rule.rows], g)
    return val, pg


# ---------------------------------------------------------------- assembly

def _coo(rows, cols, vals, shape):
    return sp.csr_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=shape)


def assemble_mass(space: FunctionSpace, coeff: float | np.ndarray = 1.0) -> sp.csr_matrix:
    w = space.weights * coeff
    loc = np.einsum("cq,qa,qb->cab", w, space.vals, space.vals)
    d = space.cell_dofs
    return _coo(np.repeat(d, space.nloc, 1).reshape(loc.shape),
                np.tile(d, (1, space.nloc)).reshape(loc.shape), loc,
                (space.ndofs, space.ndofs))


def assemble_stiffness(space: FunctionSpace, coeff: float | np.ndarray = 1.0) -> sp.csr_matrix:
    w = space.weights * coeff
    loc = np.einsum("cq,cqai,cqbi->cab", w, space.grads, space.grads)
    d = space.cell_dofs
    return _coo(np.repeat(d, space.nloc, 1).reshape(loc.shape),
                np.tile(d, (1, space.nloc)).reshape(loc.shape), loc,
                (space.ndofs, space.ndofs))


def block_diag_vector(m: sp.spmatrix, ncomp: int = 2) -> sp.csr_matrix:
    return sp.block_diag([m] * ncomp, format="csr")


def assemble_tensor_form(space: FunctionSpace, C: np.ndarray) -> sp.csr_matrix:
    """Matrix of ``(u, phi) -> int C[grad u] : grad phi`` for vector P-k fields.

    ``C[i, j, k, l]`` maps ``(grad u)[k, l]`` to the stress entry ``[i, j]``;
    a pointwise tensor of shape ``(nc, nq, 2, 2, 2, 2)`` is also accepted.
    """
    G = space.grads
    w = space.weights
    # loc[c, j, a, l, b] = sum_q w * C_ijkl d_i N_a d_k N_b
    if C.ndim == 4:
        loc = np.einsum("cq,ijkl,cqai,cqbk->cjalb", w, C, G, G, optimize=True)
    else:
        loc = np.einsum("cq,cqijkl,cqai,cqbk->cjalb", w, C, G, G, optimize=True)
    n, nl = space.ndofs, space.nloc
    d = space.cell_dofs
    rows = (np.arange(2)[None, :, None] * n + d[:, None, :])  # (c, j, a)
    cols = rows
    R = np.broadcast_to(rows[:, :, :, None, None], loc.shape)
    Cc = np.broadcast_to(cols[:, None, None, :, :], loc.shape)
    return _coo(R, Cc, loc, (2 * n, 2 * n))


def assemble_divergence(vspace: FunctionSpace, pspace: FunctionSpace) -> sp.csr_matrix:
    """``B[p, (j, a)] = -int psi_p d_j N_a`` over the shared cells."""
    assert np.array_equal(vspace.cells, pspace.cells)
    w = vspace.weights
    loc = -np.einsum("cq,qp,cqaj->cpja", w, pspace.vals, vspace.grads)
    n = vspace.ndofs
    rows = np.broadcast_to(pspace.cell_dofs[:, :, None, None], loc.shape)
    vd = np.arange(2)[None, :, None] * n + vspace.cell_dofs[:, None, :]
    cols = np.broadcast_to(vd[:, None, :, :], loc.shape)
    return _coo(rows, cols, loc, (pspace.ndofs, 2 * n))


def load_scalar(space: FunctionSpace, f_q: np.ndarray) -> np.ndarray:
    """``int f psi_a`` from quadrature values ``(nc, nq)``."""
    loc = np.einsum("cq,cq,qa->ca", space.weights, f_q, space.vals)
    return np.bincount(space.cell_dofs.ravel(), loc.ravel(), space.ndofs)


def load_flux(space: FunctionSpace, q_q: np.ndarray) -> np.ndarray:
    """``int q . grad psi_a`` from vector quadrature values ``(nc, nq, 2)``."""
    loc = np.einsum("cq,cqi,cqai->ca", space.weights, q_q, space.grads)
    return np.bincount(space.cell_dofs.ravel(), loc.ravel(), space.ndofs)


def load_vector(space: FunctionSpace, f_q: np.ndarray) -> np.ndarray:
    """``int f . phi`` for a vector space from ``(nc, nq, 2)`` values."""
    return np.concatenate([load_scalar(space, f_q[..., k]) for k in range(2)])


def load_matrix(space: FunctionSpace, A_q: np.ndarray) -> np.ndarray:
    """``int A : grad phi`` for a vector space from ``(nc, nq, 2, 2)`` values."""
    return np.concatenate([load_flux(space, A_q[..., :, k]) for k in range(2)])


def facet_load_scalar(space: FunctionSpace, rule: FacetRule, f: np.ndarray) -> np.ndarray:
    """``int_facets f psi_a`` with ``f`` of shape ``(nf, m)``."""
    val, _ = facet_basis(space, rule)
    loc = np.einsum("fm,fm,fma->fa", rule.weights, f, val)
    return np.bincount(space.cell_dofs[rule.rows].ravel(), loc.ravel(), space.ndofs)


def facet_load_vector(space: FunctionSpace, rule: FacetRule, h: np.ndarray) -> np.ndarray:
    return np.concatenate([facet_load_scalar(space, rule, h[..., k]) for k in range(2)])


def facet_mass(space_a: FunctionSpace, rule_a: FacetRule,
               space_b: FunctionSpace, rule_b: FacetRule) -> sp.csr_matrix:
    """``int_facets psi^a_i psi^b_j``; both rules must list the same facets."""
    assert np.array_equal(rule_a.facets, rule_b.facets)
    va, _ = facet_basis(space_a, rule_a)
    vb, _ = facet_basis(space_b, rule_b)
    loc = np.einsum("fm,fmi,fmj->fij", rule_a.weights, va, vb)
    R = np.broadcast_to(space_a.cell_dofs[rule_a.rows][:, :, None], loc.shape)
    Cc = np.broadcast_to(space_b.cell_dofs[rule_b.rows][:, None, :], loc.shape)
    return _coo(R, Cc, loc, (space_a.ndofs, space_b.ndofs))


def match_rule(space: FunctionSpace, other: FacetRule) -> FacetRule:
    """Rule on the same facets and physical points as ``other`` seen from ``space``."""
    mesh = space.mesh
    cmap = space.cell_index()
    c = mesh.facet_cells[other.facets]
    r = np.where(c >= 0, cmap[np.maximum(c, 0)], -1)
    rows = np.where(r[:, 0] >= 0, r[:, 0], r[:, 1])
    if (rows < 0).any():
        raise ValueError("facet not adjacent to the space's subdomain")
    xi = space.geometry.to_reference(rows, other.x)
    return FacetRule(other.facets, rows, xi, other.x, other.weights, other.normals)


def node_map(src: FunctionSpace, dst: FunctionSpace, nodes: np.ndarray) -> np.ndarray:
    """Indices in ``dst`` of the nodes ``nodes`` of ``src`` (shared global ids)."""
    g = src.global_nodes[nodes]
    pos = np.searchsorted(dst.global_nodes, g)
    if (pos >= dst.ndofs).any() or (dst.global_nodes[np.minimum(pos, dst.ndofs - 1)] != g).any():
        raise ValueError("nodes not present in destination space")
    return pos


def l2_norm(space: FunctionSpace, coef: np.ndarray, ncomp: int = 1) -> float:
    v = space.eval(coef, ncomp)
    sq = v ** 2 if ncomp == 1 else (v ** 2).sum(-1)
    return float(np.sqrt((space.weights * sq).sum()))


@dataclass
class Field:
    """Coefficients of a scalar (``ncomp=1``) or vector field on a space."""

    space: FunctionSpace
    coef: np.ndarray
    ncomp: int = 1

    def __post_init__(self):
        self.coef = np.asarray(self.coef, dtype=float)
        if self.coef.shape[-1] != self.ncomp * self.space.ndofs:
            raise ValueError(
                f"coefficient length {self.coef.shape[-1]} does not match "
                f"{self.ncomp} x {self.space.ndofs} dofs")

    @property
    def restriction(self):
        return self.space.restriction

    @property
    def degree(self) -> int:
        return self.space.degree

    def at_barycenters(self) -> np.ndarray:
        rows = np.arange(len(self.space.cells))
        xi = np.full((len(rows), 1, 2), 1.0 / 3.0)
        v = self.space.eval_points(self.coef, rows, xi, self.ncomp)
        return v[:, 0]
