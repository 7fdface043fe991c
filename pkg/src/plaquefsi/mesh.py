"""Reference-configuration geometry for the fluid/solid strip.

The fluid occupies ``[0, L) x [-H_f, 0]`` and the solid ``[0, L) x [0, H_s]``.
The interface is ``y = 0``, the outer solid boundary ``y = H_s`` and an
artificial no-slip wall closes the fluid at ``y = -H_f``.  Lateral facets are
identified periodically unless the mesh is built with ``periodic=False``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np


class Subdomain(IntEnum):
    FLUID = 0
    SOLID = 1


class FacetTag(IntEnum):
    INTERIOR = 0
    INTERFACE = 1
    OUTER = 2
    WALL = 3
    PERIODIC = 4
    LATERAL = 5


# local edge k of a triangle joins these local vertices
LOCAL_EDGES = np.array([[0, 1], [1, 2], [0, 2]])


@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangular mesh with subdomain and facet tags.

    ``facet_cells[f]`` holds the two cells sharing facet ``f`` (``-1`` on the
    outer boundary); for interface facets column 0 is the fluid cell and
    column 1 the solid cell.  ``vertex_master`` maps each vertex to its
    periodic representative, and ``periodic_pairs`` is an involution on facet
    indices pairing the left and right lateral facets.
    """

    vertices: np.ndarray
    cells: np.ndarray
    cell_tags: np.ndarray
    facets: np.ndarray
    facet_tags: np.ndarray
    facet_cells: np.ndarray
    facet_local: np.ndarray
    vertex_master: np.ndarray
    periodic_pairs: np.ndarray
    length: float
    height_fluid: float
    height_solid: float
    n: int
    periodic: bool = True
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def num_cells(self) -> int:
        return len(self.cells)

    @property
    def h(self) -> float:
        return 1.0 / self.n

    def cells_of(self, subdomain: Subdomain | None) -> np.ndarray:
        if subdomain is None:
            return np.arange(self.num_cells)
        return np.flatnonzero(self.cell_tags == subdomain)

    def facets_tagged(self, tag: FacetTag) -> np.ndarray:
        return np.flatnonzero(self.facet_tags == tag)

    def cell_areas(self) -> np.ndarray:
        p = self.vertices[self.cells]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def barycenters(self) -> np.ndarray:
        return self.vertices[self.cells].mean(axis=1)

    def facet_lengths(self, idx: np.ndarray | None = None) -> np.ndarray:
        f = self.facets if idx is None else self.facets[idx]
        d = self.vertices[f[:, 1]] - self.vertices[f[:, 0]]
        return np.linalg.norm(d, axis=1)

    def facet_normals(self, idx: np.ndarray) -> np.ndarray:
        """Unit normals of the given facets.

        Interface normals point from fluid into solid; boundary normals point
        out of the adjacent cell.
        """
        f = self.facets[idx]
        d = self.vertices[f[:, 1]] - self.vertices[f[:, 0]]
        nrm = np.stack([d[:, 1], -d[:, 0]], axis=1)
        nrm /= np.linalg.norm(nrm, axis=1)[:, None]
        owner = self.facet_cells[idx, 0]
        mid = 0.5 * (self.vertices[f[:, 0]] + self.vertices[f[:, 1]])
        away = mid - self.barycenters()[owner]
        flip = np.einsum("ij,ij->i", nrm, away) < 0
        nrm[flip] *= -1.0
        return nrm


def build_strip_mesh(L: float, H_f: float, H_s: float, n: int,
                     periodic: bool = True) -> Mesh:
    """Structured crossed-triangle mesh of the periodic fluid/solid strip.

    Every square of side ``1/n`` is split into four triangles through its
    centre, so the mesh has ``4 * (n L) * n (H_f + H_s)`` cells.
    """
    if min(L, H_f, H_s) <= 0:
        raise ValueError(f"nonpositive dimension: L={L}, H_f={H_f}, H_s={H_s}")
    if n < 4 or n % 2:
        raise ValueError(f"cells-per-unit n must be an even integer >= 4, got {n}")
    nx = _cells_along(L, n, "L")
    nyf = _cells_along(H_f, n, "H_f")
    nys = _cells_along(H_s, n, "H_s")
    ny = nyf + nys

    xs = np.linspace(0.0, L, nx + 1)
    ys = np.linspace(-H_f, H_s, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    corners = np.stack([X.ravel(), Y.ravel()], axis=1)
    ncorner = len(corners)
    cx = 0.5 * (xs[:-1] + xs[1:])
    cy = 0.5 * (ys[:-1] + ys[1:])
    CX, CY = np.meshgrid(cx, cy, indexing="ij")
    centres = np.stack([CX.ravel(), CY.ravel()], axis=1)
    vertices = np.vstack([corners, centres])

    def corner(i, j):
        return i * (ny + 1) + j

    I, J = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    I, J = I.ravel(), J.ravel()
    v00, v10 = corner(I, J), corner(I + 1, J)
    v11, v01 = corner(I + 1, J + 1), corner(I, J + 1)
    c = ncorner + I * ny + J
    cells = np.stack([
        np.stack([v00, v10, c], 1),
        np.stack([v10, v11, c], 1),
        np.stack([v11, v01, c], 1),
        np.stack([v01, v00, c], 1),
    ], axis=1).reshape(-1, 3)
    cell_tags = np.where(vertices[cells].mean(axis=1)[:, 1] < 0.0,
                         Subdomain.FLUID, Subdomain.SOLID).astype(np.int8)

    facets, facet_cells, facet_local = _build_facets(cells)
    tags = np.full(len(facets), FacetTag.INTERIOR, dtype=np.int8)
    p0, p1 = vertices[facets[:, 0]], vertices[facets[:, 1]]
    tol = 1e-12 * max(L, H_f + H_s)
    horizontal = np.abs(p0[:, 1] - p1[:, 1]) < tol
    vertical = np.abs(p0[:, 0] - p1[:, 0]) < tol
    on_y = lambda v: horizontal & (np.abs(p0[:, 1] - v) < tol)
    tags[on_y(0.0)] = FacetTag.INTERFACE
    tags[on_y(H_s)] = FacetTag.OUTER
    tags[on_y(-H_f)] = FacetTag.WALL
    lateral = vertical & ((np.abs(p0[:, 0]) < tol) | (np.abs(p0[:, 0] - L) < tol))
    tags[lateral] = FacetTag.PERIODIC if periodic else FacetTag.LATERAL

    # interface facets: fluid cell first
    iface = np.flatnonzero(tags == FacetTag.INTERFACE)
    swap = cell_tags[facet_cells[iface, 0]] != Subdomain.FLUID
    facet_cells[iface[swap]] = facet_cells[iface[swap]][:, ::-1]
    facet_local[iface[swap]] = facet_local[iface[swap]][:, ::-1]

    vertex_master = np.arange(len(vertices))
    pairs = np.arange(len(facets))
    if periodic:
        right = np.flatnonzero(np.abs(corners[:, 0] - L) < tol)
        vertex_master[right] = right - nx * (ny + 1)
        lat = np.flatnonzero(lateral)
        left = lat[np.abs(p0[lat, 0]) < tol]
        rght = lat[np.abs(p0[lat, 0] - L) < tol]
        ykey = lambda idx: np.round(0.5 * (p0[idx, 1] + p1[idx, 1]) / tol).astype(np.int64)
        order_l = left[np.argsort(ykey(left))]
        order_r = rght[np.argsort(ykey(rght))]
        pairs[order_l] = order_r
        pairs[order_r] = order_l

    return Mesh(vertices=vertices, cells=cells, cell_tags=cell_tags,
                facets=facets, facet_tags=tags, facet_cells=facet_cells,
                facet_local=facet_local, vertex_master=vertex_master,
                periodic_pairs=pairs, length=float(L), height_fluid=float(H_f),
                height_solid=float(H_s), n=int(n), periodic=periodic)


def _cells_along(extent: float, n: int, name: str) -> int:
    k = extent * n
    if abs(k - round(k)) > 1e-9 or round(k) < 1:
        raise ValueError(f"{name}={extent} is not a multiple of 1/n with n={n}")
    return int(round(k))


def _build_facets(cells: np.ndarray):
    nc = len(cells)
    edges = cells[:, LOCAL_EDGES]  # (nc, 3, 2)
    key = np.sort(edges, axis=2).reshape(-1, 2)
    uniq, inv = np.unique(key, axis=0, return_inverse=True)
    inv = inv.ravel()
    owner = np.repeat(np.arange(nc), 3)
    local = np.tile(np.arange(3), nc)
    facet_cells = -np.ones((len(uniq), 2), dtype=np.int64)
    facet_local = -np.ones((len(uniq), 2), dtype=np.int64)
    order = np.argsort(inv, kind="stable")
    inv_s = inv[order]
    first = np.ones(len(inv_s), dtype=bool)
    first[1:] = inv_s[1:] != inv_s[:-1]
    facet_cells[inv_s[first], 0] = owner[order][first]
    facet_local[inv_s[first], 0] = local[order][first]
    facet_cells[inv_s[~first], 1] = owner[order][~first]
    facet_local[inv_s[~first], 1] = local[order][~first]
    return uniq, facet_cells, facet_local


def export_mesh(mesh: Mesh, path: str | Path) -> Path:
    """Write a plain-text listing of the mesh.

    Record layouts, one per line::

        V <id> <x> <y> <periodic-master>
        C <id> <v0> <v1> <v2> <FLUID|SOLID>
        F <id> <v0> <v1> <tag> <cell0> <cell1>
    """
    path = Path(path)
    lines = [
        "# plaquefsi mesh v1",
        f"# L={mesh.length} H_f={mesh.height_fluid} H_s={mesh.height_solid} "
        f"n={mesh.n} periodic={int(mesh.periodic)}",
        "# V id x y master | C id v0 v1 v2 subdomain | F id v0 v1 tag cell0 cell1",
    ]
    for i, (x, y) in enumerate(mesh.vertices):
        lines.append(f"V {i} {x:.17g} {y:.17g} {mesh.vertex_master[i]}")
    for i, (a, b, c) in enumerate(mesh.cells):
        lines.append(f"C {i} {a} {b} {c} {Subdomain(mesh.cell_tags[i]).name}")
    for i, (a, b) in enumerate(mesh.facets):
        c0, c1 = mesh.facet_cells[i]
        lines.append(f"F {i} {a} {b} {FacetTag(mesh.facet_tags[i]).name} {c0} {c1}")
    path.write_text("\n".join(lines) + "\n")
    return path
