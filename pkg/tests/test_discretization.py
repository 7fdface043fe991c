from math import factorial

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from plaquefsi.fem import (Field, FunctionSpace, assemble_mass, facet_rule, l2_norm,
                           line_quadrature, triangle_quadrature)
from plaquefsi.mesh import FacetTag, Subdomain, build_strip_mesh, export_mesh
from plaquefsi.norms import (NormKind, NormSpec, Trajectory, slobodeckij_seminorm,
                             temporal_seminorm, trajectory_norm)

# int_{Q} int_{Q} (x1 - y1)^2 / |x - y|^3 over the unit square Q, evaluated
# with mpmath quadrature at 30 digits.
SLOBODECKIJ_X_SQUARED = 1.48660479912368935126409283382


def test_mesh_counts_and_tags(strip8):
    m = strip8
    assert m.num_cells == 4 * 8 * 8
    assert np.isclose(m.cell_areas().sum(), 1.0)
    iface = m.facets_tagged(FacetTag.INTERFACE)
    assert np.isclose(m.facet_lengths(iface).sum(), 1.0)
    assert np.allclose(m.facet_normals(iface), [0.0, 1.0])
    # fluid cell listed first across the interface
    assert np.all(m.cell_tags[m.facet_cells[iface, 0]] == Subdomain.FLUID)
    assert np.all(m.cell_tags[m.facet_cells[iface, 1]] == Subdomain.SOLID)
    y = m.barycenters()[:, 1]
    assert np.all((y < 0) == (m.cell_tags == Subdomain.FLUID))
    assert len(m.facets_tagged(FacetTag.LATERAL)) == 0


def test_mesh_rejects_bad_input():
    with pytest.raises(ValueError):
        build_strip_mesh(1.0, 0.5, 0.5, 5)
    with pytest.raises(ValueError):
        build_strip_mesh(1.0, 0.3, 0.5, 8)
    with pytest.raises(ValueError):
        build_strip_mesh(1.0, 0.0, 0.5, 8)


def test_periodic_nodes_identified(strip8):
    V = FunctionSpace(strip8, 2)
    np_ = FunctionSpace(build_strip_mesh(1.0, 0.5, 0.5, 8, periodic=False), 2)
    # the right column of nodes is merged into the left one
    assert np_.ndofs - V.ndofs == 9 + 8  # corners plus edge midpoints
    u = V.interpolate(lambda x, y: np.sin(2 * np.pi * x) * np.cos(y))
    vals = V.eval(u)
    exact = np.sin(2 * np.pi * V.xq[..., 0]) * np.cos(V.xq[..., 1])
    assert np.abs(vals - exact).max() < 5e-3


@pytest.mark.parametrize("npts", [2, 3, 4])
def test_triangle_quadrature_exactness(npts):
    pts, w = triangle_quadrature(npts)
    deg = 2 * npts - 2
    for a in range(deg + 1):
        for b in range(deg + 1 - a):
            exact = factorial(a) * factorial(b) / factorial(a + b + 2)
            assert np.isclose((w * pts[:, 0] ** a * pts[:, 1] ** b).sum(), exact, rtol=1e-13)


def test_line_quadrature():
    x, w = line_quadrature(4)
    assert np.isclose(w.sum(), 1.0)
    assert np.isclose((w * x ** 7).sum(), 1 / 8)


def test_p2_reproduces_quadratics(strip8):
    V = FunctionSpace(strip8, 2, Subdomain.SOLID)
    f = lambda x, y: 1 + x - 2 * y + x * y + 3 * y ** 2
    u = V.interpolate(f)
    # x-terms are not periodic; restrict the check to cells away from x = L
    inner = V.xq[..., 0].max(axis=1) < 1.0 - 1e-12
    left = V.mesh.vertices[V.mesh.cells[V.cells]][:, :, 0].max(axis=1) < 1.0 - 1e-12
    ok = inner & left
    exact = f(V.xq[..., 0], V.xq[..., 1])
    assert np.abs(V.eval(u)[ok] - exact[ok]).max() < 1e-12
    g = V.eval_grad(u)
    assert np.abs(g[ok][..., 0] - (1 + V.xq[ok][..., 1])).max() < 1e-11


def test_mass_matrix_integrates_area(strip8):
    for deg in (1, 2):
        for sub, area in ((Subdomain.FLUID, 0.5), (None, 1.0)):
            M = assemble_mass(FunctionSpace(strip8, deg, sub))
            assert np.isclose(M.sum(), area)


def test_facet_rule_length(strip8):
    V = FunctionSpace(strip8, 2, Subdomain.SOLID)
    for tag in (FacetTag.INTERFACE, FacetTag.OUTER):
        r = facet_rule(V, tag)
        assert np.isclose(r.weights.sum(), 1.0)


def test_l2_norm_of_constant(strip8):
    V = FunctionSpace(strip8, 2, Subdomain.FLUID)
    assert np.isclose(l2_norm(V, np.full(V.ndofs, 2.0)), 2.0 * np.sqrt(0.5))


def test_slobodeckij_oracle_convergence():
    vals = []
    for n in (8, 16, 32):
        m = build_strip_mesh(1.0, 0.5, 0.5, n, periodic=False)
        V = FunctionSpace(m, 1)
        vals.append(slobodeckij_seminorm(Field(V, V.interpolate(lambda x, y: x)), 0.5, 2.0) ** 2)
    err = np.abs(np.array(vals) - SLOBODECKIJ_X_SQUARED)
    assert err[-1] / SLOBODECKIJ_X_SQUARED < 0.025
    assert np.log2(err[-2] / err[-1]) >= 0.9
    assert np.all(np.diff(err) < 0)


def test_slobodeckij_constant_is_zero(strip8):
    V = FunctionSpace(strip8, 1, Subdomain.SOLID)
    assert slobodeckij_seminorm(Field(V, np.ones(V.ndofs)), 0.5, 2.0) == 0.0
    with pytest.raises(ValueError):
        slobodeckij_seminorm(Field(V, np.ones(V.ndofs)), 1.0, 2.0)


def test_normspec_validation():
    with pytest.raises(ValueError):
        NormSpec(q=1.0)
    with pytest.raises(ValueError):
        NormSpec(kind=NormKind.SLOBODECKIJ, s=1.0)
    with pytest.raises(ValueError):
        NormSpec(r=1.5)


def _trajectory(space, nsteps, seed):
    rng = np.random.default_rng(seed)
    t = np.linspace(0.0, 0.1, nsteps + 1)
    base = space.interpolate(lambda x, y: np.sin(2 * np.pi * x) * (y + 1))
    vals = base[None, :] * (1 + np.cumsum(rng.standard_normal(nsteps + 1)))[:, None]
    return Trajectory(space, t, vals)


def test_lebesgue_norm_of_constant_trajectory(strip8):
    V = FunctionSpace(strip8, 1, Subdomain.FLUID)
    tr = Trajectory(V, np.linspace(0, 2.0, 5), np.full((5, V.ndofs), 3.0))
    # (T |Omega| 3^q)^(1/q) with T = 2, |Omega| = 1/2
    assert np.isclose(trajectory_norm(tr, NormSpec(NormKind.LEBESGUE, 0, 2.0, 0)), 3.0)
    assert temporal_seminorm(tr, 0.5, 2.0) == 0.0


_space_cache = {}


def _p1_fluid():
    if "v" not in _space_cache:
        _space_cache["v"] = FunctionSpace(build_strip_mesh(1.0, 0.5, 0.5, 4), 1, Subdomain.FLUID)
    return _space_cache["v"]


@settings(max_examples=25, deadline=None)
@given(nsteps=st.integers(3, 12), cut=st.integers(1, 12), seed=st.integers(0, 10_000),
       kind=st.sampled_from([NormKind.LEBESGUE, NormKind.SOBOLEV, NormKind.ANISOTROPIC]))
def test_norm_monotone_under_truncation(nsteps, cut, seed, kind):
    cut = min(cut, nsteps)
    tr = _trajectory(_p1_fluid(), nsteps, seed)
    spec = NormSpec(kind, 1.0 if kind != NormKind.LEBESGUE else 0.0, 6.0, 0.5)
    assert trajectory_norm(tr.truncate(cut), spec) <= trajectory_norm(tr, spec) * (1 + 1e-12)


@settings(max_examples=20, deadline=None)
@given(scale=st.floats(0.01, 100.0), seed=st.integers(0, 10_000))
def test_norm_homogeneous(scale, seed):
    tr = _trajectory(_p1_fluid(), 5, seed)
    scaled = Trajectory(tr.space, tr.times, scale * tr.values)
    spec = NormSpec()
    assert np.isclose(trajectory_norm(scaled, spec), scale * trajectory_norm(tr, spec), rtol=1e-10)


def test_export_round_trip(tmp_path, strip8):
    path = export_mesh(strip8, tmp_path / "mesh.txt")
    V, C, F = [], [], []
    for line in path.read_text().splitlines():
        if line.startswith("#"):
            continue
        rec = line.split()
        {"V": V, "C": C, "F": F}[rec[0]].append(rec[1:])
    verts = np.array([[float(r[1]), float(r[2])] for r in V])
    assert np.array_equal(verts, strip8.vertices)
    assert np.array_equal(np.array([[int(x) for x in r[1:4]] for r in C]), strip8.cells)
    assert np.array_equal(np.array([Subdomain[r[4]] for r in C]), strip8.cell_tags)
    assert np.array_equal(np.array([FacetTag[r[3]] for r in F]), strip8.facet_tags)
    assert np.array_equal(np.array([int(r[3]) for r in V]), strip8.vertex_master)


def test_coarse_strip_interface():
    m = build_strip_mesh(1.0, 0.5, 0.5, 4)
    iface = m.facets_tagged(FacetTag.INTERFACE)
    assert len(iface) == 4
    assert set(np.unique(m.cell_tags)) == {Subdomain.FLUID, Subdomain.SOLID}
    nrm = m.facet_normals(iface)
    assert np.allclose(nrm, [0.0, 1.0], atol=1e-14)
    assert np.abs(np.linalg.norm(nrm, axis=1) - 1.0).max() <= 1e-14


def test_nonpositive_dimension_message():
    with pytest.raises(ValueError, match="nonpositive dimension"):
        build_strip_mesh(1.0, 0.0, 0.5, 4)


def test_slobodeckij_of_constant_three(strip8):
    V = FunctionSpace(strip8, 2)
    assert slobodeckij_seminorm(Field(V, np.full(V.ndofs, 3.0)), 0.5, 2.0) == 0.0


def _grid_seminorm_sq(f, n, s, q):
    """Independent midpoint double sum on a uniform square grid of the unit square."""
    h = 1.0 / n
    c = (np.arange(n) + 0.5) * h
    X, Y = np.meshgrid(c, c, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel()], 1)
    v = f(pts[:, 0], pts[:, 1])
    total = 0.0
    for i in range(len(pts)):
        d = np.hypot(*(pts - pts[i]).T)
        d[i] = np.inf
        total += (np.abs(v - v[i]) ** q / d ** (2 + s * q)).sum() * h ** 4
    return total


def test_slobodeckij_step_against_brute_force():
    n = 16
    h = 1.0 / n
    ramp = lambda x, y: np.clip((x - 0.5) / (2 * h) + 0.5, 0.0, 1.0)
    V = FunctionSpace(build_strip_mesh(1.0, 0.5, 0.5, n, periodic=False), 1)
    fem = slobodeckij_seminorm(Field(V, V.interpolate(ramp)), 0.5, 2.0) ** 2
    oracle = _grid_seminorm_sq(ramp, 4 * n, 0.5, 2.0)
    assert abs(fem - oracle) / oracle <= 0.05


def test_zero_trajectory_norm(strip8):
    V = FunctionSpace(strip8, 2, Subdomain.SOLID)
    tr = Trajectory(V, np.linspace(0, 1, 4), np.zeros((4, 2 * V.ndofs)), 2)
    for kind in NormKind:
        s = 0.5 if kind == NormKind.SLOBODECKIJ else 1.0
        assert trajectory_norm(tr, NormSpec(kind, s, 6.0, 0.5)) == 0.0


def test_ramp_temporal_seminorm_direct_sum(strip8):
    q = 6.0
    r = 0.5 - 1.0 / (2 * q)
    V = FunctionSpace(strip8, 2, Subdomain.FLUID)
    f0 = V.interpolate(lambda x, y: np.sin(2 * np.pi * x) * (1 + y))
    t = np.linspace(0.0, 0.2, 9)
    tr = Trajectory(V, t, t[:, None] * f0[None, :])
    lq = float((np.abs(V.eval(f0)) ** q * V.weights).sum())
    dt = t[1] - t[0]
    w = np.full(len(t), dt)
    w[0] = w[-1] = dt / 2
    direct = 0.0
    for i in range(len(t)):
        for j in range(len(t)):
            if i != j:
                gap = abs(t[i] - t[j])
                direct += w[i] * w[j] * gap ** q * lq / gap ** (1 + r * q)
    assert abs(temporal_seminorm(tr, r, q) - direct ** (1 / q)) <= 1e-10
