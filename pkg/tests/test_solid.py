import numpy as np
import pytest
import sympy as s

from plaquefsi.materials import EnergyDensity
from plaquefsi.mesh import build_strip_mesh
from plaquefsi.solid import ElasticSolver, growth_integral


@pytest.fixture(scope="module")
def solver8():
    return ElasticSolver(build_strip_mesh(1.0, 0.5, 0.5, 8))


def _manufactured(mu):
    """Divergence-free displacement from a periodic stream function, with
    the body force and outer traction of ``-div(mu(grad u + grad u^T) - p I)``."""
    x, y = s.symbols("x y")
    psi = s.sin(2 * s.pi * x) * s.cos(s.pi * y) * y ** 2
    u = [s.diff(psi, y), -s.diff(psi, x)]
    p = s.cos(2 * s.pi * x) * s.sin(y)
    X = (x, y)
    G = s.Matrix(2, 2, lambda i, j: s.diff(u[j], X[i]))
    S = -p * s.eye(2) + mu * (G + G.T)
    f = [-sum(s.diff(S[i, j], X[i]) for i in range(2)) for j in range(2)]
    h = [S[1, j] for j in range(2)]

    def lam(exprs):
        fns = [s.lambdify((x, y), e, "numpy") for e in exprs]
        return lambda P: np.stack([np.broadcast_to(fn(P[..., 0], P[..., 1]), P.shape[:-1])
                                   for fn in fns], -1)
    return lam(u), lam(f), lam(h)


def test_zero_data_gives_zero(solver8):
    sol = solver8.solve()
    assert np.abs(sol.displacement).max() == 0.0
    assert np.abs(sol.pressure).max() == 0.0


def test_manufactured_order():
    mu = 1.0
    u, f, h = _manufactured(mu)
    err = []
    for n in (8, 16, 32):
        so = ElasticSolver(build_strip_mesh(1.0, 0.5, 0.5, n), EnergyDensity(mu))
        V = so.V
        load = so.body_load(f(V.xq)) + so.traction_load(h(so.outer_rule.x))
        sol = so.solve(load, None, u(V.coords[so.iface_nodes]))
        assert sol.constraint_residual < 1e-10
        e = V.eval(sol.displacement, 2) - u(V.xq)
        err.append(np.sqrt(((e ** 2).sum(-1) * V.weights).sum()))
    eoc = np.log2(np.array(err[:-1]) / np.array(err[1:]))
    assert np.all(eoc >= 1.8), eoc


def test_resolvent_at_zero(solver8):
    f = np.ones(solver8.V.weights.shape + (2,))
    a = solver8.solve_resolvent(0.0, f)
    b = solver8.solve(solver8.body_load(f))
    assert np.allclose(a.displacement, b.displacement)
    c = solver8.solve_resolvent(3.0, f)
    assert np.abs(c.displacement).max() < np.abs(a.displacement).max()
    with pytest.raises(ValueError):
        solver8.solve_resolvent(-1.0, f)


def test_spectral_bound_negative_and_linear_in_mu():
    m = build_strip_mesh(1.0, 0.5, 0.5, 8)
    w1, _ = ElasticSolver(m, EnergyDensity(1.0)).estimate_spectral_bound()
    w2, _ = ElasticSolver(m, EnergyDensity(2.0)).estimate_spectral_bound()
    assert w1 < 0
    assert abs(w2 / w1 - 2.0) <= 2e-6
    # the clamped layer is at least as stiff as the lowest Laplace mode in y
    assert w1 < -np.pi ** 2


def test_dirichlet_values_are_imposed(solver8):
    nodes = solver8.V.coords[solver8.iface_nodes]
    vals = np.stack([0.01 * np.sin(2 * np.pi * nodes[:, 0]), np.zeros(len(nodes))], -1)
    sol = solver8.solve(dirichlet=vals)
    n = solver8.V.ndofs
    assert np.allclose(sol.displacement[solver8.iface_nodes], vals[:, 0])
    assert np.allclose(sol.displacement[n + solver8.iface_nodes], 0.0)


def test_growth_integral_trapezoid():
    c = np.array([[0.0], [1.0], [2.0], [3.0]])
    assert np.allclose(growth_integral(c, 0.5)[:, 0], [0.0, 0.25, 1.0, 2.25])


def test_growth_source_matches_div_load(solver8):
    cq = np.full(solver8.Q.weights.shape, 2.0)
    assert np.allclose(solver8.growth_source(cq, 0.5, 0.2, 2.0), solver8.div_load(0.1))


def test_growth_source_sets_volume_change(solver8):
    gamma, beta, rho, cbar, t = 0.5, 2.0, 1.0, 0.3, 0.4
    sol = solver8.solve(div_load=solver8.growth_source(np.full(solver8.Q.weights.shape, cbar * t),
                                                      gamma, beta, rho))
    area = solver8.Q.weights.sum()
    assert abs(-(solver8.B @ sol.displacement).sum() - gamma * beta / rho * cbar * t * area) <= 1e-8
    assert sol.constraint_residual <= 1e-10


def _l2(solver, u):
    return float(np.sqrt(u @ (solver.M @ u)))


def test_resolvent_large_parameter_bound(solver8):
    xq = solver8.V.xq
    f = np.stack([np.sin(2 * np.pi * xq[..., 0]), xq[..., 1] ** 2], -1)
    lam = 1e6
    u = solver8.solve_resolvent(lam, f).displacement
    fn = float(np.sqrt(((f ** 2).sum(-1) * solver8.V.weights).sum()))
    assert lam * _l2(solver8, u) <= fn * (1 + 1e-2)


@pytest.mark.parametrize("lam", [0.0, 1.0, 1e3])
def test_resolvent_zero_data(solver8, lam):
    sol = solver8.solve_resolvent(lam, np.zeros(solver8.V.xq.shape))
    assert np.abs(sol.displacement).max() == 0.0 and np.abs(sol.pressure).max() == 0.0
