import numpy as np
import pytest

from plaquefsi.fluid import StokesSolver, viscous_tensor
from plaquefsi.manufactured import StokesManufactured
from plaquefsi.mesh import FacetTag, build_strip_mesh


def test_zero_data_gives_zero(strip8):
    sol = StokesSolver(strip8, 1.0, 1.0, 0.01)
    res = sol.solve(np.zeros(2 * sol.V.ndofs), 3)
    assert np.abs(res.velocity.values).max() == 0.0
    assert np.abs(res.pressure.values).max() == 0.0


def test_wall_no_slip_and_step_residuals(strip8):
    sol = StokesSolver(strip8, 1.0, 0.5, 0.01)
    x = sol.V.xq
    f = np.stack([np.sin(2 * np.pi * x[..., 0]), np.cos(2 * np.pi * x[..., 0])], -1)
    load = sol.body_load(f)
    g = sol.div_load(0.3 * np.cos(2 * np.pi * sol.Q.xq[..., 0]))
    prev = np.zeros(2 * sol.V.ndofs)
    u, p = sol.step(prev, load, g)
    wall = sol.V.boundary_dofs(FacetTag.WALL)
    assert np.all(u[wall] == 0) and np.all(u[wall + sol.V.ndofs] == 0)
    r = sol.momentum_residual(u, p, prev, load)
    free = np.setdiff1d(np.arange(2 * sol.V.ndofs), sol.fixed)
    assert np.abs(r[free]).max() < 1e-10
    assert sol.div_residual(u, g) < 1e-12


def test_viscous_tensor_symmetric_part():
    C = viscous_tensor(2.0)
    G = np.array([[1.0, 2.0], [0.0, 3.0]])
    assert np.allclose(np.einsum("ijkl,kl->ij", C, G), 2.0 * (G + G.T))


def test_rejects_bad_parameters(strip8):
    with pytest.raises(ValueError):
        StokesSolver(strip8, 1.0, 0.0, 0.1)
    with pytest.raises(ValueError):
        StokesSolver(strip8, 1.0, 1.0, 0.1, theta=0.3)


def test_manufactured_spatial_order():
    mms = StokesManufactured()
    err = np.array([mms.solve_error(n, 0.1, 0.2) for n in (8, 16, 32)])
    eoc = np.log2(err[:-1] / err[1:])
    assert np.all(eoc >= 1.8), eoc


def test_manufactured_temporal_order():
    mms = StokesManufactured(profile="sine", omega=2 * np.pi)
    err = np.array(mms.temporal_errors(8, [0.1, 0.05, 0.025], 0.4))
    eoc = np.log2(err[:-1] / err[1:])
    assert np.all(eoc >= 0.9), eoc


def test_manufactured_step_count_guard():
    with pytest.raises(ValueError):
        StokesManufactured().march(8, 0.03, 0.1)


def test_nonperiodic_lateral_walls():
    m = build_strip_mesh(1.0, 0.5, 0.5, 8, periodic=False)
    sol = StokesSolver(m, 1.0, 1.0, 0.1)
    lat = sol.V.boundary_dofs(FacetTag.LATERAL)
    assert np.isin(lat, sol.fixed).all()


def _static_traction(sol, u, p, load=None):
    load = np.zeros(2 * sol.V.ndofs) if load is None else load
    return sol.traction_trace(u, p, u, load)


def test_traction_of_constant_pressure(strip8):
    sol = StokesSolver(strip8, 1.0, 1.0, 0.01)
    c = 2.5
    t = _static_traction(sol, np.zeros(2 * sol.V.ndofs), np.full(sol.Q.ndofs, c))
    assert np.abs(t - [0.0, -c]).max() <= 1e-10


def test_traction_of_couette_flow(strip8):
    sol = StokesSolver(strip8, 1.0, 1.0, 0.01)
    u = sol.V.interpolate(lambda x, y: (y + 0.5, 0 * x), 2)
    t = _static_traction(sol, u, np.zeros(sol.Q.ndofs))
    assert np.abs(t - [1.0, 0.0]).max() <= 1e-10


def test_traction_of_manufactured_flow_second_order():
    mf = StokesManufactured()
    T, dt = 0.3, 0.01
    errs = []
    for n in (8, 16, 32):
        sol = StokesSolver(build_strip_mesh(1.0, 0.5, 0.5, n), mf.rho, mf.nu, dt)
        vel = lambda t: sol.V.interpolate(
            lambda x, y: tuple(np.moveaxis(mf.velocity(x, y, t), -1, 0)), 2)
        p = sol.Q.interpolate(lambda x, y: mf.pressure(x, y, T))
        xq = sol.V.xq
        load = sol.body_load(mf.force(xq[..., 0], xq[..., 1], T))
        t_h = sol.traction_trace(vel(T), p, vel(T - dt), load)
        xi = sol.V.coords[sol.iface_nodes]
        exact = mf.traction(xi[:, 0], xi[:, 1], T)
        errs.append(np.abs(t_h - exact).max())
    eoc = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(eoc >= 1.8), (errs, eoc)


def test_normal_traction_keeps_flow_solenoidal(strip8):
    sol = StokesSolver(strip8, 1.0, 1.0, 0.01)
    pbar = 0.7
    h = np.broadcast_to([0.0, -pbar], sol.iface_rule.x.shape[:-1] + (2,))
    load = sol.traction_load(h)
    res = sol.solve(np.zeros(2 * sol.V.ndofs), 5, lambda k: load)
    zero = np.zeros(sol.Q.ndofs)
    assert max(sol.div_residual(u, zero) for u in res.velocity.values) <= 1e-10
