import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from plaquefsi.materials import EnergyDensity, check_assumptions, dist_so, random_rotations

near_identity = arrays(np.float64, (2, 2), elements=st.floats(-0.35, 0.35)).map(
    lambda H: np.eye(2) + H)


def _fd_gradient(w, F, h=1e-6):
    G = np.zeros_like(F)
    for i in range(2):
        for j in range(2):
            E = np.zeros_like(F)
            E[i, j] = h
            G[i, j] = (w(F + E) - w(F - E)) / (2 * h)
    return G


def test_energy_values():
    W = EnergyDensity(mu=2.0)
    assert W.w(np.eye(2)) == 0.0
    F = np.diag([2.0, 1.0])
    # E = diag(3, 0), W = mu/4 * 9
    assert np.isclose(W.w(F), 4.5)


@settings(max_examples=50, deadline=None)
@given(F=near_identity)
def test_dw_matches_finite_differences(F):
    W = EnergyDensity(mu=1.3)
    assert np.allclose(W.dw(F), _fd_gradient(W.w, F), atol=1e-7)


@settings(max_examples=50, deadline=None)
@given(F=near_identity, A=arrays(np.float64, (2, 2), elements=st.floats(-1, 1)))
def test_d2w_is_derivative_of_dw(F, A):
    W = EnergyDensity()
    h = 1e-6
    fd = (W.dw(F + h * A) - W.dw(F - h * A)) / (2 * h)
    assert np.allclose(W.d2w(F, A), fd, atol=1e-7)


@settings(max_examples=50, deadline=None)
@given(F=near_identity)
def test_remainder_identity(F):
    W = EnergyDensity(mu=0.7)
    lin = W.d2w_identity(F - np.eye(2))
    assert np.abs(W.dw(F) - lin - W.remainder(F)).max() <= 1e-12


@settings(max_examples=30, deadline=None)
@given(F=near_identity, th=st.floats(0, 2 * np.pi))
def test_frame_indifference(F, th):
    W = EnergyDensity()
    Q = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    assert abs(W.w(Q @ F) - W.w(F)) <= 1e-13


def test_d2w_identity_tensor_consistent(rng):
    W = EnergyDensity(mu=1.7)
    A = rng.standard_normal((5, 2, 2))
    C = W.d2w_identity_tensor
    assert np.allclose(np.einsum("ijkl,nkl->nij", C, A), W.d2w_identity(A))
    assert np.allclose(W.d2w(np.eye(2), A), W.d2w_identity(A))


def test_d3w_symmetric(rng):
    W = EnergyDensity()
    F = np.eye(2) + 0.2 * rng.standard_normal((2, 2))
    A, B = rng.standard_normal((2, 2, 2))
    assert np.allclose(W.d3w(F, A, B), W.d3w(F, B, A))


def test_rejects_orientation_reversal():
    W = EnergyDensity()
    with pytest.raises(ValueError):
        W.w(np.diag([1.0, -1.0]))
    with pytest.raises(ValueError):
        W.dw(np.eye(3))
    with pytest.raises(ValueError):
        EnergyDensity(mu=0.0)


def test_dist_so_vanishes_on_rotations(rng):
    R = random_rotations(10, 2, rng)
    assert np.abs(dist_so(R)).max() < 1e-24
    assert np.isclose(dist_so(np.diag([2.0, 1.0])), 1.0)
    R3 = random_rotations(5, 3, rng)
    assert np.allclose(np.linalg.det(R3), 1.0)


def test_check_assumptions_default():
    rep = check_assumptions(EnergyDensity(mu=1.0), samples=1000)
    assert rep.frame_violation <= 1e-12
    assert rep.dw_identity_norm <= 1e-14
    assert abs(rep.c1 - 2.0) <= 1e-10
    assert rep.legendre_hadamard_min > 0
    assert rep.c0 > 0
    with pytest.raises(ValueError):
        check_assumptions(samples=10)


def test_rotations_are_energy_minima(rng):
    W = EnergyDensity()
    R = random_rotations(20, 2, rng)
    assert np.abs(W.w(R)).max() < 1e-28
    assert np.abs(W.dw(np.eye(2))).max() == 0.0


def test_linearization_by_finite_differences(rng):
    W = EnergyDensity(mu=1.4)
    for _ in range(10):
        A = rng.standard_normal((2, 2))
        got = W.dw(np.eye(2) + 1e-6 * A)
        expect = 1e-6 * W.d2w_identity(A)
        assert np.linalg.norm(got - expect) <= 1e-4 * np.linalg.norm(expect)


def test_remainder_for_symmetric_strain(rng):
    W = EnergyDensity()
    S = rng.standard_normal((2, 2))
    S = 0.5 * (S + S.T)
    F = np.eye(2) + 0.3 * S / np.linalg.norm(S, 2)
    assert np.abs(W.remainder(F)).max() > 0
    assert np.linalg.norm(W.dw(F) - W.d2w_identity(F - np.eye(2)) - W.remainder(F)) <= 1e-10
    assert np.abs(W.remainder(np.eye(2))).max() == 0.0
