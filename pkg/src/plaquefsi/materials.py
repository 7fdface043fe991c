"""Hyperelastic strain energy, its derivatives and the linearization remainder.

All evaluators broadcast over leading axes: ``F`` has shape ``(..., d, d)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation


def _t(A):
    return np.swapaxes(A, -1, -2)


def _ident(F):
    return np.broadcast_to(np.eye(F.shape[-1]), F.shape)


@dataclass(frozen=True)
class EnergyDensity:
    """Squared Green-strain energy ``W(F) = mu/4 |F^T F - I|^2``.

    The energy is a polynomial, so it is smooth on all matrices; only the
    orientation-preserving region ``det F > 0`` is admitted at runtime.
    """

    mu: float = 1.0
    dim: int = 2

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"shear modulus must be positive, got {self.mu}")

    def _check(self, F):
        F = np.asarray(F, dtype=float)
        if F.shape[-2:] != (self.dim, self.dim):
            raise ValueError(f"expected {self.dim}x{self.dim} matrices, got {F.shape}")
        if (np.linalg.det(F) <= 0).any():
            raise ValueError("det F <= 0: outside the orientation-preserving regime")
        return F

    def w(self, F) -> np.ndarray:
        F = self._check(F)
        E = _t(F) @ F - _ident(F)
        return 0.25 * self.mu * (E ** 2).sum(axis=(-2, -1))

    def dw(self, F) -> np.ndarray:
        """First Piola-type derivative ``mu F (F^T F - I)``."""
        F = self._check(F)
        return self.mu * F @ (_t(F) @ F - _ident(F))

    def d2w(self, F, A) -> np.ndarray:
        """Directional second derivative ``D^2 W(F)[A]``."""
        F = np.asarray(F, dtype=float)
        A = np.asarray(A, dtype=float)
        return self.mu * (A @ _t(F) @ F + F @ _t(A) @ F + F @ _t(F) @ A - A)

    def d2w_identity(self, A) -> np.ndarray:
        """``D^2 W(I) A = 2 mu sym A``."""
        A = np.asarray(A, dtype=float)
        return self.mu * (A + _t(A))

    @property
    def d2w_identity_tensor(self) -> np.ndarray:
        """``C[i, j, k, l]`` with ``(D^2 W(I) A)_ij = C_ijkl A_kl``."""
        d = self.dim
        I = np.eye(d)
        return self.mu * (np.einsum("ik,jl->ijkl", I, I) + np.einsum("il,jk->ijkl", I, I))

    def d3w(self, F, A, B) -> np.ndarray:
        """``D^3 W(F)[A, B]``, symmetric in ``A`` and ``B``."""
        F, A, B = (np.asarray(x, dtype=float) for x in (F, A, B))
        return self.mu * (A @ _t(B) @ F + A @ _t(F) @ B + B @ _t(A) @ F
                          + F @ _t(A) @ B + B @ _t(F) @ A + F @ _t(B) @ A)

    def remainder(self, F, npts: int = 32) -> np.ndarray:
        """Taylor remainder ``R(F) = DW(F) - D^2W(I)(F - I)`` in integral form.

        ``R(F) = int_0^1 (1 - s) D^3W(I + s(F - I))[F - I, F - I] ds`` by
        Gauss-Legendre in ``s``; the integrand is a polynomial of degree one,
        so the rule is exact.
        """
        F = self._check(F)
        H = F - _ident(F)
        x, wts = np.polynomial.legendre.leggauss(npts)
        s = 0.5 * (x + 1.0)
        wts = 0.5 * wts
        out = np.zeros_like(F)
        for si, wi in zip(s, wts):
            G = _ident(F) + si * H
            if (np.linalg.det(G) <= 0).any():
                raise ValueError("segment from I to F leaves det > 0")
            out = out + wi * (1.0 - si) * self.d3w(G, H, H)
        return out


def dist_so(F) -> np.ndarray:
    """Squared distance to SO(d) via singular values, for ``det F > 0``."""
    sig = np.linalg.svd(np.asarray(F, dtype=float), compute_uv=False)
    return ((sig - 1.0) ** 2).sum(axis=-1)


@dataclass
class AssumptionReport:
    frame_violation: float
    dw_identity_norm: float
    c1: float
    c0: float
    samples: int
    legendre_hadamard_min: float


def random_rotations(n: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    if dim == 2:
        th = rng.uniform(0, 2 * np.pi, n)
        c, s = np.cos(th), np.sin(th)
        return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)
    if dim == 3:
        return Rotation.random(n, random_state=rng).as_matrix()
    raise ValueError(f"unsupported dimension {dim}")


def check_assumptions(energy: EnergyDensity | None = None, samples: int = 1000,
                      radius: float = 0.5, seed: int = 0) -> AssumptionReport:
    """Monte Carlo and eigen-analysis checks of the material hypotheses."""
    if samples < 100:
        raise ValueError("at least 100 samples are required")
    energy = energy or EnergyDensity()
    d = energy.dim
    rng = np.random.default_rng(seed)

    A = rng.standard_normal((samples, d, d))
    A /= np.linalg.norm(A, axis=(1, 2), keepdims=True)
    tau = radius * rng.uniform(0, 1, samples)
    U = np.eye(d) + tau[:, None, None] * A
    keep = np.linalg.det(U) > 0
    R = random_rotations(samples, d, rng)
    Q = random_rotations(samples, d, rng)
    F = R[keep] @ U[keep]
    wF = energy.w(F)
    frame = float(np.max(np.abs(energy.w(Q[keep] @ F) - wF)))

    # C0: W(F) >= C0 dist^2(F, SO(d)); skip samples too close to SO(d)
    dist = dist_so(F)
    ok = dist > 1e-12
    c0 = float(np.min(wF[ok] / dist[ok])) if ok.any() else float("nan")

    C = energy.d2w_identity_tensor.reshape(d * d, d * d)
    sym_basis = []
    for i in range(d):
        for j in range(i, d):
            E = np.zeros((d, d))
            E[i, j] = E[j, i] = 1.0
            sym_basis.append(E.ravel() / np.linalg.norm(E))
    S = np.array(sym_basis).T
    c1 = float(np.linalg.eigvalsh(S.T @ (0.5 * (C + C.T)) @ S).min())

    a = rng.standard_normal((100, d))
    b = rng.standard_normal((100, d))
    ab = np.einsum("ni,nj->nij", a, b)
    lh = np.einsum("nij,nij->n", energy.d2w_identity(ab), ab)
    lh_min = float(np.min(lh / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1)) ** 2))

    dwi = float(np.abs(energy.dw(np.eye(d))).max())
    return AssumptionReport(frame, dwi, c1, c0, int(keep.sum()), lh_min)
