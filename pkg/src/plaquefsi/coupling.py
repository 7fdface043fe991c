"""Global-in-time fixed-point coupling of fluid, solid, concentrations and growth.

One application of the iteration map freezes every nonlinear term at the
previous iterate and solves, in order, the fluid over all steps, the solid
per step (clamped to the time integral of the new fluid velocity), the two
concentration fields and finally the pointwise growth ODEs.

Conventions: ``F = I + grad u`` with ``(grad u)[i, j] = d_i u_j``; a matrix
field ``P`` acts on test gradients as ``P : grad phi`` and its traction on a
facet with normal ``n`` is ``n . P``.  The interface normal points from fluid
to solid.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, fields, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import cumulative_trapezoid

from .cells import OdeState, TransmissionParams, TransmissionSolver, step_odes
from .fem import (FunctionSpace, assemble_mass, assemble_tensor_form, block_diag_vector,
                  facet_basis, facet_mass, facet_rule, load_flux, load_matrix, load_scalar,
                  match_rule, node_map)
from .fluid import SaddleSolver, StokesSolver
from .kinematics import GROWTH_FLOOR, InvalidDeformation, invert_F
from .materials import EnergyDensity
from .mesh import FacetTag, Mesh
from .norms import (NormKind, NormSpec, Trajectory, _lq_power, pairwise_seminorm,
                    trajectory_norm)
from .solid import ElasticSolver, growth_integral

log = logging.getLogger(__name__)

COMPONENTS = ("v_f", "u_s", "p_f", "p_s", "c_f", "c_s", "cstar", "g")


class CompatibilityError(ValueError):
    """Initial data violate one or more compatibility conditions."""

    def __init__(self, violations: dict[str, float]):
        self.violations = violations
        names = ", ".join(f"{k} (defect {v:.3g})" for k, v in violations.items())
        super().__init__(f"initial data violate: {names}")


class SmallnessWarning(UserWarning):
    pass


@dataclass(frozen=True)
class PhysicalParams:
    rho_f: float = 1.0
    nu_f: float = 1.0
    rho_s: float = 1.0
    mu: float = 1.0
    D_f: float = 1.0
    D_s: float = 0.5
    beta: float = 0.1
    gamma: float = 0.1
    zeta: float = 1.0
    kappa: float = 1.0
    q: float = 6.0
    dim: int = 2

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name in ("zeta", "beta"):
                if v < 0:
                    raise ValueError(f"{f.name} must be nonnegative, got {v}")
            elif not v > 0:
                raise ValueError(f"{f.name} must be positive, got {v}")
        if self.q <= 1:
            raise ValueError("q must exceed 1")
        if self.dim != 2:
            raise ValueError("only the two-dimensional strip is built")


# ------------------------------------------------------------ state

@dataclass
class StateW:
    """One iterate: every unknown stored as a full trajectory."""

    v_f: Trajectory
    u_s: Trajectory
    p_f: Trajectory
    p_s: Trajectory
    c_f: Trajectory
    c_s: Trajectory
    cstar: Trajectory
    g: Trajectory

    def components(self) -> list[Trajectory]:
        return [getattr(self, n) for n in COMPONENTS]

    @property
    def times(self) -> np.ndarray:
        return self.v_f.times

    def map(self, fn) -> "StateW":
        return StateW(*[Trajectory(t.space, t.times, fn(t.values), t.ncomp)
                        for t in self.components()])

    def __sub__(self, other: "StateW") -> "StateW":
        return StateW(*[Trajectory(a.space, a.times, a.values - b.values, a.ncomp)
                        for a, b in zip(self.components(), other.components())])

    def component_norms(self, spec: NormSpec) -> dict[str, float]:
        return {n: trajectory_norm(getattr(self, n), spec) for n in COMPONENTS}


@dataclass
class InitialData:
    v_f: np.ndarray
    c: np.ndarray        # fluid and solid concentration, stacked
    cstar: np.ndarray
    g: np.ndarray
    u_s: np.ndarray
    p_s: np.ndarray
    p_f: np.ndarray      # fluid pressure field whose interface trace is the datum
    kappa: float = 1.0
    smallness: float = 0.0
    u_f: np.ndarray | None = None  # fluid displacement at the window start
    c_integral: np.ndarray | None = None  # nodal int_0^t c_s at the window start


@dataclass
class RhsBundle:
    """Linearization data evaluated from one iterate at every time node.

    Volume terms live at cell quadrature points, interface and outer terms at
    facet quadrature points, ODE terms at solid nodes, and the clamped
    displacement at interface nodes.
    """

    Kt_f: np.ndarray
    Kt_s: np.ndarray
    G_f: np.ndarray
    G_s: np.ndarray
    H_f1: np.ndarray
    H_s1: np.ndarray
    H2: np.ndarray
    Ft_f: np.ndarray
    Ft_s: np.ndarray
    F1_s: np.ndarray     # non-divergence part of the solid concentration source
    F2_f: np.ndarray
    F2_s: np.ndarray
    F3: np.ndarray
    F4: np.ndarray
    F5: np.ndarray

    def max_abs(self) -> dict[str, float]:
        return {f.name: float(np.abs(getattr(self, f.name)).max(initial=0.0))
                for f in fields(self)}


# ------------------------------------------------------------ pointwise algebra

def _t(A):
    return np.swapaxes(A, -1, -2)


def _traction(n: np.ndarray, P: np.ndarray) -> np.ndarray:
    """``n . P`` with ``n`` broadcast over leading axes."""
    return np.einsum("...i,...ij->...j", n, P)


def fluid_piola(F, gv, pi, nu):
    """``F^{-T} T`` with ``T = -pi I + nu (F^{-1} grad v + grad v^T F^{-T})``."""
    Fi = np.linalg.inv(F)
    T = -pi[..., None, None] * np.eye(2) + nu * (Fi @ gv + _t(gv) @ _t(Fi))
    return _t(Fi) @ T


def fluid_remainder(F, gv, pi, nu):
    """Nonlinear part ``K_f`` of the fluid stress (Piola stress minus its linear part)."""
    I = np.eye(2)
    Fi = np.linalg.inv(F)
    E = _t(Fi) - I
    S = Fi @ gv + _t(gv) @ _t(Fi)
    return (-pi[..., None, None] * E + nu * E @ S
            + nu * ((Fi - I) @ gv + _t(gv) @ E))


def solid_piola(energy: EnergyDensity, F, pi, g, dim=2):
    """``-g^d pi F^{-T} + g^{d-1} DW(F / g)``."""
    gd = g[..., None, None]
    return (-(gd ** dim) * pi[..., None, None] * _t(np.linalg.inv(F))
            + gd ** (dim - 1) * energy.dw(F / gd))


def solid_remainder(energy: EnergyDensity, F, pi, g, g0, dim=2, npts=32):
    """Nonlinear part ``K_s`` of the solid stress, term by term."""
    I = np.eye(2)
    m = dim - 1
    pI = pi[..., None, None] * I
    gd, g0d = g[..., None, None], g0[..., None, None]
    dw = energy.dw(F)
    return (-(gd ** dim) * pi[..., None, None] * (_t(np.linalg.inv(F)) - I)
            - (gd ** dim - g0d ** dim) * pI
            - (g0d ** dim - 1.0) * pI
            - dw * (g0d ** m - gd ** m)
            - dw * (1.0 - g0d ** m)
            - gd ** m * (dw - energy.dw(F / gd))
            + energy.remainder(F, npts))


def diffusion_metric(F):
    """``F^{-T} F^{-1}``: pulls the spatial diffusion back to the reference frame."""
    Fi = np.linalg.inv(F)
    return _t(Fi) @ Fi


# ------------------------------------------------------------ problem

@dataclass
class PicardReport:
    status: str                       # converged | no-contraction | max-iter
    iterations: int
    increments: list[float] = field(default_factory=list)
    component_increments: list[dict[str, float]] = field(default_factory=list)
    factors: list[float] = field(default_factory=list)
    message: str = ""

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    @property
    def max_factor(self) -> float:
        return max(self.factors) if self.factors else 0.0


class CoupledProblem:
    """Discrete coupled system on a strip mesh with a uniform time grid."""

    def __init__(self, mesh: Mesh, params: PhysicalParams, dt: float, nsteps: int,
                 norm: NormSpec | None = None, remainder_points: int = 4):
        if nsteps < 1:
            raise ValueError("need at least one time step")
        self.mesh, self.params, self.dt, self.nsteps = mesh, params, dt, nsteps
        self.norm = norm or NormSpec(NormKind.ANISOTROPIC, s=1.0, q=params.q, r=0.5)
        self.remainder_points = remainder_points
        self.energy = EnergyDensity(params.mu)
        self.fluid = StokesSolver(mesh, params.rho_f, params.nu_f, dt)
        self.solid = ElasticSolver(mesh, self.energy)
        self.cells = TransmissionSolver(
            mesh, TransmissionParams(params.D_f, params.D_s, params.zeta, params.beta,
                                     params.gamma, params.rho_s), dt)
        fl, so, ce = self.fluid, self.solid, self.cells
        if not np.array_equal(so.V.global_nodes, ce.Vs.global_nodes):
            raise AssertionError("solid displacement and concentration nodes differ")
        # interface correspondences (solid interface order)
        self.s_iface = so.iface_nodes
        self.f_iface = node_map(so.V, fl.V, self.s_iface)
        # facet rules sharing the fluid interface points
        self.rule_vf = fl.iface_rule
        self.rule_qf = match_rule(fl.Q, self.rule_vf)
        self.rule_vs = match_rule(so.V, self.rule_vf)
        self.rule_qs = match_rule(so.Q, self.rule_vf)
        self.rule_cf = match_rule(ce.Vf, self.rule_vf)
        self.rule_cs = match_rule(ce.Vs, self.rule_vf)
        self.outer_vs = so.outer_rule
        self.outer_qs = match_rule(so.Q, self.outer_vs)
        self.outer_cs = match_rule(ce.Vs, self.outer_vs)
        self.n_iface = self.rule_vf.normals[:, None, :]
        self.n_outer = self.outer_vs.normals[:, None, :]
        self.times = dt * np.arange(nsteps + 1)
        self._iface_mass = None

    # ---------------------------------------------------- evaluation helpers
    @staticmethod
    def _at(space: FunctionSpace, rule, coef, ncomp=1, grad=False):
        if grad:
            return space.eval_points_grad(coef, rule.rows, rule.xi, ncomp)
        return space.eval_points(coef, rule.rows, rule.xi, ncomp)

    def fluid_displacement(self, w: StateW, w0: InitialData) -> np.ndarray:
        U = cumulative_trapezoid(w.v_f.values, dx=self.dt, axis=0, initial=0.0)
        if w0.u_f is not None:
            U = U + w0.u_f
        return U

    def growth_history(self, w: StateW, w0: InitialData) -> np.ndarray:
        """``int_0^t c_s`` at solid quadrature points, including earlier windows."""
        Ic = growth_integral(self.cells.Vs.eval(w.c_s.values), self.dt)
        if w0.c_integral is not None:
            Ic = Ic + self.cells.Vs.eval(w0.c_integral)
        return Ic

    def restart(self, w: StateW, w0: InitialData) -> InitialData:
        """Initial data for the next window from the end of ``w``."""
        ce = self.cells
        ci = growth_integral(w.c_s.values, self.dt)[-1]
        if w0.c_integral is not None:
            ci = ci + w0.c_integral
        return InitialData(
            v_f=w.v_f.values[-1].copy(), c=ce.join(w.c_f.values[-1], w.c_s.values[-1]),
            cstar=w.cstar.values[-1].copy(), g=w.g.values[-1].copy(),
            u_s=w.u_s.values[-1].copy(), p_s=w.p_s.values[-1].copy(),
            p_f=w.p_f.values[-1].copy(), kappa=w0.kappa, smallness=w0.smallness,
            u_f=self.fluid_displacement(w, w0)[-1].copy(), c_integral=ci)

    def rest_state(self, w0: InitialData) -> StateW:
        """Zero fields with unit growth; the iteration map's zero-data point."""
        def traj(space, ncomp=1, fill=0.0):
            return Trajectory(space, self.times,
                              np.full((self.nsteps + 1, ncomp * space.ndofs), fill), ncomp)
        fl, so, ce = self.fluid, self.solid, self.cells
        return StateW(traj(fl.V, 2), traj(so.V, 2), traj(fl.Q), traj(so.Q),
                      traj(ce.Vf), traj(ce.Vs), traj(ce.Vs), traj(ce.Vs, fill=1.0))

    # ---------------------------------------------------- right-hand sides
    def assemble_rhs(self, w: StateW, w0: InitialData) -> RhsBundle:
        p = self.params
        fl, so, ce = self.fluid, self.solid, self.cells
        d = p.dim
        Uf = self.fluid_displacement(w, w0)

        # fluid volume terms
        Ff = np.eye(2) + fl.V.eval_grad(Uf, 2)
        invert_F(Ff, cells=fl.V.cells)
        gv = fl.V.eval_grad(w.v_f.values, 2)
        pf = fl.Q.eval(w.p_f.values)
        Kt_f = fluid_remainder(Ff, gv, pf, p.nu_f)
        G_f = -np.einsum("...ij,...ij->...", _t(np.linalg.inv(Ff)) - np.eye(2), gv)

        # solid volume terms
        Fs = np.eye(2) + so.V.eval_grad(w.u_s.values, 2)
        invert_F(Fs, cells=so.V.cells)
        ps = so.Q.eval(w.p_s.values)
        gq = ce.Vs.eval(w.g.values)
        g0q = np.broadcast_to(ce.Vs.eval(w0.g), gq.shape)
        Kt_s = solid_remainder(self.energy, Fs, ps, gq, g0q, d, self.remainder_points)
        gu = so.V.eval_grad(w.u_s.values, 2)
        G_s = -np.einsum("...ij,...ij->...", _t(np.linalg.inv(Fs)) - np.eye(2), gu)

        # interface tractions, evaluated from both sides at shared points
        Ff_g = np.eye(2) + self._at(fl.V, self.rule_vf, Uf, 2, True)
        Kf_g = fluid_remainder(Ff_g, self._at(fl.V, self.rule_vf, w.v_f.values, 2, True),
                               self._at(fl.Q, self.rule_qf, w.p_f.values), p.nu_f)
        Fs_g = np.eye(2) + self._at(so.V, self.rule_vs, w.u_s.values, 2, True)
        g_g = self._at(ce.Vs, self.rule_cs, w.g.values)
        Ks_g = solid_remainder(self.energy, Fs_g, self._at(so.Q, self.rule_qs, w.p_s.values),
                               g_g, np.broadcast_to(self._at(ce.Vs, self.rule_cs, w0.g),
                                                    g_g.shape), d, self.remainder_points)
        H_f1 = _traction(self.n_iface, -Kf_g + Ks_g)

        Fs_o = np.eye(2) + self._at(so.V, self.outer_vs, w.u_s.values, 2, True)
        g_o = self._at(ce.Vs, self.outer_cs, w.g.values)
        Ks_o = solid_remainder(self.energy, Fs_o, self._at(so.Q, self.outer_qs, w.p_s.values),
                               g_o, np.broadcast_to(self._at(ce.Vs, self.outer_cs, w0.g),
                                                    g_o.shape), d, self.remainder_points)
        H2 = -_traction(self.n_outer, Ks_o)

        # clamped interface displacement from the fluid velocity history
        vg = w.v_f.values.reshape(self.nsteps + 1, 2, -1)[:, :, self.f_iface]
        H_s1 = (w0.u_s.reshape(2, -1)[:, self.s_iface][None]
                + cumulative_trapezoid(vg, dx=self.dt, axis=0, initial=0.0))
        H_s1 = np.swapaxes(H_s1, 1, 2)

        # concentration terms
        gcf = ce.Vf.eval_grad(w.c_f.values)
        gcs = ce.Vs.eval_grad(w.c_s.values)
        Af = diffusion_metric(Ff)
        As = diffusion_metric(Fs)
        Ft_f = p.D_f * np.einsum("...ij,...j->...i", Af - np.eye(2), gcf)
        Ft_s = p.D_s * np.einsum("...ij,...j->...i", As - np.eye(2), gcs)
        cs = ce.Vs.eval(w.c_s.values)
        grad_g = ce.Vs.eval_grad(w.g.values)
        F1_s = (-p.beta * cs * (1.0 + p.gamma / p.rho_s * cs)
                + d * np.einsum("...i,...i->...", grad_g / gq[..., None],
                                p.D_s * np.einsum("...ij,...j->...i", As, gcs)))

        jump = (self._at(ce.Vs, self.rule_cs, w.c_s.values)
                - self._at(ce.Vf, self.rule_cf, w.c_f.values))
        Af_g = diffusion_metric(Ff_g)
        As_g = diffusion_metric(Fs_g)
        n = self.n_iface
        Ftf_g = p.D_f * np.einsum("...ij,...j->...i", Af_g - np.eye(2),
                                  self._at(ce.Vf, self.rule_cf, w.c_f.values, grad=True))
        Fts_g = p.D_s * np.einsum("...ij,...j->...i", As_g - np.eye(2),
                                  self._at(ce.Vs, self.rule_cs, w.c_s.values, grad=True))
        F2_f = p.zeta * jump - (Ftf_g * n).sum(-1)
        F2_s = p.zeta * jump - (Fts_g * n).sum(-1)
        Fts_o = p.D_s * np.einsum("...ij,...j->...i", diffusion_metric(Fs_o) - np.eye(2),
                                  self._at(ce.Vs, self.outer_cs, w.c_s.values, grad=True))
        F3 = -(Fts_o * self.n_outer).sum(-1)

        a = p.gamma * p.beta / p.rho_s
        csn = w.c_s.values
        F4 = -a * csn * (w.cstar.values - w0.cstar)
        F5 = a / d * csn * (w.g.values - w0.g)
        return RhsBundle(Kt_f, Kt_s, G_f, G_s, H_f1, H_s1, H2, Ft_f, Ft_s, F1_s,
                         F2_f, F2_s, F3, F4, F5)

    # ---------------------------------------------------- iteration map
    def solid_interface_load(self, u_s: np.ndarray, p_s: np.ndarray, Kt_s: np.ndarray
                             ) -> np.ndarray:
        """Fluid-side dual of the traction the solid exerts on the interface.

        Lifted from the solid residual ``int (sigma(u, p) + K_s) : grad phi`` on
        interface rows, which equals ``-int_Gamma n . P_s . phi``.
        """
        so, fl = self.solid, self.fluid
        r = so.A @ u_s + so.B.T @ p_s + load_matrix(so.V, Kt_s)
        out = np.zeros(2 * fl.V.ndofs)
        ns, nf = so.V.ndofs, fl.V.ndofs
        for k in range(2):
            out[k * nf + self.f_iface] = -r[k * ns + self.s_iface]
        return out

    def apply_map(self, w: StateW, w0: InitialData, bundle: RhsBundle | None = None) -> StateW:
        """One application of the fixed-point map to the iterate ``w``."""
        p = self.params
        fl, so, ce = self.fluid, self.solid, self.cells
        b = bundle if bundle is not None else self.assemble_rhs(w, w0)
        N = self.nsteps

        def fluid_load(j):
            return (fl.divergence_form_load(b.Kt_f[j])
                    + self.solid_interface_load(w.u_s.values[j], w.p_s.values[j], b.Kt_s[j]))

        sol = fl.solve(w0.v_f, N, fluid_load, lambda j: fl.div_load(b.G_f[j]), p0=w0.p_f)
        V = sol.velocity.values

        vg = V.reshape(N + 1, 2, -1)[:, :, self.f_iface]
        clamp = (w0.u_s.reshape(2, -1)[:, self.s_iface][None]
                 + cumulative_trapezoid(vg, dx=self.dt, axis=0, initial=0.0))
        Ic = self.growth_history(w, w0)
        U = np.zeros((N + 1, 2 * so.V.ndofs))
        P = np.zeros((N + 1, so.Q.ndofs))
        U[0], P[0] = w0.u_s, w0.p_s
        coef = p.gamma * p.beta / p.rho_s
        for j in range(1, N + 1):
            es = so.solve(so.divergence_form_load(b.Kt_s[j]),
                          so.div_load(b.G_s[j] + coef * Ic[j]), clamp[j].T)
            U[j], P[j] = es.displacement, es.pressure

        def cell_load(k, _ck):
            j = k + 1
            cj = ce.join(w.c_f.values[j], w.c_s.values[j])
            return (ce.transmission_load(cj) + ce.flux_load(b.Ft_f[j], b.Ft_s[j])
                    + ce.source_load(None, b.F1_s[j]))

        cf, cs = ce.solve(w0.c, N, cell_load)

        Cst = np.zeros((N + 1, ce.ns))
        G = np.zeros((N + 1, ce.ns))
        state = OdeState(np.array(w0.cstar, dtype=float), np.array(w0.g, dtype=float))
        Cst[0], G[0] = state.cstar, state.g
        for j in range(1, N + 1):
            state = step_odes(state, cs.values[j], self.dt, p.beta, p.gamma, p.rho_s, p.dim)
            Cst[j], G[j] = state.cstar, state.g

        t = self.times
        return StateW(sol.velocity, Trajectory(so.V, t, U, 2), sol.pressure,
                      Trajectory(so.Q, t, P), cf, cs, Trajectory(ce.Vs, t, Cst),
                      Trajectory(ce.Vs, t, G))

    def picard_solve(self, w0: InitialData, tol: float = 1e-8, max_iter: int = 30,
                     divergence_factor: float = 1e3) -> tuple[StateW, PicardReport]:
        """Iterate the fixed-point map from the rest state until the increment
        norm drops below ``tol``; reports contraction factors ``q_k``."""
        report = PicardReport("max-iter", 0)
        w = self.apply_map(self.rest_state(w0), w0)
        for k in range(1, max_iter + 1):
            try:
                w_new = self.apply_map(w, w0)
            except InvalidDeformation as exc:
                if report.factors and report.factors[-1] >= 1.0:
                    report.status = "no-contraction"
                    report.message = f"iterates left the admissible regime: {exc}"
                    return w, report
                raise
            diff = w_new - w
            comps = diff.component_norms(self.norm)
            inc = max(comps.values())
            report.iterations = k
            report.increments.append(inc)
            report.component_increments.append(comps)
            if len(report.increments) > 1:
                prev = report.increments[-2]
                report.factors.append(inc / prev if prev > 0 else 0.0)
            log.info("picard %d increment %.3e", k, inc)
            w = w_new
            if not np.isfinite(inc) or inc > divergence_factor * report.increments[0]:
                report.status = "no-contraction"
                report.message = "increments grow: no contraction at this horizon"
                return w, report
            if inc < tol:
                if report.factors and max(report.factors) >= 1.0:
                    report.status = "no-contraction"
                    report.message = "converged but some factor q_k >= 1"
                else:
                    report.status = "converged"
                return w, report
        if report.factors and report.factors[-1] >= 1.0:
            report.status = "no-contraction"
            report.message = f"no contraction at this horizon after {max_iter} iterations"
        else:
            report.message = f"tolerance not reached in {max_iter} iterations"
        return w, report

    # ---------------------------------------------------- residuals
    def _interface_mass(self):
        if self._iface_mass is None:
            fl = self.fluid
            Mg = facet_mass(fl.V, self.rule_vf, fl.V, self.rule_vf).tocsr()
            nodes = self.f_iface
            self._iface_mass = spla.splu(sp.csc_matrix(Mg[nodes][:, nodes]))
        return self._iface_mass

    def converged_residuals(self, w: StateW, w0: InitialData) -> dict[str, float]:
        """Residuals of the full nonlinear system in discrete dual ``L^2`` norms.

        Each entry is the maximum over time levels ``t_1 .. t_N``.  The
        nonlinear stresses and fluxes are assembled directly from their
        definitions, independently of the linearization bundle.
        """
        p = self.params
        fl, so, ce = self.fluid, self.solid, self.cells
        N, dt, d = self.nsteps, self.dt, p.dim
        Uf = self.fluid_displacement(w, w0)

        Mf_v = block_diag_vector(assemble_mass(fl.V)).tocsr()
        Ms_v = block_diag_vector(assemble_mass(so.V)).tocsr()
        f_rows = fl.system.free
        s_rows = np.setdiff1d(np.arange(2 * so.V.ndofs), so.fixed)
        lu_f = spla.splu(sp.csc_matrix(Mf_v[f_rows][:, f_rows]))
        lu_s = spla.splu(sp.csc_matrix(Ms_v[s_rows][:, s_rows]))
        lu_qf = spla.splu(assemble_mass(fl.Q).tocsc())
        lu_qs = spla.splu(assemble_mass(so.Q).tocsc())
        lu_cf = spla.splu(ce.Mf.tocsc())
        lu_cs = spla.splu(ce.Ms.tocsc())
        lu_g = self._interface_mass()

        def dual(lu, r):
            return float(np.sqrt(max(r @ lu.solve(r), 0.0)))

        def l2_s(v):
            return float(np.sqrt(max(v @ (ce.Ms @ v), 0.0)))

        Ic = self.growth_history(w, w0)
        jump_rule = lambda j: (self._at(ce.Vs, self.rule_cs, w.c_s.values[j])
                               - self._at(ce.Vf, self.rule_cf, w.c_f.values[j]))
        a = p.gamma * p.beta / p.rho_s
        nf, ns = fl.V.ndofs, so.V.ndofs
        Mg = facet_mass(fl.V, self.rule_vf, fl.V, self.rule_vf).tocsr()
        Mg = Mg[self.f_iface][:, self.f_iface]
        keys = ("fluid_momentum", "fluid_divergence", "solid_equilibrium",
                "traction_balance", "solid_constraint", "velocity_continuity",
                "concentration_fluid", "concentration_solid", "ode_cstar", "ode_g")
        out = dict.fromkeys(keys, 0.0)
        for j in range(1, N + 1):
            Ff = np.eye(2) + fl.V.eval_grad(Uf[j], 2)
            gv = fl.V.eval_grad(w.v_f.values[j], 2)
            Pf = fluid_piola(Ff, gv, fl.Q.eval(w.p_f.values[j]), p.nu_f)
            Fs = np.eye(2) + so.V.eval_grad(w.u_s.values[j], 2)
            gq = ce.Vs.eval(w.g.values[j])
            Ps = solid_piola(self.energy, Fs, so.Q.eval(w.p_s.values[j]), gq, d)

            rf = (p.rho_f / dt * (Mf_v @ (w.v_f.values[j] - w.v_f.values[j - 1]))
                  + load_matrix(fl.V, Pf))
            rs = load_matrix(so.V, Ps)
            rg = np.stack([rf[k * nf + self.f_iface] + rs[k * ns + self.s_iface]
                           for k in range(2)])
            for k in range(2):
                rf[k * nf + self.f_iface] = rg[k]
            out["fluid_momentum"] = max(out["fluid_momentum"], dual(lu_f, rf[f_rows]))
            out["solid_equilibrium"] = max(out["solid_equilibrium"], dual(lu_s, rs[s_rows]))
            out["traction_balance"] = max(out["traction_balance"],
                                          np.sqrt(sum(dual(lu_g, rg[k]) ** 2 for k in range(2))))

            divf = np.einsum("...ij,...ij->...", _t(np.linalg.inv(Ff)), gv)
            out["fluid_divergence"] = max(out["fluid_divergence"],
                                          dual(lu_qf, load_scalar(fl.Q, divf)))
            gu = so.V.eval_grad(w.u_s.values[j], 2)
            divs = np.einsum("...ij,...ij->...", _t(np.linalg.inv(Fs)), gu) - a * Ic[j]
            out["solid_constraint"] = max(out["solid_constraint"],
                                          dual(lu_qs, load_scalar(so.Q, divs)))

            vgam = w.v_f.values[j].reshape(2, -1)[:, self.f_iface]
            ugam = (w.u_s.values[j] - w.u_s.values[j - 1]).reshape(2, -1)[:, self.s_iface] / dt
            e = vgam - ugam
            out["velocity_continuity"] = max(out["velocity_continuity"],
                                             float(np.sqrt(sum(e[k] @ (Mg @ e[k]) for k in range(2)))))

            # concentrations with the interface law D A grad c . n = zeta [[c]]
            jmp = jump_rule(j)
            Af = diffusion_metric(Ff)
            As = diffusion_metric(Fs)
            gcf = ce.Vf.eval_grad(w.c_f.values[j])
            gcs = ce.Vs.eval_grad(w.c_s.values[j])
            qf = p.D_f * np.einsum("...ij,...j->...i", Af, gcf)
            qs = p.D_s * np.einsum("...ij,...j->...i", As, gcs)
            cs = ce.Vs.eval(w.c_s.values[j])
            grad_g = ce.Vs.eval_grad(w.g.values[j])
            val_f, _ = facet_basis(ce.Vf, self.rule_cf)
            val_s, _ = facet_basis(ce.Vs, self.rule_cs)
            ex_f = np.bincount(ce.Vf.cell_dofs[self.rule_cf.rows].ravel(),
                               np.einsum("fm,fm,fma->fa", self.rule_cf.weights, jmp,
                                         val_f).ravel(), ce.nf)
            ex_s = np.bincount(ce.Vs.cell_dofs[self.rule_cs.rows].ravel(),
                               np.einsum("fm,fm,fma->fa", self.rule_cs.weights, jmp,
                                         val_s).ravel(), ce.ns)
            r_cf = (ce.Mf @ (w.c_f.values[j] - w.c_f.values[j - 1]) / dt
                    + load_flux(ce.Vf, qf) - p.zeta * ex_f)
            src = (p.beta * cs * (1.0 + p.gamma / p.rho_s * cs)
                   - d * np.einsum("...i,...i->...", grad_g / gq[..., None], qs))
            r_cs = (ce.Ms @ (w.c_s.values[j] - w.c_s.values[j - 1]) / dt
                    + load_flux(ce.Vs, qs) + load_scalar(ce.Vs, src) + p.zeta * ex_s)
            out["concentration_fluid"] = max(out["concentration_fluid"], dual(lu_cf, r_cf))
            out["concentration_solid"] = max(out["concentration_solid"], dual(lu_cs, r_cs))

            csn = w.c_s.values[j]
            r4 = ((w.cstar.values[j] - w.cstar.values[j - 1]) / dt
                  - p.beta * csn * (1.0 - p.gamma / p.rho_s * w.cstar.values[j]))
            r5 = (w.g.values[j] - w.g.values[j - 1]) / dt - a / d * csn * w.g.values[j]
            out["ode_cstar"] = max(out["ode_cstar"], l2_s(r4))
            out["ode_g"] = max(out["ode_g"], l2_s(r5))
        return out

    # ---------------------------------------------------- diagnostics
    def step_diagnostics(self, w: StateW, w0: InitialData) -> dict[str, np.ndarray]:
        """Per-time-level kinematic and positivity diagnostics."""
        from .kinematics import nodal_jacobian, piola_identity_residual
        from .fem import Field
        fl, so, ce = self.fluid, self.solid, self.cells
        Uf = self.fluid_displacement(w, w0)
        rows = {k: np.zeros(self.nsteps + 1) for k in (
            "strain_sup", "inverse_strain_sup", "piola_residual", "min_g",
            "max_elastic_volume_defect", "min_c", "min_cstar", "fluid_div_residual",
            "solid_constraint_residual", "fluid_jacobian_defect")}
        p = self.params
        Ic = self.growth_history(w, w0)
        for j in range(self.nsteps + 1):
            Fs = np.eye(2) + so.V.eval_grad(w.u_s.values[j], 2)
            Ff = np.eye(2) + fl.V.eval_grad(Uf[j], 2)
            _, dg_s = invert_F(Fs, cells=so.V.cells)
            _, dg_f = invert_F(Ff, cells=fl.V.cells)
            rows["strain_sup"][j] = max(dg_s.max_strain, dg_f.max_strain)
            rows["inverse_strain_sup"][j] = max(dg_s.max_inverse_strain,
                                                dg_f.max_inverse_strain)
            u = Field(so.V, w.u_s.values[j], 2)
            Jn = nodal_jacobian(u)
            rows["piola_residual"][j] = piola_identity_residual(so.V, Fs, Jn.space.eval(Jn.coef))
            gq = ce.Vs.eval(w.g.values[j])
            Je = np.linalg.det(Fs / gq[..., None, None])
            rows["max_elastic_volume_defect"][j] = float(np.abs(Je - 1.0).max())
            rows["min_g"][j] = float(w.g.values[j].min())
            rows["min_c"][j] = float(min(w.c_f.values[j].min(), w.c_s.values[j].min()))
            rows["min_cstar"][j] = float(w.cstar.values[j].min())
            rows["fluid_jacobian_defect"][j] = float(np.abs(np.linalg.det(Ff) - 1.0).max())
            gv = fl.V.eval_grad(w.v_f.values[j], 2)
            divf = np.einsum("...ij,...ij->...", _t(np.linalg.inv(Ff)), gv)
            z = fl._mq_lu.solve(load_scalar(fl.Q, divf))
            rows["fluid_div_residual"][j] = float(np.sqrt(z @ (fl.MQ @ z)))
            gu = so.V.eval_grad(w.u_s.values[j], 2)
            divs = (np.einsum("...ij,...ij->...", _t(np.linalg.inv(Fs)), gu)
                    - p.gamma * p.beta / p.rho_s * Ic[j])
            z = so._mq_lu.solve(load_scalar(so.Q, divs))
            rows["solid_constraint_residual"][j] = float(np.sqrt(z @ (so.MQ @ z)))
        return rows


# ------------------------------------------------------------ initial data

def _rule_grad_normal(space, rule, coef):
    g = space.eval_points_grad(coef, rule.rows, rule.xi)
    return (g * rule.normals[:, None, :]).sum(-1)


def _facet_l2(rule, vals) -> float:
    return float(np.sqrt((rule.weights * vals ** 2).sum()))


def check_concentration_compatibility(problem: CoupledProblem, c0: np.ndarray,
                                      tol: float = 1e-6) -> dict[str, float]:
    """Defects of the flux compatibility conditions for the initial concentration."""
    p = problem.params
    ce = problem.cells
    cf, cs = ce.split(c0)
    rf, rs = problem.rule_cf, problem.rule_cs
    jump = ce.Vs.eval_points(cs, rs.rows, rs.xi) - ce.Vf.eval_points(cf, rf.rows, rf.xi)
    qs = p.D_s * _rule_grad_normal(ce.Vs, rs, cs)
    qf = p.D_f * _rule_grad_normal(ce.Vf, rf, cf)
    outer = problem.outer_cs
    wall = facet_rule(ce.Vf, FacetTag.WALL)
    defects = {
        "interface permeability law zeta[[c0]] = D_s grad c0_s . n": _facet_l2(rf, p.zeta * jump - qs),
        "interface flux continuity [[D grad c0]] . n = 0": _facet_l2(rf, qf - qs),
        "outer no-flux D_s grad c0_s . n = 0": _facet_l2(outer, p.D_s * _rule_grad_normal(ce.Vs, outer, cs)),
        "wall no-flux D_f grad c0_f . n = 0": _facet_l2(wall, p.D_f * _rule_grad_normal(ce.Vf, wall, cf)),
    }
    scale = max(1.0, float(np.abs(c0).max(initial=0.0)))
    return {k: v for k, v in defects.items() if v > tol * scale}


def project_velocity(problem: CoupledProblem, v: np.ndarray) -> np.ndarray:
    """Discretely divergence-free Stokes (energy) projection vanishing on interface and wall.

    The energy norm keeps boundary gradients, hence the initial interface
    traction, close to those of ``v``; a plain ``L^2`` projection would not.
    """
    fl = problem.fluid
    A = fl.A.tocsr()
    fixed = np.union1d(fl.fixed, np.concatenate([fl.iface_nodes, fl.iface_nodes + fl.V.ndofs]))
    u, _ = SaddleSolver(A, fl.B, fixed).solve(A @ v, np.zeros(fl.Q.ndofs))
    return u


def smallness_measure(problem: CoupledProblem, u: np.ndarray, p: np.ndarray) -> float:
    """Surrogate of ``|grad u|_{W^s_q} + |p|_{W^s_q}`` with ``s = 1 - 2/q``."""
    q = problem.params.q
    s = 1.0 - 2.0 / q
    so = problem.solid
    mesh = problem.mesh
    cells = so.V.cells
    pts, wts = mesh.barycenters()[cells], mesh.cell_areas()[cells]

    def wsq(space, coef, ncomp, grad):
        vals = space.eval_grad(coef, ncomp) if grad else space.eval(coef, ncomp)
        trailing = vals.ndim - 2
        bary = (space.eval_points_grad if grad else space.eval_points)(
            coef, rows, xi, ncomp)[:, 0]
        lq = float(_lq_power(space, vals, q, trailing))
        return (lq + pairwise_seminorm(bary, pts, wts, s, q) ** q) ** (1.0 / q)

    rows = np.arange(len(cells))
    xi = np.full((len(rows), 1, 2), 1.0 / 3.0)
    return wsq(so.V, u, 2, True) + wsq(so.Q, p, 1, False)


def prepare_initial(problem: CoupledProblem, v_f0: np.ndarray, c0: np.ndarray,
                    cstar0: np.ndarray, g0: np.ndarray, p_f0: np.ndarray,
                    kappa: float = 1.0, div_tol: float = 5e-2, compat_tol: float = 1e-6,
                    newton_tol: float = 1e-12, max_newton: int = 30) -> InitialData:
    """Check compatibility, project the velocity and solve the initial solid equilibrium.

    The equilibrium ``-div DW(I + grad u) + grad p = 0``, ``div u = 0`` is
    solved by Newton's method with the fluid traction on the interface and a
    traction-free outer boundary.  Rigid translations are fixed by zero-mean
    multipliers; a nonzero multiplier means the interface traction has a net
    resultant and no equilibrium exists.
    """
    fl, so, ce = problem.fluid, problem.solid, problem.cells
    p = problem.params
    v_f0 = np.asarray(v_f0, dtype=float)

    # velocity compatibility: divergence-free and vanishing on the interface
    violations = {}
    grad_norm = float(np.sqrt(((fl.V.eval_grad(v_f0, 2) ** 2).sum(axis=(-2, -1))
                               * fl.V.weights).sum()))
    div_def = fl.div_residual(v_f0, np.zeros(fl.Q.ndofs))
    if div_def > div_tol * max(grad_norm, 1e-300) and div_def > 1e-12:
        violations["divergence-free initial velocity"] = div_def
    vg = np.abs(v_f0.reshape(2, -1)[:, fl.iface_nodes]).max(initial=0.0)
    if vg > max(div_tol * np.abs(v_f0).max(initial=0.0), 1e-12):
        violations["initial velocity vanishing on the interface"] = float(vg)
    violations.update(check_concentration_compatibility(problem, c0, compat_tol))
    if violations:
        raise CompatibilityError(violations)
    v = project_velocity(problem, v_f0) if np.any(v_f0) else v_f0.copy()
    if np.min(g0) < GROWTH_FLOOR:
        raise InvalidDeformation(f"initial growth {np.min(g0):.3g} below {GROWTH_FLOOR}")

    # fluid traction n . S on the interface points
    nrm = problem.n_iface
    gv = problem._at(fl.V, problem.rule_vf, v, 2, True)
    pf = problem._at(fl.Q, problem.rule_qf, p_f0)
    S = -pf[..., None, None] * np.eye(2) + p.nu_f * (gv + _t(gv))
    t_f = _traction(nrm, S)
    traction_dual = np.concatenate([
        np.bincount(so.V.cell_dofs[problem.rule_vs.rows].ravel(),
                    np.einsum("fm,fm,fma->fa", problem.rule_vs.weights, t_f[..., k],
                              facet_basis(so.V, problem.rule_vs)[0]).ravel(), so.V.ndofs)
        for k in range(2)])

    u, pi = _solve_initial_equilibrium(problem, traction_dual, newton_tol, max_newton)
    small = smallness_measure(problem, u, pi)
    if small > kappa:
        warnings.warn(f"initial solid smallness {small:.3g} exceeds kappa={kappa}",
                      SmallnessWarning, stacklevel=2)
    return InitialData(v_f=v, c=np.asarray(c0, dtype=float), cstar=np.asarray(cstar0, float),
                       g=np.asarray(g0, float), u_s=u, p_s=pi, p_f=np.asarray(p_f0, float),
                       kappa=kappa, smallness=small)


def _solve_initial_equilibrium(problem: CoupledProblem, traction_dual: np.ndarray,
                               tol: float, max_iter: int) -> tuple[np.ndarray, np.ndarray]:
    so = problem.solid
    energy = problem.energy
    V, B = so.V, so.B
    n = 2 * V.ndofs
    M = assemble_mass(V)
    ones = np.asarray(M.sum(axis=0)).ravel()
    C = sp.csr_matrix(np.vstack([np.concatenate([ones, np.zeros(V.ndofs)]),
                                 np.concatenate([np.zeros(V.ndofs), ones])]))
    u = np.zeros(n)
    pi = np.zeros(so.Q.ndofs)
    lam = np.zeros(2)
    scale = max(np.abs(traction_dual).max(initial=0.0), 1e-300)
    prev = np.inf
    for it in range(max_iter):
        F = np.eye(2) + V.eval_grad(u, 2)
        invert_F(F, cells=V.cells)
        P = energy.dw(F) - so.Q.eval(pi)[..., None, None] * np.eye(2)
        r_u = load_matrix(V, P) + traction_dual + C.T @ lam
        r_p = B @ u
        r_c = C @ u
        res = np.concatenate([r_u, r_p, r_c])
        rmax = np.abs(res).max()
        log.debug("initial equilibrium newton %d residual %.3e", it, rmax)
        if rmax <= tol * scale or not np.any(traction_dual):
            break
        # round-off floor: quadratic convergence has stopped
        if rmax <= 1e-8 * scale and rmax > 0.5 * prev:
            break
        prev = rmax
        C4 = np.moveaxis(_d2w_tensor(energy, F), (0, 1), (-2, -1))
        KT = assemble_tensor_form(V, np.ascontiguousarray(C4))
        J = sp.bmat([[KT, B.T, C.T], [B, None, None], [C, None, None]], format="csc")
        delta = spla.spsolve(J, -res)
        u += delta[:n]
        pi += delta[n:n + so.Q.ndofs]
        lam += delta[n + so.Q.ndofs:]
    else:
        raise RuntimeError("Newton iteration for the initial solid equilibrium diverged")
    if np.abs(lam).max() > 1e-8 * scale * max(1.0, 1.0 / problem.mesh.length):
        raise CompatibilityError({"interface traction with zero net resultant": float(np.abs(lam).max())})
    return u, pi


def _d2w_tensor(energy: EnergyDensity, F: np.ndarray) -> np.ndarray:
    """``C[k, l, ..., i, j]`` with ``D^2W(F)[E_kl]_ij``."""
    out = np.empty((2, 2) + F.shape)
    for k in range(2):
        for l in range(2):
            E = np.zeros((2, 2))
            E[k, l] = 1.0
            out[k, l] = energy.d2w(F, np.broadcast_to(E, F.shape))
    return out
