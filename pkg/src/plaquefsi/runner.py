"""Scenario execution, deterministic output files and experiment drivers."""

from __future__ import annotations

import logging
import os
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import OUTPUT_ROOT_ENV, Initial, RunConfig
from .coupling import (COMPONENTS, CompatibilityError, CoupledProblem, InitialData,
                       PicardReport, StateW, prepare_initial)
from .fem import FunctionSpace
from .kinematics import InvalidDeformation
from .manufactured import StokesManufactured
from .materials import EnergyDensity
from .mesh import build_strip_mesh, export_mesh
from .solid import ElasticSolver

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
EXIT_OK, EXIT_ABORT, EXIT_NO_CONTRACTION = 0, 1, 2
STUDIES = ("space-convergence", "time-convergence", "T-sweep", "kappa-sweep", "eigen")

DIAGNOSTIC_COLUMNS = {
    "window": "time window index",
    "step": "time level within the window",
    "time": "absolute time",
    "strain_sup": "max |F - I| over both subdomains (spectral norm)",
    "inverse_strain_sup": "max |F^-1 - I| over both subdomains",
    "piola_residual": "L2 norm of the weak divergence of J F^-T in the solid",
    "min_g": "minimum nodal growth metric",
    "max_elastic_volume_defect": "max |det(F/g) - 1| in the solid",
    "min_c": "minimum nodal concentration, both sides",
    "min_cstar": "minimum nodal foam-cell concentration",
    "fluid_div_residual": "L2 norm of the projected F^-T : grad v in the fluid",
    "solid_constraint_residual": "L2 norm of the projected solid volume constraint",
    "fluid_jacobian_defect": "max |det F - 1| of the fluid displacement",
    "mass_fluid": "integral of the fluid concentration",
    "mass_solid": "integral of the solid concentration",
}


# ------------------------------------------------------------ initial data

def _bump(x, y, cx, cy, radius):
    r2 = ((x - cx) ** 2 + (y - cy) ** 2) / radius ** 2
    return np.where(r2 < 1.0, np.exp(1.0 - 1.0 / np.maximum(1.0 - r2, 1e-300)), 0.0)


def initial_fields(problem: CoupledProblem, init: Initial) -> dict[str, np.ndarray]:
    """Raw (unprepared) initial fields for a named preset.

    ``baseline``: flow from the stream function ``A sin(k x) (y (y + H_f))^2``,
    interface pressure ``A cos(k x)``, a uniform concentration background with a
    compactly supported bump in the fluid, no foam cells and unit growth.
    ``A`` is ``amplitude * traction_scale``, so the initial interface traction
    scales linearly with ``traction_scale``.  ``rest``: all zero, unit growth.
    """
    mesh = problem.mesh
    fl, ce = problem.fluid, problem.cells
    zero_s = np.zeros(ce.ns)
    if init.preset == "rest":
        return dict(v_f0=np.zeros(2 * fl.V.ndofs), c0=np.zeros(ce.nf + ce.ns),
                    cstar0=zero_s, g0=zero_s + 1.0, p_f0=np.zeros(fl.Q.ndofs))
    L, H = mesh.length, mesh.height_fluid
    k = 2.0 * np.pi / L
    A = init.amplitude * init.traction_scale
    v = fl.V.interpolate(lambda x, y: (A * np.sin(k * x) * 2 * y * (y + H) * (2 * y + H),
                                       -A * k * np.cos(k * x) * (y * (y + H)) ** 2), 2)
    p = fl.Q.interpolate(lambda x, y: A * np.cos(k * x) + 0.0 * y)
    radius = 0.3 * min(H, L)
    c0 = ce.interpolate(
        lambda x, y: init.background + init.bump * _bump(x, y, 0.5 * L, -0.5 * H, radius),
        lambda x, y: init.background + 0.0 * x)
    return dict(v_f0=v, c0=c0, cstar0=zero_s, g0=zero_s + 1.0, p_f0=p)


def build_problem(cfg: RunConfig) -> CoupledProblem:
    g = cfg.geometry
    mesh = build_strip_mesh(g.L, g.H_f, g.H_s, g.n)
    return CoupledProblem(mesh, cfg.physical(), cfg.time.dt, cfg.nsteps // cfg.time.windows)


def prepare(problem: CoupledProblem, cfg: RunConfig) -> InitialData:
    raw = initial_fields(problem, cfg.initial)
    return prepare_initial(problem, kappa=cfg.initial.kappa, **raw)


# ------------------------------------------------------------ run

@dataclass
class WindowResult:
    index: int
    report: PicardReport
    residuals: dict[str, float] = field(default_factory=dict)
    diagnostics: dict[str, np.ndarray] = field(default_factory=dict)
    state: StateW | None = None
    initial: InitialData | None = None


@dataclass
class RunResult:
    exit_code: int
    status: str
    message: str = ""
    windows: list[WindowResult] = field(default_factory=list)
    smallness: float = 0.0
    directory: Path | None = None

    @property
    def factors(self) -> list[float]:
        return [q for w in self.windows for q in w.report.factors]

    @property
    def max_factor(self) -> float:
        return max(self.factors, default=0.0)

    @property
    def iterations(self) -> int:
        return sum(w.report.iterations for w in self.windows)

    @property
    def residuals(self) -> dict[str, float]:
        out: dict[str, float] = {}
        for w in self.windows:
            for k, v in w.residuals.items():
                out[k] = max(out.get(k, 0.0), v)
        return out

    def positivity(self) -> dict[str, float]:
        keys = {"min_c": np.inf, "min_cstar": np.inf, "min_g": np.inf}
        for w in self.windows:
            for k in keys:
                if k in w.diagnostics:
                    keys[k] = min(keys[k], float(w.diagnostics[k].min()))
        return {k: (v if np.isfinite(v) else float("nan")) for k, v in keys.items()}


def resolve_output(directory: str | Path) -> Path:
    """Relative output paths resolve under ``$PLAQUEFSI_OUTPUT_ROOT`` when set."""
    p = Path(directory)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not p.is_absolute():
        p = Path(root) / p
    return p


def execute(cfg: RunConfig, keep_states: bool = False,
            problem: CoupledProblem | None = None) -> RunResult:
    """Solve the configured scenario window by window without writing files."""
    problem = problem or build_problem(cfg)
    result = RunResult(EXIT_OK, "converged")
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            w0 = prepare(problem, cfg)
        for c in caught:
            log.warning("%s", c.message)
        result.smallness = w0.smallness
        for k in range(cfg.time.windows):
            state, report = problem.picard_solve(w0, cfg.picard.tol, cfg.picard.max_iter)
            win = WindowResult(k, report, initial=w0)
            result.windows.append(win)
            if not report.converged:
                result.status, result.message = report.status, report.message
                result.exit_code = EXIT_NO_CONTRACTION
                break
            win.residuals = problem.converged_residuals(state, w0)
            win.diagnostics = problem.step_diagnostics(state, w0)
            m = np.array([problem.cells.masses(problem.cells.join(cf, cs)) for cf, cs in
                          zip(state.c_f.values, state.c_s.values)])
            win.diagnostics["mass_fluid"], win.diagnostics["mass_solid"] = m[:, 0], m[:, 1]
            win.state = state if keep_states else None
            if k + 1 < cfg.time.windows:
                w0 = problem.restart(state, w0)
    except (InvalidDeformation, CompatibilityError, np.linalg.LinAlgError, ValueError,
            RuntimeError) as exc:
        result.exit_code, result.status, result.message = EXIT_ABORT, "abort", str(exc)
    return result


def run(cfg: RunConfig, directory: str | Path | None = None, keep_states: bool = False
        ) -> RunResult:
    """Run the scenario and write the artifact directory."""
    out = resolve_output(directory or cfg.output.directory)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        return RunResult(EXIT_ABORT, "abort", f"cannot create {out}: {exc.strerror}")
    problem = build_problem(cfg)
    export_mesh(problem.mesh, out / "mesh.txt")
    (out / "config.txt").write_text(cfg.to_text())
    result = execute(cfg, keep_states=True, problem=problem)
    result.directory = out
    write_outputs(problem, cfg, result, out)
    if not keep_states:
        for w in result.windows:
            w.state = None
    return result


# ------------------------------------------------------------ output writers

def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return f"{float(v):.17g}"


def _write_csv(path: Path, header_comments: list[str], columns: list[str], rows) -> None:
    lines = [f"# {c}" for c in header_comments]
    lines.append(",".join(columns))
    lines += [",".join(_fmt(v) for v in r) for r in rows]
    path.write_text("\n".join(lines) + "\n")


def _p1_on_p2(target: FunctionSpace, source: FunctionSpace, coef: np.ndarray) -> np.ndarray:
    """Values of a P1 field at the nodes of a P2 space on the same cells."""
    ref = np.array([[0, 0], [1, 0], [0, 1], [0.5, 0], [0.5, 0.5], [0, 0.5]], dtype=float)
    rows = np.arange(len(target.cells))
    vals = source.eval_points(coef, rows, np.broadcast_to(ref, (len(rows), 6, 2)))
    out = np.zeros(target.ndofs)
    out[target.cell_dofs.ravel()] = vals.ravel()
    return out


def write_outputs(problem: CoupledProblem, cfg: RunConfig, result: RunResult, out: Path) -> None:
    fl, so, ce = problem.fluid, problem.solid, problem.cells
    head = [f"plaquefsi diagnostics v{FORMAT_VERSION}"]
    head += [f"{k}: {v}" for k, v in DIAGNOSTIC_COLUMNS.items()]
    cols = list(DIAGNOSTIC_COLUMNS)
    rows = []
    fields_dir = out / "fields"
    fields_dir.mkdir(exist_ok=True)
    nw = problem.nsteps
    for win in result.windows:
        d = win.diagnostics
        if d:
            for j in range(nw + 1):
                t = (win.index * nw + j) * problem.dt
                rows.append([win.index, j, t] + [d[c][j] for c in cols[3:]])
        if win.state is not None and win.report.converged:
            _write_snapshots(problem, cfg, win, fields_dir)
    _write_csv(out / "diagnostics.csv", head, cols, rows)

    pc = ["window", "k", "increment"] + [f"increment_{c}" for c in COMPONENTS] + ["q_k"]
    prow = []
    for win in result.windows:
        r = win.report
        for i, inc in enumerate(r.increments):
            q = r.factors[i - 1] if i > 0 else float("nan")
            prow.append([win.index, i + 1, inc]
                        + [r.component_increments[i][c] for c in COMPONENTS] + [q])
    _write_csv(out / "picard.csv",
               [f"plaquefsi picard v{FORMAT_VERSION}",
                "increment: Y-surrogate norm of w^{k+1} - w^k (max over components)",
                "q_k: ratio of consecutive increments"], pc, prow)

    summary = {
        "format_version": FORMAT_VERSION,
        "status": result.status,
        "exit_code": result.exit_code,
        "message": result.message.replace("\n", " "),
        "windows": len(result.windows),
        "iterations": result.iterations,
        "max_q": result.max_factor,
        "final_increment": (result.windows[-1].report.increments[-1]
                            if result.windows and result.windows[-1].report.increments
                            else float("nan")),
        "smallness": result.smallness,
        "kappa": cfg.initial.kappa,
    }
    summary.update({f"residual_{k}": v for k, v in result.residuals.items()})
    summary.update(result.positivity())
    if cfg.geometry.n <= 16:
        summary["omega_max"] = ElasticSolver(problem.mesh, problem.energy).estimate_spectral_bound()[0]
    (out / "summary.txt").write_text(
        "".join(f"{k} = {_fmt(v)}\n" for k, v in summary.items()))


def _write_snapshots(problem: CoupledProblem, cfg: RunConfig, win: WindowResult,
                     out: Path) -> None:
    fl, so, ce = problem.fluid, problem.solid, problem.cells
    w = win.state
    nw = problem.nsteps
    Uf = problem.fluid_displacement(w, win.initial)
    for j in range(0, nw + 1, cfg.output.cadence):
        step = win.index * nw + j
        if win.index > 0 and j == 0:
            continue
        t = step * problem.dt
        v = w.v_f.values[j].reshape(2, -1)
        uf = Uf[j].reshape(2, -1)
        pf = _p1_on_p2(fl.V, fl.Q, w.p_f.values[j])
        x = fl.V.coords
        _write_csv(out / f"fluid_{step:05d}.csv", [f"time = {t:.17g}"],
                   ["node", "x", "y", "v_x", "v_y", "u_x", "u_y", "p", "c"],
                   [[i, x[i, 0], x[i, 1], v[0, i], v[1, i], uf[0, i], uf[1, i], pf[i],
                     w.c_f.values[j, i]] for i in range(fl.V.ndofs)])
        u = w.u_s.values[j].reshape(2, -1)
        ps = _p1_on_p2(so.V, so.Q, w.p_s.values[j])
        x = so.V.coords
        _write_csv(out / f"solid_{step:05d}.csv", [f"time = {t:.17g}"],
                   ["node", "x", "y", "u_x", "u_y", "p", "c", "cstar", "g"],
                   [[i, x[i, 0], x[i, 1], u[0, i], u[1, i], ps[i], w.c_s.values[j, i],
                     w.cstar.values[j, i], w.g.values[j, i]] for i in range(so.V.ndofs)])


# ------------------------------------------------------------ studies

@dataclass
class StudyResult:
    kind: str
    columns: list[str]
    rows: list[list]
    summary: str
    path: Path | None = None


def _eoc(err, ratio=2.0):
    e = np.asarray(err, dtype=float)
    out = [float("nan")]
    out += list(np.log(e[:-1] / e[1:]) / np.log(ratio))
    return out


def study(kind: str, cfg: RunConfig, directory: str | Path | None = None) -> StudyResult:
    if kind not in STUDIES:
        raise ValueError(f"unknown study {kind!r}; expected one of {STUDIES}")
    if kind == "space-convergence":
        ms = StokesManufactured(depth=cfg.geometry.H_f, length=cfg.geometry.L,
                                rho=cfg.fluid.rho, nu=cfg.fluid.nu)
        ns = [max(2, cfg.geometry.n // 4), max(4, cfg.geometry.n // 2), cfg.geometry.n]
        err = [ms.solve_error(n, 0.1, 0.2) for n in ns]
        eoc = _eoc(err)
        rows = [[n, cfg.geometry.L / n, e, q] for n, e, q in zip(ns, err, eoc)]
        res = StudyResult(kind, ["n", "h", "velocity_l2_error", "eoc"], rows,
                          f"mean EOC {np.nanmean(eoc):.3f}")
    elif kind == "time-convergence":
        ms = StokesManufactured(depth=cfg.geometry.H_f, length=cfg.geometry.L,
                                rho=cfg.fluid.rho, nu=cfg.fluid.nu, profile="sine", omega=5.0)
        dts = [0.04, 0.02, 0.01, 0.005]
        err = ms.temporal_errors(max(4, cfg.geometry.n // 4), dts, 0.4)
        eoc = _eoc(err)
        rows = [[dt, e, q] for dt, e, q in zip(dts, err, eoc)]
        res = StudyResult(kind, ["dt", "velocity_l2_error", "eoc"], rows,
                          f"mean EOC {np.nanmean(eoc):.3f}")
    elif kind == "T-sweep":
        rows = []
        for f in (0.5, 1.0, 2.0, 4.0):
            T = f * cfg.time.T
            c = cfg.with_values(time={"T": T, "windows": 1})
            r = execute(c)
            rows.append([T, r.status, r.iterations, r.max_factor])
        qs = [r[3] for r in rows]
        mono = all(b >= a for a, b in zip(qs, qs[1:]))
        for r in rows:
            r.append(int(mono))
        res = StudyResult(kind, ["T", "status", "iterations", "max_q", "monotone"], rows,
                          f"max q_k nondecreasing in T: {mono}")
    elif kind == "kappa-sweep":
        rows = []
        for s in (1.0, 5.0, 25.0):
            c = cfg.with_values(initial={"traction_scale": s},
                                picard={"max_iter": 2}, time={"windows": 1})
            r = execute(c)
            q1 = r.windows[0].report.factors[0] if r.windows and r.windows[0].report.factors \
                else float("nan")
            rows.append([s, r.status, r.smallness, q1])
        qs = [r[3] for r in rows]
        mono = all(b >= a for a, b in zip(qs, qs[1:]))
        for r in rows:
            r.append(int(mono))
        res = StudyResult(kind, ["traction_scale", "status", "smallness", "q_1", "monotone"], rows,
                          f"q_1 nondecreasing in traction: {mono}")
    else:
        g = cfg.geometry
        mesh = build_strip_mesh(g.L, g.H_f, g.H_s, min(g.n, 16))
        rows = []
        for mu in (cfg.material.mu, 2.0 * cfg.material.mu):
            om, _ = ElasticSolver(mesh, EnergyDensity(mu)).estimate_spectral_bound()
            rows.append([mu, om, om / mu])
        res = StudyResult(kind, ["mu", "omega_max", "omega_over_mu"], rows,
                          f"omega_max = {rows[0][1]:.12g} < 0: {rows[0][1] < 0}")
    if directory is not None:
        out = resolve_output(directory)
        out.mkdir(parents=True, exist_ok=True)
        res.path = out / f"study_{kind}.csv"
        _write_csv(res.path, [f"plaquefsi study {kind} v{FORMAT_VERSION}", res.summary],
                   res.columns, res.rows)
    return res
