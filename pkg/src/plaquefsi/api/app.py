"""HTTP service around the solver: run, study, check-config and export-mesh."""

from __future__ import annotations

import math

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..config import ConfigError, RunConfig, parse_config
from ..coupling import COMPONENTS
from ..mesh import build_strip_mesh, export_mesh
from ..runner import RunResult, resolve_output, run, study
from .schemas import (CheckConfigResponse, ConfigPayload, ErrorResponse, ExportMeshRequest,
                      ExportMeshResponse, PicardIterate, RunRequest, RunResponse,
                      StudyRequest, StudyResponse)

app = FastAPI(title="plaquefsi", version=__version__)


def _config(payload: ConfigPayload) -> RunConfig:
    return parse_config(payload.config_text) if payload.config_text.strip() else RunConfig()


def _finite(x):
    return None if isinstance(x, float) and not math.isfinite(x) else x


@app.exception_handler(ConfigError)
async def _config_error(_: Request, exc: ConfigError):
    body = ErrorResponse(detail="invalid configuration", problems=exc.problems)
    return JSONResponse(status_code=400, content=body.model_dump())


@app.get("/health")
def health() -> dict[str, str]:
    return {"status": "ok", "version": __version__}


@app.post("/check-config", response_model=CheckConfigResponse)
def check_config(payload: ConfigPayload) -> CheckConfigResponse:
    try:
        cfg = _config(payload)
    except ConfigError as exc:
        return CheckConfigResponse(valid=False, problems=exc.problems)
    return CheckConfigResponse(valid=True, normalized=cfg.to_text(), nsteps=cfg.nsteps)


def run_response(result: RunResult) -> RunResponse:
    picard = []
    for w in result.windows:
        r = w.report
        for i, inc in enumerate(r.increments):
            picard.append(PicardIterate(
                window=w.index, k=i + 1, increment=inc,
                components={c: r.component_increments[i][c] for c in COMPONENTS},
                q=r.factors[i - 1] if i > 0 else None))
    return RunResponse(
        exit_code=result.exit_code, status=result.status, message=result.message,
        iterations=result.iterations, max_q=result.max_factor, factors=result.factors,
        picard=picard, residuals=result.residuals,
        positivity={k: _finite(v) for k, v in result.positivity().items()},
        smallness=result.smallness,
        output_dir=None if result.directory is None else str(result.directory))


@app.post("/run", response_model=RunResponse)
def run_endpoint(req: RunRequest) -> RunResponse:
    cfg = _config(req)
    return run_response(run(cfg, req.output_dir))


@app.post("/study", response_model=StudyResponse)
def study_endpoint(req: StudyRequest) -> StudyResponse:
    cfg = _config(req)
    res = study(req.kind, cfg, req.output_dir or cfg.output.directory)
    rows = [[_finite(float(v)) if isinstance(v, float) else v for v in r] for r in res.rows]
    return StudyResponse(kind=res.kind, columns=res.columns, rows=rows, summary=res.summary,
                         csv_path=None if res.path is None else str(res.path))


@app.post("/export-mesh", response_model=ExportMeshResponse,
          responses={400: {"model": ErrorResponse}})
def export_mesh_endpoint(req: ExportMeshRequest):
    g = _config(req).geometry
    mesh = build_strip_mesh(g.L, g.H_f, g.H_s, g.n)
    path = resolve_output(req.path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        export_mesh(mesh, path)
    except OSError as exc:
        return JSONResponse(status_code=400, content=ErrorResponse(
            detail=f"cannot write {path}: {exc.strerror}").model_dump())
    return ExportMeshResponse(path=str(path), vertices=len(mesh.vertices),
                              cells=len(mesh.cells), facets=len(mesh.facets))
