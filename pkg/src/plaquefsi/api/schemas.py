"""Request and response models of the HTTP service."""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field


class ConfigPayload(BaseModel):
    """Configuration text in the ``[section]`` / ``key = value`` format.

    An empty text means the baseline configuration.
    """

    config_text: str = ""


class CheckConfigResponse(BaseModel):
    valid: bool
    problems: list[str] = Field(default_factory=list)
    normalized: str | None = None
    nsteps: int | None = None


class RunRequest(ConfigPayload):
    output_dir: str | None = None


class PicardIterate(BaseModel):
    window: int
    k: int
    increment: float
    components: dict[str, float]
    q: float | None = None


class RunResponse(BaseModel):
    exit_code: Literal[0, 1, 2]
    status: str
    message: str = ""
    iterations: int = 0
    max_q: float = 0.0
    factors: list[float] = Field(default_factory=list)
    picard: list[PicardIterate] = Field(default_factory=list)
    residuals: dict[str, float] = Field(default_factory=dict)
    positivity: dict[str, float | None] = Field(default_factory=dict)
    smallness: float = 0.0
    output_dir: str | None = None


class StudyRequest(ConfigPayload):
    kind: Literal["space-convergence", "time-convergence", "T-sweep", "kappa-sweep", "eigen"]
    output_dir: str | None = None


class StudyResponse(BaseModel):
    kind: str
    columns: list[str]
    rows: list[list[float | int | str | None]]
    summary: str
    csv_path: str | None = None


class ExportMeshRequest(ConfigPayload):
    path: str


class ExportMeshResponse(BaseModel):
    path: str
    vertices: int
    cells: int
    facets: int


class ErrorResponse(BaseModel):
    detail: str
    problems: list[str] = Field(default_factory=list)
