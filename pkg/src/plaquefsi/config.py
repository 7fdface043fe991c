"""Plain-text run configuration: ``key = value`` lines grouped in ``[sections]``."""

from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .coupling import PhysicalParams

OUTPUT_ROOT_ENV = "PLAQUEFSI_OUTPUT_ROOT"


class ConfigError(ValueError):
    """Schema violation; ``problems`` lists every offending key."""

    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("invalid configuration:\n  " + "\n  ".join(problems))


@dataclass(frozen=True)
class Geometry:
    L: float = 1.0
    H_f: float = 0.5
    H_s: float = 0.5
    n: int = 32


@dataclass(frozen=True)
class Material:
    kind: str = "green-strain"
    mu: float = 1.0


@dataclass(frozen=True)
class Fluid:
    rho: float = 1.0
    nu: float = 1.0


@dataclass(frozen=True)
class Solid:
    rho: float = 1.0


@dataclass(frozen=True)
class Cells:
    Df: float = 1.0
    Ds: float = 0.5
    zeta: float = 1.0
    beta: float = 0.1
    gamma: float = 0.1


@dataclass(frozen=True)
class Time:
    T: float = 0.02
    dt: float = 1e-3
    windows: int = 1


@dataclass(frozen=True)
class Picard:
    tol: float = 1e-8
    max_iter: int = 30
    q: float = 6.0


@dataclass(frozen=True)
class Initial:
    preset: str = "baseline"
    amplitude: float = 0.015     # stream-function amplitude of the initial flow
    traction_scale: float = 1.0  # multiplies the initial velocity and interface pressure
    background: float = 0.1      # uniform concentration on both sides
    bump: float = 1.0            # peak of the compact concentration bump in the fluid
    kappa: float = 1.0


@dataclass(frozen=True)
class Output:
    directory: str = "runs/baseline"
    cadence: int = 5


@dataclass(frozen=True)
class RunConfig:
    geometry: Geometry = field(default_factory=Geometry)
    material: Material = field(default_factory=Material)
    fluid: Fluid = field(default_factory=Fluid)
    solid: Solid = field(default_factory=Solid)
    cells: Cells = field(default_factory=Cells)
    time: Time = field(default_factory=Time)
    picard: Picard = field(default_factory=Picard)
    initial: Initial = field(default_factory=Initial)
    output: Output = field(default_factory=Output)
    seed: int = 0

    @property
    def nsteps(self) -> int:
        return int(round(self.time.T / self.time.dt))

    def physical(self) -> PhysicalParams:
        c = self.cells
        return PhysicalParams(rho_f=self.fluid.rho, nu_f=self.fluid.nu, rho_s=self.solid.rho,
                              mu=self.material.mu, D_f=c.Df, D_s=c.Ds, beta=c.beta,
                              gamma=c.gamma, zeta=c.zeta, kappa=self.initial.kappa,
                              q=self.picard.q)

    def with_values(self, **sections) -> "RunConfig":
        """Copy with per-section overrides, e.g. ``with_values(time={"T": 0.04})``."""
        cfg = self
        for name, values in sections.items():
            if name == "seed":
                cfg = replace(cfg, seed=int(values))
                continue
            cfg = replace(cfg, **{name: replace(getattr(cfg, name), **values)})
        return validate(cfg)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            if f.name == "seed":
                continue
            lines.append(f"[{f.name}]")
            for k, v in asdict(getattr(self, f.name)).items():
                lines.append(f"{k} = {v}")
            lines.append("")
        lines += ["[run]", f"seed = {self.seed}", ""]
        return "\n".join(lines)


_BLOCKS = {"geometry": Geometry, "material": Material, "fluid": Fluid, "solid": Solid,
           "cells": Cells, "time": Time, "picard": Picard, "initial": Initial,
           "output": Output}
PRESETS = ("baseline", "rest")
MATERIALS = ("green-strain",)


def _coerce(block, key: str, raw: str, problems: list[str]):
    default = getattr(block(), key)
    try:
        if isinstance(default, bool):
            return raw.strip().lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw.strip()
    except ValueError:
        problems.append(f"{key}: cannot parse {raw!r} as {type(default).__name__}")
        return default


def parse_config(text: str) -> RunConfig:
    """Parse and validate configuration text; unknown sections or keys are errors."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"syntax: {exc}"]) from exc
    problems: list[str] = []
    blocks = {}
    seed = 0
    for sec in cp.sections():
        if sec == "run":
            for key, raw in cp.items(sec):
                if key != "seed":
                    problems.append(f"run.{key}: unknown key")
                    continue
                try:
                    seed = int(raw)
                except ValueError:
                    problems.append(f"run.seed: cannot parse {raw!r} as int")
            continue
        if sec not in _BLOCKS:
            problems.append(f"[{sec}]: unknown section")
            continue
        cls = _BLOCKS[sec]
        known = {f.name for f in fields(cls)}
        vals = {}
        for key, raw in cp.items(sec):
            if key not in known:
                problems.append(f"{sec}.{key}: unknown key")
                continue
            sub: list[str] = []
            vals[key] = _coerce(cls, key, raw, sub)
            problems += [f"{sec}.{p}" for p in sub]
        blocks[sec] = cls(**vals)
    if problems:
        raise ConfigError(problems)
    return validate(RunConfig(**blocks, seed=seed))


def load_config(path: str | Path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError([f"cannot read {path}: {exc.strerror}"]) from exc
    return parse_config(text)


def validate(cfg: RunConfig) -> RunConfig:
    problems = []

    def positive(sec, key):
        v = getattr(getattr(cfg, sec), key)
        if not v > 0:
            problems.append(f"{sec}.{key} must be positive (got {v})")

    def nonneg(sec, key):
        v = getattr(getattr(cfg, sec), key)
        if v < 0:
            problems.append(f"{sec}.{key} must be nonnegative (got {v})")

    for key in ("L", "H_f", "H_s", "n"):
        positive("geometry", key)
    positive("material", "mu")
    if cfg.material.kind not in MATERIALS:
        problems.append(f"material.kind must be one of {MATERIALS} (got {cfg.material.kind!r})")
    positive("fluid", "rho")
    positive("fluid", "nu")
    positive("solid", "rho")
    for key in ("Df", "Ds"):
        positive("cells", key)
    for key in ("zeta", "beta", "gamma"):
        nonneg("cells", key)
    for key in ("T", "dt", "windows"):
        positive("time", key)
    if cfg.time.dt > cfg.time.T:
        problems.append(f"time.dt ({cfg.time.dt}) exceeds time.T ({cfg.time.T})")
    elif abs(cfg.time.T / cfg.time.dt - round(cfg.time.T / cfg.time.dt)) > 1e-9 * cfg.time.T / cfg.time.dt:
        problems.append("time.T must be an integer multiple of time.dt")
    elif cfg.nsteps % cfg.time.windows:
        problems.append("time.windows must divide the number of steps")
    positive("picard", "tol")
    positive("picard", "max_iter")
    if not cfg.picard.q > 2:
        problems.append(f"picard.q must exceed 2 (got {cfg.picard.q})")
    if cfg.initial.preset not in PRESETS:
        problems.append(f"initial.preset must be one of {PRESETS} (got {cfg.initial.preset!r})")
    nonneg("initial", "amplitude")
    nonneg("initial", "traction_scale")
    nonneg("initial", "background")
    nonneg("initial", "bump")
    positive("initial", "kappa")
    positive("output", "cadence")
    if problems:
        raise ConfigError(problems)
    return cfg


def baseline_config() -> RunConfig:
    return RunConfig()
