"""YAML run configuration with defaults, validation and a resolved echo."""

from __future__ import annotations

import ast
import math
import operator
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import yaml

from .analysis import PairSetup
from .evolution import EvolutionConfig
from .initial import EXCITATIONS, InitialConfig, VortexSpec
from .lattice import GridSpec, ModelParams
from .profile import RadialGrid

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_number"]


class ConfigError(ValueError):
    pass


_OPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv,
        ast.USub: operator.neg, ast.UAdd: operator.pos}


def parse_number(x: Any) -> float:
    """Float from a number or a small arithmetic string such as ``"15*pi/8"``."""
    if isinstance(x, bool):
        raise ConfigError(f"expected a number, got {x!r}")
    if isinstance(x, (int, float)):
        return float(x)
    if not isinstance(x, str):
        raise ConfigError(f"expected a number, got {x!r}")

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id == "pi":
            return math.pi
        if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.operand))
        raise ConfigError(f"cannot parse number {x!r}")

    try:
        return ev(ast.parse(x.strip(), mode="eval"))
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse number {x!r}") from exc


def _section(raw: dict, name: str, allowed: set[str]) -> dict:
    sec = raw.get(name) or {}
    if not isinstance(sec, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    unknown = set(sec) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {name!r}: {sorted(unknown)}")
    return sec


@dataclass
class RadialSection:
    m: int = 3001
    rho_max: float = 30.0


@dataclass
class ScanSection:
    v_list: list[float] = field(default_factory=lambda: [round(0.03 + 0.01 * k, 2) for k in range(10)])
    sigma_list: list[float] = field(default_factory=lambda: [k * math.pi / 8 for k in range(16)])
    method: str = "linear"
    epsilon: float = 0.9
    mu: float = 1.0
    half_separation: float = 10.0
    t_max: float = 600.0
    d_close: float = 2.0
    d_escape: float | None = None
    phase_method: str = "shift"
    workers: int | None = None


@dataclass
class OutputSection:
    directory: str = "out"
    formats: list[str] = field(default_factory=lambda: ["csv", "json"])


@dataclass
class RunConfig:
    lam: float = 1.0
    N: int = 1
    grid: GridSpec = field(default_factory=lambda: GridSpec(601, 601, 0.1))
    radial: RadialSection = field(default_factory=RadialSection)
    vortices: list[VortexSpec] = field(default_factory=lambda: [
        VortexSpec((-10.0, 0.0), 1, 0.1), VortexSpec((10.0, 0.0), 1, -0.1)])
    phase_method: str = "shift"
    evolution: EvolutionConfig = field(default_factory=lambda: EvolutionConfig(dt=0.01, t_end=200.0))
    scan: ScanSection = field(default_factory=ScanSection)
    output: OutputSection = field(default_factory=OutputSection)

    @property
    def params(self) -> ModelParams:
        return ModelParams(self.lam)

    @property
    def radial_grid(self) -> RadialGrid:
        return RadialGrid(self.radial.m, self.radial.rho_max)

    def initial_config(self) -> InitialConfig:
        return InitialConfig(list(self.vortices), self.grid, self.params, self.phase_method)

    def pair_setup(self) -> PairSetup:
        s = self.scan
        if self.grid.n1 != self.grid.n2:
            raise ConfigError("scans use a square grid")
        return PairSetup(
            n=self.grid.n1, h=self.grid.h, half_separation=s.half_separation, lam=self.lam,
            method=s.method, epsilon=s.epsilon, mu=s.mu, phase_method=s.phase_method,
            t_max=s.t_max, d_close=s.d_close, d_escape=s.d_escape,
            radial_m=self.radial.m, rho_max=self.radial.rho_max, evolution=self.evolution,
        )

    def validate(self) -> None:
        """Check every sub-config before any compute starts."""
        try:
            self.params
            self.radial_grid
            self.evolution.validate(self.grid)
            if self.N < 1:
                raise ConfigError("model.N must be a positive integer")
            self.initial_config()
            if self.scan.method not in EXCITATIONS:
                raise ConfigError(f"scan.method must be one of {EXCITATIONS}")
            if not self.scan.v_list or not self.scan.sigma_list:
                raise ConfigError("scan.v_list and scan.sigma_list must be non-empty")
            if any(not 0 < abs(v) < 1 for v in self.scan.v_list):
                raise ConfigError("scan velocities must satisfy 0 < |v| < 1")
            if self.scan.workers is not None and self.scan.workers < 1:
                raise ConfigError("scan.workers must be at least 1")
            bad = set(self.output.formats) - {"csv", "json", "vxl1", "pgm"}
            if bad:
                raise ConfigError(f"unknown output formats {sorted(bad)}")
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc

    def echo(self) -> dict:
        """Fully resolved configuration, suitable for metadata files."""
        d = {
            "model": {"lambda": self.lam, "N": self.N},
            "grid": {"n1": self.grid.n1, "n2": self.grid.n2, "h": self.grid.h},
            "radial": asdict(self.radial),
            "vortices": [asdict(v) | {"position": list(v.position)} for v in self.vortices],
            "phase_method": self.phase_method,
            "evolution": asdict(self.evolution) | {"dt_resolved": self.evolution.resolved_dt(self.grid)},
            "scan": asdict(self.scan),
            "output": asdict(self.output),
        }
        return d


def _build(cls, sec: dict, conv: dict | None = None):
    conv = conv or {}
    names = {f.name for f in fields(cls)}
    kw = {}
    for k, v in sec.items():
        if k not in names:
            raise ConfigError(f"unknown key {k!r} for {cls.__name__}")
        kw[k] = conv[k](v) if k in conv and v is not None else v
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{cls.__name__}: {exc}") from exc


def _int(x) -> int:
    if isinstance(x, bool) or not isinstance(x, int):
        raise ConfigError(f"expected an integer, got {x!r}")
    return x


def from_dict(raw: dict | None) -> RunConfig:
    raw = raw or {}
    if not isinstance(raw, dict):
        raise ConfigError("configuration root must be a mapping")
    top = {"model", "grid", "radial", "vortices", "evolution", "scan", "output", "phase_method"}
    unknown = set(raw) - top
    if unknown:
        raise ConfigError(f"unknown sections: {sorted(unknown)}")
    cfg = RunConfig()

    model = _section(raw, "model", {"lambda", "N"})
    if "lambda" in model:
        cfg.lam = parse_number(model["lambda"])
    if "N" in model:
        cfg.N = _int(model["N"])

    g = _section(raw, "grid", {"n1", "n2", "h"})
    if g:
        n1 = _int(g.get("n1", cfg.grid.n1))
        n2 = _int(g.get("n2", g.get("n1", cfg.grid.n2)))
        try:
            cfg.grid = GridSpec(n1, n2, parse_number(g.get("h", cfg.grid.h)))
        except ValueError as exc:
            raise ConfigError(f"grid: {exc}") from exc

    r = _section(raw, "radial", {"m", "rho_max"})
    cfg.radial = _build(RadialSection, r, {"m": _int, "rho_max": parse_number})

    if "vortices" in raw:
        vs = raw["vortices"]
        if not isinstance(vs, list) or not vs:
            raise ConfigError("vortices must be a non-empty list")
        num = {k: parse_number for k in ("v", "epsilon", "mu", "sigma0")}
        num["position"] = lambda p: tuple(parse_number(x) for x in p)
        num["N"] = _int
        cfg.vortices = [_build(VortexSpec, v if isinstance(v, dict) else {}, num) for v in vs]
    if "phase_method" in raw:
        cfg.phase_method = str(raw["phase_method"])

    ev = dict(_section(raw, "evolution", {f.name for f in fields(EvolutionConfig)} | {"cadences"}))
    cad = ev.pop("cadences", None) or {}
    if not isinstance(cad, dict):
        raise ConfigError("evolution.cadences must be a mapping")
    for k, v in cad.items():
        if k not in ("diagnostic", "snapshot"):
            raise ConfigError(f"unknown cadence {k!r}")
        ev[f"{k}_cadence"] = v
    base = asdict(cfg.evolution)
    base.update(ev)
    num = {k: parse_number for k in ("dt", "t_end", "damping_alpha", "damping_fraction", "layer_dissipation")}
    num |= {"diagnostic_cadence": _int, "snapshot_cadence": _int}
    cfg.evolution = _build(EvolutionConfig, base, num)

    sc = _section(raw, "scan", {f.name for f in fields(ScanSection)})
    num = {k: parse_number for k in ("epsilon", "mu", "half_separation", "t_max", "d_close", "d_escape")}
    num["v_list"] = lambda xs: [parse_number(x) for x in xs]
    num["sigma_list"] = lambda xs: [parse_number(x) for x in xs]
    num["workers"] = _int
    cfg.scan = _build(ScanSection, sc, num)

    out = _section(raw, "output", {"directory", "formats"})
    cfg.output = _build(OutputSection, out)
    cfg.validate()
    return cfg


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        cfg = RunConfig()
        cfg.validate()
        return cfg
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {p} not found")
    try:
        raw = yaml.safe_load(p.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML in {p}: {exc}") from exc
    return from_dict(raw)
