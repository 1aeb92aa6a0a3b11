"""Strict TOML run configuration.

Every section maps onto a dataclass; unknown keys, wrong types and bad
values raise ``ConfigurationError`` naming the offending key.  Reals may be
written as numbers or as simple multiples of pi (``"pi"``, ``"2*pi"``,
``"pi/2"``).
"""

from __future__ import annotations

import hashlib
import json
import math
import re
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigurationError
from .hamiltonians import HamiltonianModel, LinearForcedModel, PinchedModel, SaturatingModel
from .homotopy import ContinuationSchedule, Mode
from .index import MatrixField
from .spectral import Boundary, DomainSpec, ModeSet, SpectralField, enumerate_modes

COMMANDS = ("spectrum", "index", "flow", "solve", "homotopy", "verify")
WHERE = "cli.config"

_PI = re.compile(r"^\s*([0-9.eE+-]*)\s*\*?\s*pi\s*(?:/\s*([0-9.eE+-]+))?\s*$")


def _real(value, key: str) -> float:
    if isinstance(value, bool):
        raise ConfigurationError(f"{key}: expected a real number, got a boolean", WHERE)
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        m = _PI.match(value)
        if m:
            a = float(m.group(1)) if m.group(1) not in ("", "+", "-") else float(m.group(1) + "1")
            b = float(m.group(2)) if m.group(2) else 1.0
            return a * math.pi / b
    raise ConfigurationError(f"{key}: expected a real number, got {value!r}", WHERE)


def _int(value, key: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigurationError(f"{key}: expected an integer, got {value!r}", WHERE)
    return value


def _str(value, key: str, choices=None) -> str:
    if not isinstance(value, str):
        raise ConfigurationError(f"{key}: expected a string, got {value!r}", WHERE)
    if choices is not None and value not in choices:
        raise ConfigurationError(f"{key}: {value!r} not in {sorted(choices)}", WHERE)
    return value


def _reals(value, key: str) -> tuple[float, ...]:
    if not isinstance(value, list):
        raise ConfigurationError(f"{key}: expected a list of reals", WHERE)
    return tuple(_real(v, f"{key}[{i}]") for i, v in enumerate(value))


def _matrix(value, key: str):
    """A scalar (times identity) or a nested list."""
    if isinstance(value, list):
        rows = [_reals(r, f"{key}[{i}]") for i, r in enumerate(value)]
        return [list(r) for r in rows]
    return _real(value, key)


def _check_keys(data: dict, allowed, section: str):
    if not isinstance(data, dict):
        raise ConfigurationError(f"[{section}] must be a table", WHERE)
    for k in data:
        if k not in allowed:
            name = f"{section}.{k}" if section else k
            raise ConfigurationError(f"unknown key '{name}'", WHERE)


@dataclass
class TruncationConfig:
    k_max: int = 8
    spatial_cutoff: float = 64.0
    oversample: int = 2


@dataclass
class ForcingTerm:
    k: int
    parity: str
    n: tuple[int, ...]
    component: int
    amplitude: float


@dataclass
class ModelConfig:
    kind: str = "saturating"
    B: Any = 1.0
    B1: Any = 1.1
    B2: Any = 1.3
    M2: float = 0.5
    sign: int = -1
    saturation: float = 0.99
    l_H: float | None = None
    forcing: list[ForcingTerm] = field(default_factory=list)
    random_forcing_scale: float = 0.0
    random_forcing_seed: int = 0


@dataclass
class WindowConfig:
    l_H: float = 1.2


@dataclass
class IndexConfig:
    B: Any = 1.5
    B1: Any = 0.5
    B2: Any = 2.5
    steps: int = 40
    levels: int = 2
    tol: float = 1e-8


@dataclass
class SolverConfig:
    eps: float = 0.0
    lam: float = 1.0
    starts: int = 4
    start_radius: float = 1.0
    newton_tol: float = 1e-10
    outer_tol: float = 1e-12
    residual_tol: float = 1e-8
    max_outer_iter: int = 10_000


@dataclass
class RunConfig:
    command: str | None = None
    seed: int = 0
    output_dir: str = "out"
    domain: DomainSpec = field(default_factory=DomainSpec)
    truncation: TruncationConfig = field(default_factory=TruncationConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    window: WindowConfig = field(default_factory=WindowConfig)
    schedule: ContinuationSchedule = field(default_factory=ContinuationSchedule)
    index: IndexConfig = field(default_factory=IndexConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    source: str | None = None

    # -- derived objects -----------------------------------------------------
    def modeset(self) -> ModeSet:
        t = self.truncation
        return enumerate_modes(self.domain, t.k_max, t.spatial_cutoff)

    def build_model(self, modeset: ModeSet) -> HamiltonianModel:
        mc = self.model
        m = self.domain.m
        forcing = None
        if mc.forcing or mc.random_forcing_scale:
            terms = [(f.k, f.parity, f.n, f.component, f.amplitude) for f in mc.forcing]
            forcing = SpectralField.from_terms(modeset, terms)
            if mc.random_forcing_scale:
                rng = np.random.default_rng(mc.random_forcing_seed)
                forcing = forcing + SpectralField.random(modeset, rng, mc.random_forcing_scale)
        if mc.kind == "saturating":
            return SaturatingModel(MatrixField.constant(mc.B, m=m, label="B"), mc.M2, mc.sign, forcing,
                                   mc.l_H, m, mc.saturation)
        if mc.kind == "pinched":
            return PinchedModel(MatrixField.constant(mc.B1, m=m, label="B1"),
                                MatrixField.constant(mc.B2, m=m, label="B2"), forcing, mc.l_H, m)
        return LinearForcedModel(MatrixField.constant(mc.B, m=m, label="B"), forcing, mc.l_H, m)

    def to_dict(self) -> dict:
        d = {
            "command": self.command,
            "seed": self.seed,
            "output_dir": self.output_dir,
            "domain": self.domain.to_dict(),
            "truncation": asdict(self.truncation),
            "model": asdict(self.model),
            "window": asdict(self.window),
            "schedule": self.schedule.to_dict(),
            "index": asdict(self.index),
            "solver": asdict(self.solver),
        }
        return d

    def hash(self) -> str:
        """SHA-256 of the canonical JSON form (output_dir excluded)."""
        d = self.to_dict()
        d.pop("output_dir")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()


# -- section parsers ---------------------------------------------------------

def _domain(data: dict) -> DomainSpec:
    _check_keys(data, {"lengths", "boundary", "period", "m"}, "domain")
    d = DomainSpec()
    lengths = _reals(data["lengths"], "domain.lengths") if "lengths" in data else d.lengths
    boundary = Boundary(_str(data.get("boundary", d.boundary.value), "domain.boundary",
                             {b.value for b in Boundary}))
    period = _real(data.get("period", d.period), "domain.period")
    m = _int(data.get("m", d.m), "domain.m")
    return DomainSpec(tuple(lengths), boundary, period, m)


def _truncation(data: dict) -> TruncationConfig:
    _check_keys(data, {f.name for f in fields(TruncationConfig)}, "truncation")
    t = TruncationConfig()
    t.k_max = _int(data.get("k_max", t.k_max), "truncation.k_max")
    t.spatial_cutoff = _real(data.get("spatial_cutoff", t.spatial_cutoff), "truncation.spatial_cutoff")
    t.oversample = _int(data.get("oversample", t.oversample), "truncation.oversample")
    if t.oversample < 2:
        raise ConfigurationError("truncation.oversample must be at least 2", WHERE)
    return t


def _forcing(items) -> list[ForcingTerm]:
    if not isinstance(items, list):
        raise ConfigurationError("model.forcing must be an array of tables", WHERE)
    out = []
    for i, it in enumerate(items):
        key = f"model.forcing[{i}]"
        _check_keys(it, {"k", "parity", "n", "component", "amplitude"}, key)
        for req in ("parity", "n", "amplitude"):
            if req not in it:
                raise ConfigurationError(f"{key}.{req} is required", WHERE)
        n = it["n"]
        n = tuple(_int(v, f"{key}.n") for v in (n if isinstance(n, list) else [n]))
        out.append(ForcingTerm(_int(it.get("k", 0), f"{key}.k"),
                               _str(it["parity"], f"{key}.parity", {"const", "cos", "sin"}), n,
                               _int(it.get("component", 0), f"{key}.component"),
                               _real(it["amplitude"], f"{key}.amplitude")))
    return out


def _model(data: dict) -> ModelConfig:
    _check_keys(data, {f.name for f in fields(ModelConfig)}, "model")
    mc = ModelConfig()
    mc.kind = _str(data.get("kind", mc.kind), "model.kind", {"saturating", "pinched", "linear_forced"})
    for k in ("B", "B1", "B2"):
        if k in data:
            setattr(mc, k, _matrix(data[k], f"model.{k}"))
    for k in ("M2", "saturation", "random_forcing_scale"):
        if k in data:
            setattr(mc, k, _real(data[k], f"model.{k}"))
    if "l_H" in data:
        mc.l_H = _real(data["l_H"], "model.l_H")
    if "sign" in data:
        s = data["sign"]
        s = {"-": -1, "+": 1}.get(s, s) if isinstance(s, str) else _int(s, "model.sign")
        if s not in (-1, 1):
            raise ConfigurationError(f"model.sign must be -1 or +1, got {data['sign']!r}", WHERE)
        mc.sign = s
    if "random_forcing_seed" in data:
        mc.random_forcing_seed = _int(data["random_forcing_seed"], "model.random_forcing_seed")
    if "forcing" in data:
        mc.forcing = _forcing(data["forcing"])
    return mc


def _window(data: dict) -> WindowConfig:
    _check_keys(data, {"l_H"}, "window")
    return WindowConfig(_real(data.get("l_H", WindowConfig.l_H), "window.l_H"))


_SCHEDULE_KEYS = {"mode", "eps0", "eps_count", "eps_ratio", "eps_sequence", "lambda_steps",
                  "ball_radius_policy", "degree_lambdas", "degree_starts", "max_halvings", "growth_factor"}


def _schedule(data: dict, solver: SolverConfig, seed: int) -> ContinuationSchedule:
    _check_keys(data, _SCHEDULE_KEYS, "schedule")
    kw: dict = {}
    kw["mode"] = Mode(_str(data.get("mode", "regularized"), "schedule.mode", {m.value for m in Mode}))
    if "eps_sequence" in data:
        if {"eps0", "eps_count", "eps_ratio"} & data.keys():
            raise ConfigurationError("give either schedule.eps_sequence or schedule.eps0/eps_count/eps_ratio", WHERE)
        kw["eps_sequence"] = _reals(data["eps_sequence"], "schedule.eps_sequence")
    else:
        eps0 = _real(data.get("eps0", 0.1), "schedule.eps0")
        count = _int(data.get("eps_count", 8), "schedule.eps_count")
        ratio = _real(data.get("eps_ratio", 0.5), "schedule.eps_ratio")
        if not 0 < ratio < 1 or count < 1:
            raise ConfigurationError("schedule.eps_ratio must lie in (0, 1) and eps_count >= 1", WHERE)
        kw["eps_sequence"] = tuple(eps0 * ratio**n for n in range(count))
    for k in ("lambda_steps", "degree_starts", "max_halvings"):
        if k in data:
            kw[k] = _int(data[k], f"schedule.{k}")
    if "ball_radius_policy" in data:
        kw["ball_radius_policy"] = _str(data["ball_radius_policy"], "schedule.ball_radius_policy", {"remainder"})
    if "degree_lambdas" in data:
        kw["degree_lambdas"] = _reals(data["degree_lambdas"], "schedule.degree_lambdas")
    if "growth_factor" in data:
        kw["growth_factor"] = _real(data["growth_factor"], "schedule.growth_factor")
    sched = ContinuationSchedule(seed=seed, newton_tol=solver.newton_tol, outer_tol=solver.outer_tol,
                                 residual_tol=solver.residual_tol, **kw)
    try:
        sched.validate()
    except Exception as exc:
        raise ConfigurationError(str(exc), WHERE) from exc
    return sched


def _index(data: dict) -> IndexConfig:
    _check_keys(data, {f.name for f in fields(IndexConfig)}, "index")
    ic = IndexConfig()
    for k in ("B", "B1", "B2"):
        if k in data:
            setattr(ic, k, _matrix(data[k], f"index.{k}"))
    for k in ("steps", "levels"):
        if k in data:
            setattr(ic, k, _int(data[k], f"index.{k}"))
    if "tol" in data:
        ic.tol = _real(data["tol"], "index.tol")
    return ic


def _solver(data: dict) -> SolverConfig:
    _check_keys(data, {f.name for f in fields(SolverConfig)}, "solver")
    sc = SolverConfig()
    for f in fields(SolverConfig):
        if f.name in data:
            conv = _int if f.type in ("int", int) else _real
            setattr(sc, f.name, conv(data[f.name], f"solver.{f.name}"))
    return sc


_TOP = {"command", "seed", "output_dir", "domain", "truncation", "model", "window", "schedule", "index", "solver"}


def parse_config(data: dict, source: str | None = None, seed: int | None = None,
                 output_dir: str | None = None) -> RunConfig:
    """Validate a decoded TOML table into a ``RunConfig``; CLI overrides win."""
    _check_keys(data, _TOP, "")
    cfg = RunConfig(source=source)
    if "command" in data:
        cfg.command = _str(data["command"], "command", set(COMMANDS))
    cfg.seed = _int(data.get("seed", 0), "seed") if seed is None else int(seed)
    if not 0 <= cfg.seed < 2**64:
        raise ConfigurationError(f"seed must be an unsigned 64-bit integer, got {cfg.seed}", WHERE)
    cfg.output_dir = output_dir or _str(data.get("output_dir", cfg.output_dir), "output_dir")
    try:
        cfg.domain = _domain(data.get("domain", {}))
        cfg.truncation = _truncation(data.get("truncation", {}))
        cfg.model = _model(data.get("model", {}))
        cfg.window = _window(data.get("window", {}))
        cfg.solver = _solver(data.get("solver", {}))
        cfg.schedule = _schedule(data.get("schedule", {}), cfg.solver, cfg.seed)
        cfg.index = _index(data.get("index", {}))
    except ConfigurationError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigurationError(str(exc), WHERE) from exc
    return cfg


def load_config(path, seed: int | None = None, output_dir: str | None = None) -> RunConfig:
    p = Path(path)
    try:
        raw = p.read_bytes()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {p}: {exc}", WHERE) from exc
    try:
        data = tomllib.loads(raw.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigurationError(f"cannot parse {p}: {exc}", WHERE) from exc
    return parse_config(data, str(p), seed, output_dir)
