"""``hamflow <command> --config <file> [--out <dir>] [--seed <u64>]``.

Exit status: 0 success, 1 configuration or precondition error, 2 monitor or
hypothesis violation, 3 solver failure (including a failing ``verify``).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from .config import COMMANDS, RunConfig, load_config
from .errors import ConfigurationError, HamflowError, HypothesisViolationError, MonitorViolation
from .hamiltonians import audit_conditions
from .homotopy import run_homotopy
from .index import MatrixField, relative_index, spectral_flow
from .reduction import build_window, solve_reduced
from .spectral import mode_eigenvalues

log = logging.getLogger("hamflow")

EXIT_OK, EXIT_CONFIG, EXIT_MONITOR, EXIT_SOLVER = 0, 1, 2, 3


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if hasattr(obj, "value") and not isinstance(obj, (str, bytes)):
        return obj.value
    return obj


class Outputs:
    """Collects files written for one run and finishes with a manifest."""

    def __init__(self, out_dir, cfg: RunConfig, command: str):
        self.dir = Path(out_dir)
        try:
            self.dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigurationError(f"cannot create output directory {self.dir}: {exc}", "cli.emit_outputs") from exc
        self.cfg = cfg
        self.command = command
        self.files: list[str] = []

    def path(self, name: str) -> Path:
        self.files.append(name)
        return self.dir / name

    def json(self, name: str, data) -> None:
        self.path(name).write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")

    def csv(self, name: str, header, rows) -> None:
        with open(self.path(name), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow(["%.17g" % v if isinstance(v, float) else v for v in r])

    def manifest(self, status: int) -> None:
        hashes = {f: hashlib.sha256((self.dir / f).read_bytes()).hexdigest() for f in sorted(set(self.files))}
        data = {
            "command": self.command,
            "config_hash": self.cfg.hash(),
            "config": self.cfg.to_dict(),
            "seed": self.cfg.seed,
            "exit_status": status,
            "versions": {
                "hamflow": _version(),
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "platform": platform.platform(),
            },
            "files": hashes,
        }
        (self.dir / "manifest.json").write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")


def _version() -> str:
    from . import __version__

    return __version__


# -- commands ----------------------------------------------------------------

def cmd_spectrum(cfg: RunConfig, out: Outputs) -> int:
    ms = cfg.modeset()
    rows = []
    for i, b in enumerate(ms.blocks):
        n = " ".join(str(v) for v in b.n)
        for sign, ev in zip((1, -1), mode_eigenvalues(b)):
            rows.append((i, b.k, b.parity.value, n, float(b.mu), sign, float(ev), ms.m))
    out.csv("spectrum.csv", ["block", "k", "parity", "n", "mu", "sign", "eigenvalue", "multiplicity"], rows)
    return EXIT_OK


def _field(cfg, value):
    return MatrixField.constant(value, m=cfg.domain.m)


def cmd_index(cfg: RunConfig, out: Outputs) -> int:
    ms = cfg.modeset()
    ip = relative_index(_field(cfg, cfg.index.B), ms, cfg.index.tol, cfg.index.levels)
    out.json("index.json", dict(ip.certificate(), B=cfg.index.B))
    return EXIT_OK


def cmd_flow(cfg: RunConfig, out: Outputs) -> int:
    ms = cfg.modeset()
    B1, B2 = _field(cfg, cfg.index.B1), _field(cfg, cfg.index.B2)
    fl = spectral_flow(B1, B2, cfg.index.steps, ms, cfg.index.tol)
    i1 = relative_index(B1, ms, cfg.index.tol, cfg.index.levels)
    i2 = relative_index(B2, ms, cfg.index.tol, cfg.index.levels)
    out.csv("flow.csv", ["s", "multiplicity"], [(float(s), int(j)) for s, j in fl.crossings])
    out.json("flow.json", {"flow": fl.total, "crossings": fl.crossings, "grid_points": fl.samples,
                           "mu_B1": i1.mu, "mu_B2": i2.mu, "additivity": i2.mu - i1.mu == fl.total,
                           "B1": cfg.index.B1, "B2": cfg.index.B2})
    return EXIT_OK


def _audit(cfg, model, out):
    report = audit_conditions(model, seed=cfg.seed)
    out.json("audit.json", report.to_dict())
    if not report.passed:
        failed = [k for k, v in report.to_dict()["checks"].items() if not v["passed"]]
        raise HypothesisViolationError(f"model audit failed: {failed}", "hamiltonians.audit_conditions",
                                       failed=failed)


def cmd_solve(cfg: RunConfig, out: Outputs) -> int:
    ms = cfg.modeset()
    model = cfg.build_model(ms)
    window = build_window(ms, cfg.window.l_H)
    sc = cfg.solver
    rng = np.random.default_rng(cfg.seed)
    d = window.inner_dim
    starts = [np.zeros(d)]
    for _ in range(max(sc.starts - 1, 0)):
        u = rng.standard_normal(d)
        starts.append(sc.start_radius * u / max(np.linalg.norm(u), 1e-300) * rng.uniform() ** (1 / max(d, 1)))
    zeros = solve_reduced(window, sc.eps, sc.lam, model, starts, tol=sc.newton_tol, outer_tol=sc.outer_tol)
    zeros.sort(key=lambda z: (round(z.field.norm(), 9), tuple(np.round(z.z0, 9))))
    out.csv("solutions.csv", ["solution", "norm", "residual", "reduced_residual", "sign", "outer_iterations"]
            + [f"z0_{i}" for i in range(d)],
            [(i, float(z.field.norm()), z.residual, z.reduced_residual, z.sign, z.point.outer_iterations,
              *map(float, z.z0)) for i, z in enumerate(zeros)])
    best = zeros[0]
    best.field.save(out.path("final_field.bin"))
    best.field.to_csv(out.path("final_field.csv"))
    out.json("summary.json", {"eps": sc.eps, "lam": sc.lam, "solutions": len(zeros),
                              "residuals": [z.residual for z in zeros], "window": window.to_dict(),
                              "model": model.describe()})
    bad = [z.residual for z in zeros if not z.residual < sc.residual_tol]
    return EXIT_SOLVER if bad else EXIT_OK


def cmd_homotopy(cfg: RunConfig, out: Outputs) -> int:
    ms = cfg.modeset()
    model = cfg.build_model(ms)
    window = build_window(ms, cfg.window.l_H)
    _audit(cfg, model, out)
    status = EXIT_OK
    try:
        trace = run_homotopy(cfg.schedule, model, window)
    except MonitorViolation as exc:
        trace = exc.trace
        status = EXIT_MONITOR
        log.error("%s", exc)
    trace.write_csv(out.path("trace.csv"))
    trace.final.save(out.path("final_field.bin"))
    trace.final.to_csv(out.path("final_field.csv"))
    out.json("summary.json", dict(trace.summary(), window=window.to_dict(), model=model.describe(),
                                  schedule=cfg.schedule.to_dict()))
    return status


def cmd_verify(cfg: RunConfig, out: Outputs) -> int:
    from .verify import run_all

    results = run_all(seed=cfg.seed)
    for r in results:
        print(r.line())
    ok = all(r.passed for r in results)
    out.json("verify_report.json", {"passed": ok, "criteria": [r.to_dict() for r in results]})
    return EXIT_OK if ok else EXIT_SOLVER


COMMAND_TABLE = {"spectrum": cmd_spectrum, "index": cmd_index, "flow": cmd_flow, "solve": cmd_solve,
                 "homotopy": cmd_homotopy, "verify": cmd_verify}


def run_config(cfg: RunConfig, command: str | None = None) -> int:
    """Dispatch one command and write its artifacts plus ``manifest.json``."""
    command = command or cfg.command
    if command not in COMMAND_TABLE:
        raise ConfigurationError(f"unknown command {command!r}; choose from {', '.join(COMMANDS)}", "cli.run_config")
    cfg.command = command
    out = Outputs(cfg.output_dir, cfg, command)
    try:
        status = COMMAND_TABLE[command](cfg, out)
    except HamflowError as exc:
        out.manifest(exc.exit_code)
        raise
    out.manifest(status)
    return status


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigurationError(message, "cli.arguments")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hamflow", description="Spectral Galerkin solver for time-periodic Hamiltonian systems.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="TOML run configuration")
    p.add_argument("--out", help="output directory (overrides output_dir)")
    p.add_argument("--seed", type=int, help="unsigned 64-bit seed (overrides seed)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = load_config(args.config, seed=args.seed, output_dir=args.out)
        return run_config(cfg, args.command)
    except HamflowError as exc:
        print(f"hamflow: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # unexpected numerical failures count as solver failures
        print(f"hamflow: error: [cli] {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
