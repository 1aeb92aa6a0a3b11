"""Continuation in ``lambda`` (and ``eps``) with degree bookkeeping.

Both engines follow ``(L + eps) z = P Phi'_lam(z)`` with
``Phi'_lam = A z + lam * r(z)``, from the linear problem at ``lam = 0`` to
the full one at ``lam = 1``.

* ``regularized``: sweep ``lam`` at the first ``eps``, then march ``eps``
  down at ``lam = 1`` and finish with an ``eps = 0`` solve.  The a priori
  radius is ``R(eps) = 2 M1 sqrt(T |Omega|) / eps``.
* ``pinched``: ``eps = 0`` throughout; the gap radius of ``[B1, B2]`` bounds
  every solution by ``lam |P f| / gap``.

Degrees are taken of the normalized reduced map
``g = (L0 + eps - A0)^{-1} a``, which is the identity at ``lam = 0`` when
``A`` is constant, so the count is oriented like ``deg(I - compact)``.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np

from .errors import (
    BoundaryZeroError,
    DegreeMismatchError,
    DivergenceError,
    HamflowError,
    IterationLimitError,
    MonitorViolation,
    NoConvergenceError,
    PreconditionError,
)
from .hamiltonians import HamiltonianModel, LinearForcedModel, PinchedModel, residual
from .index import MatrixField, gap_radius, negative_gap, pinched_samples, relative_index
from .newton import damped_newton, dedupe, jacobian_sign
from .reduction import ReducedProblem, WindowDecomposition, solve_reduced
from .spectral import SpectralField

log = logging.getLogger(__name__)

BOUNDARY_TOL = 1e-8
MONITOR_RTOL = 1e-9


class Mode(str, Enum):
    REGULARIZED = "regularized"
    PINCHED = "pinched"


@dataclass
class ContinuationSchedule:
    mode: Mode = Mode.REGULARIZED
    eps_sequence: tuple[float, ...] = tuple(0.1 * 0.5**n for n in range(8))
    lambda_steps: int = 20
    ball_radius_policy: str = "remainder"
    degree_lambdas: tuple[float, ...] = (0.0, 0.5, 1.0)
    degree_starts: int = 6
    max_halvings: int = 6
    seed: int = 0
    newton_tol: float = 1e-10
    outer_tol: float = 1e-12
    residual_tol: float = 1e-8
    growth_factor: float = 10.0

    def __post_init__(self):
        self.mode = Mode(self.mode)
        self.eps_sequence = tuple(float(e) for e in self.eps_sequence)
        self.degree_lambdas = tuple(float(x) for x in self.degree_lambdas)

    @classmethod
    def geometric(cls, eps0: float = 0.1, count: int = 8, ratio: float = 0.5, **kw) -> "ContinuationSchedule":
        return cls(eps_sequence=tuple(eps0 * ratio**n for n in range(count)), **kw)

    @property
    def eps0(self) -> float:
        return self.eps_sequence[0] if self.eps_sequence else 0.0

    def validate(self):
        where = "homotopy_engine.schedule"
        if self.lambda_steps < 1:
            raise PreconditionError("lambda_steps must be at least 1", where)
        if any(not 0.0 <= x <= 1.0 for x in self.degree_lambdas):
            raise PreconditionError("degree_lambdas must lie in [0, 1]", where)
        if self.ball_radius_policy != "remainder":
            raise PreconditionError(f"unknown ball_radius_policy {self.ball_radius_policy!r}", where)
        if self.mode is Mode.REGULARIZED:
            e = self.eps_sequence
            if not e:
                raise PreconditionError("regularized mode needs a nonempty eps_sequence", where)
            if any(x <= 0 for x in e) or any(b >= a for a, b in zip(e, e[1:])):
                raise PreconditionError("eps_sequence must be positive and strictly decreasing", where)

    @property
    def lambda_grid(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.lambda_steps + 1)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mode"] = self.mode.value
        return d


@dataclass
class TracePoint:
    stage: str
    eps: float
    lam: float
    norm: float
    inner_norm: float
    inner_fraction: float
    residual: float
    remainder_norm: float
    bound: float
    eps_norm_margin: float
    outer_iterations: int
    contraction: float
    degree: int | None = None
    winding: int | None = None


TRACE_COLUMNS = list(TracePoint.__dataclass_fields__)


@dataclass
class MonitorReport:
    clean: bool
    flags: list[str]
    worst_bound_margin: float | None
    worst_eps_norm_margin: float | None
    growth_ratio: float | None
    min_inner_fraction: float | None

    def to_dict(self):
        return asdict(self)


@dataclass
class ContinuationTrace:
    mode: Mode
    points: list[TracePoint] = field(default_factory=list)
    final: SpectralField | None = None
    final_residual: float = math.nan
    eps_solutions: list[tuple[float, SpectralField]] = field(default_factory=list)
    cauchy_gaps: list[float] = field(default_factory=list)
    limit_gap: float | None = None
    certificate: dict = field(default_factory=dict)
    degrees: dict = field(default_factory=dict)
    monitor: MonitorReport | None = None
    max_contraction: float = 0.0
    contraction_ratios: list[float] = field(default_factory=list, repr=False)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_COLUMNS)
            for p in self.points:
                w.writerow([_fmt(getattr(p, c)) for c in TRACE_COLUMNS])

    def summary(self) -> dict:
        last = self.points[-1] if self.points else None
        return {
            "mode": self.mode.value,
            "points": len(self.points),
            "final_norm": None if self.final is None else float(self.final.norm()),
            "final_residual": self.final_residual,
            "final_eps": None if last is None else last.eps,
            "cauchy_gaps": self.cauchy_gaps,
            "limit_gap": self.limit_gap,
            "degrees": {f"{k:g}": v for k, v in self.degrees.items()},
            "max_contraction": self.max_contraction,
            "certificate": self.certificate,
            "monitor": None if self.monitor is None else self.monitor.to_dict(),
        }


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return "%.17g" % v
    return str(v)


# -- degree ------------------------------------------------------------------

@dataclass
class DegreeResult:
    degree: int
    zeros: list[np.ndarray]
    signs: list[int]
    winding: int | None
    boundary_min: float
    radius: float


def _circle_winding(fun, radius: float, n0: int = 64, max_depth: int = 12):
    """Winding number of ``fun`` along the circle of ``radius`` with adaptive refinement."""
    def at(th):
        return fun(radius * np.array([math.cos(th), math.sin(th)]))

    def ang(v):
        return math.atan2(v[1], v[0])

    total = 0.0
    bmin = np.inf
    ths = np.linspace(0.0, 2 * math.pi, n0 + 1)
    vals = [at(th) for th in ths[:-1]]
    vals.append(vals[0])
    for v in vals:
        bmin = min(bmin, float(np.linalg.norm(v)))
    stack = [(ths[i], ths[i + 1], vals[i], vals[i + 1], 0) for i in range(n0)]
    while stack:
        a, b, va, vb, depth = stack.pop()
        d = (ang(vb) - ang(va) + math.pi) % (2 * math.pi) - math.pi
        if abs(d) > math.pi / 4 and depth < max_depth:
            mid = 0.5 * (a + b)
            vm = at(mid)
            bmin = min(bmin, float(np.linalg.norm(vm)))
            stack.append((a, mid, va, vm, depth + 1))
            stack.append((mid, b, vm, vb, depth + 1))
        else:
            total += d
    return int(round(total / (2 * math.pi))), bmin


def _boundary_min(fun, dim: int, radius: float, rng) -> float:
    dirs = [s * e for e in np.eye(dim) for s in (1.0, -1.0)]
    g = rng.standard_normal((64, dim))
    dirs.extend(g / np.linalg.norm(g, axis=1, keepdims=True))
    return min(float(np.linalg.norm(fun(radius * d))) for d in dirs)


def brouwer_degree(fun, dim: int, radius: float, starts=(), n_random: int = 6, rng=None,
                   tol: float = 1e-10, cross_check: bool = True) -> DegreeResult:
    """``deg(fun, B_radius, 0)`` as the signed count of Newton zeros inside the ball.

    For ``dim <= 2`` the count is cross-checked against a boundary winding
    number; a disagreement raises ``DegreeMismatchError``.
    """
    where = "homotopy_engine.brouwer_degree"
    rng = np.random.default_rng(0) if rng is None else rng
    if dim == 0:
        return DegreeResult(1, [np.zeros(0)], [1], None, np.inf, radius)
    cand = [np.asarray(s, dtype=float) for s in starts] + [np.zeros(dim)]
    for _ in range(n_random):
        u = rng.standard_normal(dim)
        cand.append(radius * rng.uniform() ** (1 / dim) * u / np.linalg.norm(u))
    found = []
    for s in cand:
        nr = damped_newton(fun, s, tol=tol)
        if nr.converged and np.linalg.norm(nr.x) < radius:
            found.append(nr.x)
    zeros = [found[i] for i in dedupe(found)]
    signs = [jacobian_sign(fun, z) for z in zeros]
    degree = int(sum(signs))

    winding = None
    if dim == 1:
        lo, hi = float(fun(np.array([-radius]))[0]), float(fun(np.array([radius]))[0])
        bmin = min(abs(lo), abs(hi))
        winding = int((np.sign(hi) - np.sign(lo)) // 2)
    elif dim == 2:
        winding, bmin = _circle_winding(fun, radius)
    else:
        bmin = _boundary_min(fun, dim, radius, rng)
    if bmin < BOUNDARY_TOL * (1.0 + radius):
        raise BoundaryZeroError(f"map nearly vanishes on the boundary of radius {radius:g} (min {bmin:.3e})", where)
    if cross_check and winding is not None and winding != degree:
        raise DegreeMismatchError(
            f"zero count gives degree {degree} but boundary winding gives {winding}", where)
    return DegreeResult(degree, zeros, signs, winding, bmin, radius)


def normalized_reduced_map(prob: ReducedProblem, A: MatrixField):
    """``g = (L0 + eps - A0)^{-1} a`` and ``sign det(L0 + eps - A0)``."""
    w = prob.window
    ms = w.modeset
    idx = w.inner_idx
    L0 = ms.L_dense[np.ix_(idx, idx)]
    A0 = A.galerkin(ms)[np.ix_(idx, idx)]
    M = L0 + prob.eps * np.eye(len(idx)) - A0
    try:
        Minv = np.linalg.inv(M)
    except np.linalg.LinAlgError as exc:
        raise PreconditionError("normalizing operator is singular", "homotopy_engine.degree") from exc
    sign = int(np.sign(np.linalg.det(M))) if len(idx) else 1
    return (lambda z0: Minv @ prob(z0)), sign


# -- engines -----------------------------------------------------------------

class _Runner:
    def __init__(self, schedule: ContinuationSchedule, model: HamiltonianModel, window: WindowDecomposition,
                 bound_fn, degree_radius):
        self.s = schedule
        self.model = model
        self.window = window
        self.bound_fn = bound_fn
        self.degree_radius = degree_radius
        self.rng = np.random.default_rng(schedule.seed)
        self.ratios: list[float] = []

    def solve_at(self, eps, lam, z0, warm):
        prob = ReducedProblem(self.window, self.model, eps, lam, tol=self.s.outer_tol, warm=warm)
        zs = solve_reduced(self.window, eps, lam, self.model, [z0], tol=self.s.newton_tol, problem=prob)
        self.ratios.extend(prob.all_ratios)
        zero = zs[0]
        if not zero.residual < self.s.residual_tol:
            raise NoConvergenceError(
                f"residual {zero.residual:.3e} above tolerance {self.s.residual_tol:g} at eps={eps:g}, lam={lam:g}",
                "homotopy_engine.run_homotopy")
        return zero, prob

    def step(self, eps, lam_from, lam_to, z0, warm, depth=0):
        """Solve at ``lam_to`` from the solution at ``lam_from``, halving on failure."""
        try:
            return [(lam_to, *self.solve_at(eps, lam_to, z0, warm))]
        except (NoConvergenceError, DivergenceError, IterationLimitError):
            if depth >= self.s.max_halvings:
                raise
        mid = 0.5 * (lam_from + lam_to)
        log.info("halving lambda step at %g -> %g", lam_from, mid)
        first = self.step(eps, lam_from, mid, z0, warm, depth + 1)
        _, zm, pm = first[-1]
        return first + self.step(eps, mid, lam_to, zm.z0, pm.warm, depth + 1)

    def degree(self, prob, zero, eps):
        g, _ = normalized_reduced_map(prob, self.model.linear_part)
        return brouwer_degree(g, self.window.inner_dim, self.degree_radius(eps), starts=[zero.z0],
                              n_random=self.s.degree_starts, rng=self.rng, tol=self.s.newton_tol)

    def point(self, stage, eps, lam, zero, prob, degree=None):
        fld = zero.field
        nz = float(fld.norm())
        nin = float(np.linalg.norm(zero.z0))
        rn = _remainder_l2(self.model, fld)
        return TracePoint(stage, float(eps), float(lam), nz, nin, nin / nz if nz > 0 else 0.0, zero.residual, rn,
                          float(self.bound_fn(eps, lam)), float(eps * nz - rn), zero.point.outer_iterations,
                          prob.max_ratio, None if degree is None else degree.degree,
                          None if degree is None else degree.winding)

    def sweep(self, trace, eps, previous=None, with_degree=True):
        """``lam`` from 0 to 1 at fixed ``eps``, warm-started from ``previous`` (same grid) when given.

        Returns the accepted ``(zero, problem)`` at every grid value of ``lam``.
        """
        grid = self.s.lambda_grid
        on_grid = lambda lam: with_degree and any(abs(lam - d) < 1e-12 for d in self.s.degree_lambdas)
        degrees = {}

        def record(lam, zero, prob, stage="lambda_sweep"):
            deg = None
            if on_grid(lam):
                deg = self.degree(prob, zero, eps)
                degrees[float(lam)] = deg.degree
            trace.points.append(self.point(stage, eps, lam, zero, prob, deg))

        if previous is None:
            start = (np.zeros(self.window.inner_dim), None)
        else:
            start = (previous[0][0].z0, previous[0][1].warm)
        zero, prob = self.solve_at(eps, 0.0, *start)
        record(0.0, zero, prob)
        accepted = [(zero, prob)]
        for i, (a, b) in enumerate(zip(grid, grid[1:])):
            steps = None
            if previous is not None:
                pz, pp = previous[i + 1]
                try:
                    steps = [(b, *self.solve_at(eps, b, pz.z0, pp.warm))]
                except (NoConvergenceError, DivergenceError, IterationLimitError):
                    steps = None
            if steps is None:
                steps = self.step(eps, a, b, zero.z0, prob.warm)
            for lam, zero, prob in steps[:-1]:
                trace.points.append(self.point("lambda_halving", eps, lam, zero, prob))
            lam, zero, prob = steps[-1]
            record(b, zero, prob)
            accepted.append((zero, prob))
        if with_degree:
            trace.degrees.update(degrees)
            if len(set(degrees.values())) > 1:
                raise DegreeMismatchError(f"degree changed along the homotopy at eps={eps:g}: {degrees}",
                                          "homotopy_engine.run_homotopy")
        return accepted


def _remainder_l2(model: HamiltonianModel, fld: SpectralField) -> float:
    """Quadrature ``L^2`` norm of ``r(t, x, z)`` over the collocation grid."""
    tr = fld.modeset.transform()
    zg = tr.to_grid(fld.coeffs)
    return float(tr.grid_norm(model.remainder_grid(tr, zg) + np.zeros_like(zg)))


def _pinched_bounds(model: HamiltonianModel):
    if isinstance(model, PinchedModel):
        return model.B1, model.B2
    if isinstance(model, LinearForcedModel):
        return model.linear_part, model.linear_part
    raise PreconditionError(f"pinched mode needs a pinched or linear_forced model, got {model.kind}",
                            "homotopy_engine.run_homotopy")


def run_homotopy(schedule: ContinuationSchedule, model: HamiltonianModel, window: WindowDecomposition,
                 modeset=None, strict: bool = True) -> ContinuationTrace:
    """Run the continuation; with ``strict`` a dirty monitor raises ``MonitorViolation``."""
    schedule.validate()
    where = "homotopy_engine.run_homotopy"
    ms = window.modeset
    if modeset is not None and modeset is not ms:
        raise PreconditionError("window was built on a different mode set", where)
    trace = ContinuationTrace(schedule.mode)
    if schedule.mode is Mode.PINCHED:
        B1, B2 = _pinched_bounds(model)
        gap = gap_radius(B1, B2, pinched_samples(B1, B2), ms)
        pf = 0.0 if model.forcing is None else float(model.forcing.norm())
        bound = lambda eps, lam: lam * pf / gap
        trace.certificate = {"gap_radius": gap, "forcing_norm": pf,
                             "index_B1": relative_index(B1, ms).certificate(),
                             "index_B2": relative_index(B2, ms).certificate()}
        run = _Runner(schedule, model, window, bound, lambda eps: 2.0 * max(bound(0.0, 1.0), 1.0))
        zero, prob = run.sweep(trace, 0.0)[-1]
        trace.final = zero.field
    else:
        if isinstance(model, PinchedModel):
            raise PreconditionError("pinched models run in pinched mode", where)
        ip = relative_index(model.linear_part, ms)
        eps0 = negative_gap(model.linear_part, ms)
        if schedule.eps0 >= eps0 / 2:
            raise PreconditionError(f"eps0={schedule.eps0} must stay below half the gap {eps0}/2", where)
        M1 = model.remainder_sup()
        if not np.isfinite(M1):
            raise PreconditionError(f"{model.kind} has an unbounded remainder", where)
        scale = 2.0 * M1 * math.sqrt(ms.domain.period * ms.domain.volume)
        radius = lambda eps, lam: max(scale / eps, 1.0) if eps > 0 else math.inf
        trace.certificate = {"eps0_gap": eps0, "M1": M1, "radius_scale": scale, "index": ip.certificate()}
        run = _Runner(schedule, model, window, radius, lambda eps: radius(eps, 1.0))
        previous = None
        for j, eps in enumerate(schedule.eps_sequence):
            previous = run.sweep(trace, eps, previous, with_degree=(j == 0))
            fld = previous[-1][0].field
            if trace.eps_solutions:
                trace.cauchy_gaps.append(float((fld - trace.eps_solutions[-1][1]).norm()))
            trace.eps_solutions.append((eps, fld))
        zero, prob = previous[-1]
        zero, prob = run.solve_at(0.0, 1.0, zero.z0, prob.warm)
        trace.points.append(run.point("final", 0.0, 1.0, zero, prob))
        trace.final = zero.field
        trace.limit_gap = float((zero.field - trace.eps_solutions[-1][1]).norm())
    trace.final_residual = residual(model, trace.final, 0.0, 1.0)
    trace.contraction_ratios = run.ratios
    trace.max_contraction = max(run.ratios) if run.ratios else 0.0
    trace.monitor = apriori_monitor(trace, model, schedule.mode, schedule.growth_factor)
    if strict and not trace.monitor.clean:
        exc = MonitorViolation("a priori monitor flagged the trace: " + "; ".join(trace.monitor.flags),
                               where, report=trace.monitor)
        exc.trace = trace
        raise exc
    return trace


def apriori_monitor(trace: ContinuationTrace, model: HamiltonianModel | None = None, mode: Mode | None = None,
                    growth_factor: float = 10.0) -> MonitorReport:
    """Check the trace against the a priori bounds; reports only, never raises."""
    if not trace.points:
        raise PreconditionError("trace is empty", "homotopy_engine.apriori_monitor")
    mode = trace.mode if mode is None else Mode(mode)
    flags = []
    worst_b = worst_s = None
    for p in trace.points:
        if math.isfinite(p.bound):
            m = p.norm - p.bound * (1 + MONITOR_RTOL) - 1e-12
            worst_b = m if worst_b is None else max(worst_b, m)
            if m > 0:
                flags.append(f"norm {p.norm:.6g} exceeds bound {p.bound:.6g} at eps={p.eps:g}, lam={p.lam:g}")
        if mode is Mode.REGULARIZED and p.eps > 0:
            # eps |z| <= |r(z)| from |(L + eps - A)^{-1}| <= 1/eps
            worst_s = p.eps_norm_margin if worst_s is None else max(worst_s, p.eps_norm_margin)
            if p.eps_norm_margin > MONITOR_RTOL * (1 + p.norm):
                flags.append(f"eps-norm inequality fails by {p.eps_norm_margin:.3e} at eps={p.eps:g}, lam={p.lam:g}")
    # boundedness proxy: no norm beyond growth_factor times the median
    pool = [p.norm for p in trace.points if p.norm > 0 and (mode is Mode.PINCHED or p.lam == 1.0)]
    growth = None
    if pool:
        med = float(np.median(pool))
        growth = max(pool) / med
        if growth > growth_factor:
            flags.append(f"solution norm grows to {growth:.3g}x the median")
    fr = [p.inner_fraction for p in trace.points if p.norm > 0]
    return MonitorReport(not flags, flags, worst_b, worst_s, growth, min(fr) if fr else None)


__all__ = [
    "Mode", "ContinuationSchedule", "TracePoint", "ContinuationTrace", "MonitorReport", "DegreeResult",
    "brouwer_degree", "normalized_reduced_map", "run_homotopy", "apriori_monitor", "HamflowError",
]
