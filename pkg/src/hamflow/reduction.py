"""Saddle-point reduction on the spectral window ``|lambda(L)| <= l_H``.

Because ``|lambda|`` is constant on every block of ``L``, the window
projections are coordinate masks.  The outer component solves
``z_perp = (L_perp + eps)^{-1} P_perp Phi'_lam(z0 + z_perp)`` by contraction,
which leaves the finite-dimensional reduced equation

    a(z0) = (L0 + eps) z0 - P0 Phi'_lam(z0 + z_perp(z0)) = 0.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, IterationLimitError, NoConvergenceError, PreconditionError
from .hamiltonians import HamiltonianModel, residual
from .newton import damped_newton, dedupe, jacobian_sign
from .spectral import ModeSet, SpectralField

log = logging.getLogger(__name__)

NUDGE_TOL = 1e-9
EPS_SLACK = 1e-12
# contraction ratios are only recorded while increments exceed this relative floor
RATIO_FLOOR = 1e-11


@dataclass
class WindowDecomposition:
    modeset: ModeSet
    l_H: float
    delta: float
    inner_mask: np.ndarray
    outer_mask: np.ndarray
    requested_l_H: float
    nudged: bool = False

    @property
    def inner_dim(self) -> int:
        return int(self.inner_mask.sum())

    @property
    def inner_idx(self) -> np.ndarray:
        return np.flatnonzero(self.inner_mask)

    @property
    def outer_idx(self) -> np.ndarray:
        return np.flatnonzero(self.outer_mask)

    @property
    def outer_min_magnitude(self) -> float:
        mags = self.modeset.magnitudes[self.outer_mask]
        return float(mags.min()) if mags.size else np.inf

    def contraction_bound(self, lipschitz: float) -> float:
        """``lipschitz / (l_H + delta/2)``, the bound on the outer contraction factor."""
        return lipschitz / (self.l_H + self.delta / 2)

    def assemble(self, z0: np.ndarray, z_perp: np.ndarray) -> np.ndarray:
        full = np.zeros(self.modeset.total_dim)
        full[self.inner_mask] = z0
        full[self.outer_mask] = z_perp
        return full

    def to_dict(self) -> dict:
        return {"l_H": self.l_H, "requested_l_H": self.requested_l_H, "nudged": self.nudged,
                "delta": self.delta, "inner_dim": self.inner_dim}


def build_window(modeset: ModeSet, l_H: float) -> WindowDecomposition:
    """Split coefficients by ``|lambda| <= l_H``; ``l_H`` on an eigenvalue is nudged upward."""
    if not l_H > 0:
        raise PreconditionError(f"l_H must be positive, got {l_H}", "reduction_solver.build_window")
    mags = np.unique(modeset.magnitudes)
    requested = float(l_H)
    nudged = False
    hit = np.abs(mags - l_H) < NUDGE_TOL
    if hit.any():
        j = int(np.argmax(hit))
        upper = mags[j + 1] if j + 1 < len(mags) else mags[j] + 1.0
        l_H = 0.5 * (mags[j] + upper)
        nudged = True
        log.warning("l_H=%g lies on |lambda|=%g; nudged to gap midpoint %g", requested, mags[j], l_H)
    inner = modeset.magnitudes <= l_H
    delta = float(np.abs(mags - l_H).min())
    return WindowDecomposition(modeset, float(l_H), delta, inner, ~inner, requested, nudged)


@dataclass
class ReducedPoint:
    z0: np.ndarray
    z_perp: np.ndarray
    eps: float
    lam: float
    outer_iterations: int
    outer_contraction_measured: float
    outer_residual: float
    ratios: list[float] = field(default_factory=list, repr=False)

    def full(self, window: WindowDecomposition) -> np.ndarray:
        return window.assemble(self.z0, self.z_perp)


class ReducedProblem:
    """Outer fixed point and reduced map at fixed ``(eps, lam)``, with warm starts."""

    def __init__(self, window: WindowDecomposition, model: HamiltonianModel, eps: float, lam: float,
                 tol: float = 1e-12, max_iter: int = 10_000, oversample: int = 2, warm=None):
        where = "reduction_solver.outer_fixed_point"
        if eps < 0:
            raise PreconditionError(f"eps must be nonnegative, got {eps}", where)
        if eps > window.delta / 2 + EPS_SLACK:
            raise PreconditionError(f"eps={eps} exceeds delta/2={window.delta / 2}", where)
        if model.l_H > window.l_H + EPS_SLACK:
            raise PreconditionError(f"model l_H={model.l_H} exceeds window l_H={window.l_H}", where)
        self.window = window
        self.model = model
        self.eps = float(eps)
        self.lam = float(lam)
        self.tol = tol
        self.max_iter = max_iter
        ms = window.modeset
        self.transform = ms.transform(oversample)
        self._L = ms.L_sparse
        mags = ms.magnitudes[window.outer_mask]
        self._den = mags**2 - self.eps**2
        n_out = int(window.outer_mask.sum())
        self._warm = np.zeros(n_out) if warm is None else np.array(warm, dtype=float).reshape(n_out)
        self.all_ratios: list[float] = []
        self.evaluations = 0

    def _phi(self, full: np.ndarray) -> np.ndarray:
        return self.model.homotopy_rhs(self.transform, full, self.lam)

    def _L_outer(self, v_perp: np.ndarray) -> np.ndarray:
        full = np.zeros(self.window.modeset.total_dim)
        full[self.window.outer_mask] = v_perp
        return (self._L @ full)[self.window.outer_mask] + self.eps * v_perp

    def _L_outer_inv(self, v_perp: np.ndarray) -> np.ndarray:
        # (L + eps)^{-1} = (L - eps) / (L^2 - eps^2) blockwise since L^2 = |lambda|^2
        full = np.zeros(self.window.modeset.total_dim)
        full[self.window.outer_mask] = v_perp
        return ((self._L @ full)[self.window.outer_mask] - self.eps * v_perp) / self._den

    def outer(self, z0: np.ndarray, z_perp: np.ndarray | None = None) -> ReducedPoint:
        where = "reduction_solver.outer_fixed_point"
        w = self.window
        z0 = np.asarray(z0, dtype=float)
        zp = (self._warm if z_perp is None else np.asarray(z_perp, dtype=float)).copy()
        ratios: list[float] = []
        prev_inc = None
        growth = 0
        for it in range(1, self.max_iter + 1):
            v = self._phi(w.assemble(z0, zp))[w.outer_mask]
            res = float(np.linalg.norm(self._L_outer(zp) - v))
            if res <= self.tol * (1.0 + np.linalg.norm(v)):
                break
            new = self._L_outer_inv(v)
            inc = float(np.linalg.norm(new - zp))
            floor = RATIO_FLOOR * (1.0 + np.linalg.norm(new))
            if prev_inc is not None and prev_inc > floor:
                ratios.append(inc / prev_inc)
                growth = growth + 1 if inc > prev_inc else 0
                if growth >= 5:
                    raise DivergenceError(
                        f"outer increments grew 5 times in a row; measured ratios {ratios[-5:]}", where)
            prev_inc = inc
            zp = new
        else:
            raise IterationLimitError(f"outer iteration exceeded {self.max_iter} steps (residual {res:.3e})", where)
        self._warm = zp
        self.all_ratios.extend(ratios)
        self.evaluations += 1
        q = max(ratios) if ratios else 0.0
        return ReducedPoint(z0.copy(), zp, self.eps, self.lam, it, q, res, ratios)

    def reduced(self, z0: np.ndarray) -> tuple[np.ndarray, ReducedPoint]:
        w = self.window
        pt = self.outer(z0)
        full = pt.full(w)
        a = (self._L @ full)[w.inner_mask] + self.eps * pt.z0 - self._phi(full)[w.inner_mask]
        return a, pt

    def __call__(self, z0: np.ndarray) -> np.ndarray:
        return self.reduced(z0)[0]

    @property
    def warm(self) -> np.ndarray:
        return self._warm.copy()

    @property
    def max_ratio(self) -> float:
        return max(self.all_ratios) if self.all_ratios else 0.0

    def field(self, point: ReducedPoint) -> SpectralField:
        return SpectralField(self.window.modeset, point.full(self.window))


def outer_fixed_point(window: WindowDecomposition, z0, eps: float, lam: float, model: HamiltonianModel,
                      tol: float = 1e-12, max_iter: int = 10_000, z_perp=None) -> ReducedPoint:
    return ReducedProblem(window, model, eps, lam, tol, max_iter).outer(z0, z_perp)


def reduced_map(window: WindowDecomposition, z0, eps: float, lam: float, model: HamiltonianModel,
                tol: float = 1e-12) -> np.ndarray:
    return ReducedProblem(window, model, eps, lam, tol)(np.asarray(z0, dtype=float))


@dataclass
class ReducedZero:
    z0: np.ndarray
    sign: int
    point: ReducedPoint
    field: SpectralField
    residual: float
    reduced_residual: float


def solve_reduced(window: WindowDecomposition, eps: float, lam: float, model: HamiltonianModel, starts,
                  tol: float = 1e-10, outer_tol: float = 1e-12, problem: ReducedProblem | None = None,
                  dedupe_radius: float = 1e-6) -> list[ReducedZero]:
    """Multistart damped Newton on the reduced map; zeros are de-duplicated."""
    where = "reduction_solver.solve_reduced"
    prob = problem or ReducedProblem(window, model, eps, lam, outer_tol)
    if window.inner_dim == 0:
        pt = prob.outer(np.zeros(0))
        fld = prob.field(pt)
        res = residual(model, fld, eps, lam)
        if res >= max(tol, 1e3 * outer_tol):
            raise NoConvergenceError(f"pure outer solution has residual {res:.3e}", where)
        return [ReducedZero(np.zeros(0), 1, pt, fld, res, 0.0)]
    found = []
    for s in starts:
        s = np.asarray(s, dtype=float)
        if s.shape != (window.inner_dim,) or not np.all(np.isfinite(s)):
            raise PreconditionError(f"start must be a finite vector of length {window.inner_dim}", where)
        nr = damped_newton(prob, s, tol=tol)
        if nr.converged:
            found.append(nr.x)
    if not found:
        raise NoConvergenceError(f"no start converged at eps={eps:g}, lam={lam:g}", where)
    zeros = []
    for i in dedupe(found, dedupe_radius):
        z0 = found[i]
        a, pt = prob.reduced(z0)
        fld = prob.field(pt)
        sign = jacobian_sign(prob, z0)
        zeros.append(ReducedZero(z0, sign, pt, fld, residual(model, fld, eps, lam), float(np.linalg.norm(a))))
    return zeros
