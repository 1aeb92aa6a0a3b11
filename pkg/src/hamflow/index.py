"""Relative Morse index, spectral flow and spectral-gap certificates.

The index pair of ``L - B`` is computed on truncations as a negative-count
difference against ``L`` on the same mode set (so ``mu(0) = 0``) and is
certified by agreement across two successive truncation levels.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import (
    ConfigurationError,
    HypothesisViolationError,
    NonStabilizedError,
    OrderViolationError,
    PreconditionError,
    UnresolvedCrossingError,
)
from .spectral import ModeSet, SpectralTransform, stacked_group_matrices

NULLITY_TOL = 1e-8
ORDER_TOL = 1e-12
CROSSING_RESOLUTION = 1e-10


class MatrixField:
    """Symmetric ``2m x 2m`` matrix field on ``S^1 x Omega``.

    Either a constant matrix or a callable ``fn(t, x) -> (..., 2m, 2m)`` where
    ``t`` and each ``x[i]`` are broadcastable arrays.  Sampled fields act on
    spectral fields by collocation multiplication followed by projection.
    """

    def __init__(self, value=None, fn: Callable | None = None, label: str = ""):
        if (value is None) == (fn is None):
            raise ConfigurationError("give exactly one of value or fn", "index_core.MatrixField")
        self.fn = fn
        self.label = label
        if value is not None:
            value = np.atleast_2d(np.asarray(value, dtype=float))
            if value.shape[0] != value.shape[1]:
                raise ConfigurationError(f"matrix must be square, got {value.shape}", "index_core.MatrixField")
            if np.abs(value - value.T).max() > 1e-14:
                raise ConfigurationError("matrix is not symmetric", "index_core.MatrixField")
            value = 0.5 * (value + value.T)
        self.value = value

    @classmethod
    def constant(cls, B, m: int | None = None, label: str = "") -> "MatrixField":
        """Constant field; a scalar ``b`` becomes ``b * I_{2m}``."""
        B = np.asarray(B, dtype=float)
        if B.ndim == 0:
            if m is None:
                raise ConfigurationError("scalar B needs m", "index_core.MatrixField")
            B = float(B) * np.eye(2 * m)
        return cls(value=B, label=label or _fmt(B))

    @classmethod
    def sampled(cls, fn: Callable, label: str = "sampled") -> "MatrixField":
        return cls(fn=fn, label=label)

    @property
    def kind(self) -> str:
        return "constant" if self.value is not None else "sampled"

    @property
    def is_constant(self) -> bool:
        return self.value is not None

    def samples(self, transform: SpectralTransform) -> np.ndarray:
        """Matrix values on the collocation grid, shape ``grid + (2m, 2m)``."""
        c = transform.modeset.ncomp
        if self.is_constant:
            self._check_size(c)
            return np.broadcast_to(self.value, transform.grid_shape + (c, c))
        t, x = transform.mesh()
        vals = np.broadcast_to(np.asarray(self.fn(t, x), dtype=float), transform.grid_shape + (c, c))
        asym = np.abs(vals - np.swapaxes(vals, -1, -2)).max()
        if asym > 1e-14:
            raise ConfigurationError(f"sampled matrix field is not symmetric (defect {asym:.2e})",
                                     "index_core.MatrixField")
        return vals

    def _check_size(self, c):
        if self.value.shape != (c, c):
            raise ConfigurationError(f"matrix field is {self.value.shape}, mode set needs {c}x{c}",
                                     "index_core.MatrixField")

    def apply_grid(self, transform: SpectralTransform, zg: np.ndarray) -> np.ndarray:
        """Pointwise ``B(t, x) z(t, x)`` on grid values."""
        if self.is_constant:
            return zg @ self.value.T
        return np.einsum("...ab,...b->...a", self.samples(transform), zg)

    def galerkin(self, modeset: ModeSet, oversample: int = 2) -> np.ndarray:
        """Matrix of the multiplication operator on the truncated space."""
        if self.is_constant:
            self._check_size(modeset.ncomp)
            return np.kron(np.eye(modeset.n_blocks), self.value)
        tr = modeset.transform(oversample)
        basis = tr.to_grid(np.eye(modeset.total_dim))
        M = tr.from_grid(np.einsum("...ab,d...b->d...a", self.samples(tr), basis)).T
        return 0.5 * (M + M.T)

    def combine(self, a: float, other: "MatrixField", b: float) -> "MatrixField":
        """``a*self + b*other``."""
        if self.is_constant and other.is_constant:
            return MatrixField(value=a * self.value + b * other.value, label=f"{a:g}*{self.label}+{b:g}*{other.label}")

        def fn(t, x, f1=self, f2=other):
            return a * f1._eval(t, x) + b * f2._eval(t, x)

        return MatrixField(fn=fn, label=f"{a:g}*{self.label}+{b:g}*{other.label}")

    def _eval(self, t, x):
        return self.value if self.is_constant else np.asarray(self.fn(t, x), dtype=float)

    def leq(self, other: "MatrixField", transform: SpectralTransform | None = None, tol: float = ORDER_TOL) -> bool:
        """Partial order ``self <= other``: ``other - self`` PSD at every sample."""
        return min_order_margin(self, other, transform) >= -tol

    def __repr__(self):
        return f"MatrixField({self.kind}, {self.label})"


def _fmt(B):
    if np.allclose(B, B[0, 0] * np.eye(len(B)), atol=0):
        return f"{B[0, 0]:g}*I"
    return np.array2string(B, precision=4, separator=",").replace("\n", "")


def min_order_margin(B1: MatrixField, B2: MatrixField, transform: SpectralTransform | None = None) -> float:
    """Smallest eigenvalue of ``B2 - B1`` over the samples."""
    if B1.is_constant and B2.is_constant:
        return float(np.linalg.eigvalsh(B2.value - B1.value).min())
    if transform is None:
        raise PreconditionError("sampled fields need a transform to be compared", "index_core.MatrixField.leq")
    diff = B2.samples(transform) - B1.samples(transform)
    return float(np.linalg.eigvalsh(diff).min())


def shifted_spectrum(B: MatrixField | None, modeset: ModeSet, shift: float = 0.0, oversample: int = 2) -> np.ndarray:
    """Sorted eigenvalues of ``shift*I + L - B`` on the truncation."""
    if B is None or B.is_constant:
        value = None if B is None else B.value
        if value is not None:
            B._check_size(modeset.ncomp)
        parts = [np.linalg.eigvalsh(mats).ravel() for _, mats in stacked_group_matrices(modeset, value, shift)]
        return np.sort(np.concatenate(parts))
    A = modeset.L_dense - B.galerkin(modeset, oversample)
    if shift:
        A = A + shift * np.eye(modeset.total_dim)
    return np.linalg.eigvalsh(A)


def nullity(B: MatrixField | None, modeset: ModeSet, tol: float = NULLITY_TOL) -> int:
    """Number of eigenvalues of truncated ``L - B`` with ``|lambda| < tol``."""
    if tol <= 0:
        raise PreconditionError(f"tol must be positive, got {tol}", "index_core.nullity")
    return int(np.sum(np.abs(shifted_spectrum(B, modeset)) < tol))


def negative_count(B: MatrixField | None, modeset: ModeSet, tol: float = NULLITY_TOL) -> int:
    return int(np.sum(shifted_spectrum(B, modeset) < -tol))


def negative_gap(B: MatrixField | None, modeset: ModeSet, tol: float = NULLITY_TOL) -> float:
    """Largest ``eps0`` with ``(-eps0, 0)`` free of spectrum of ``L - B`` (kernel excluded)."""
    ev = shifted_spectrum(B, modeset)
    neg = ev[ev < -tol]
    return float(-neg.max()) if neg.size else float("inf")


@dataclass
class IndexPair:
    mu: int
    nu: int
    truncation_history: list[tuple[int, int, int]] = field(default_factory=list)

    @property
    def stabilized(self) -> bool:
        h = self.truncation_history
        return len(h) >= 2 and h[-1][1] == h[-2][1]

    def certificate(self) -> dict:
        return {
            "mu": self.mu,
            "nu": self.nu,
            "stabilized": self.stabilized,
            "history": [{"total_dim": d, "mu": mu, "nu": nu} for d, mu, nu in self.truncation_history],
        }


def _index_at(B, modeset, tol):
    ev = shifted_spectrum(B, modeset)
    ev0 = shifted_spectrum(None, modeset)
    mu = int(np.sum(ev < -tol)) - int(np.sum(ev0 < -tol))
    nu = int(np.sum(np.abs(ev) < tol))
    return mu, nu


def relative_index(B: MatrixField, modeset: ModeSet, tol: float = NULLITY_TOL, levels: int = 2) -> IndexPair:
    """``(mu_L(B), nu_L(B))`` certified over ``levels`` successive truncations.

    The reported pair is the one on ``modeset``; finer levels only certify it.
    """
    history = []
    ms = modeset
    for _ in range(levels):
        mu, nu = _index_at(B, ms, tol)
        history.append((ms.total_dim, mu, nu))
        ms = ms.refined()
    if levels >= 2 and history[-1][1] != history[-2][1]:
        raise NonStabilizedError(
            f"index not stabilized: mu={history[-2][1]} at dim {history[-2][0]}, "
            f"mu={history[-1][1]} at dim {history[-1][0]}",
            "index_core.relative_index",
            values=(history[-2][1], history[-1][1]),
        )
    return IndexPair(history[0][1], history[0][2], history)


@dataclass
class FlowResult:
    total: int
    crossings: list[tuple[float, int]]
    samples: int

    def __int__(self):
        return self.total


def _path(B1: MatrixField, B2: MatrixField, s: float) -> MatrixField:
    return B2.combine(s, B1, 1.0 - s)


def spectral_flow(B1: MatrixField, B2: MatrixField, steps: int, modeset: ModeSet,
                  tol: float = NULLITY_TOL, resolution: float = CROSSING_RESOLUTION) -> FlowResult:
    """``sum_{s in [0,1)} nu(s*B2 + (1-s)*B1)`` with crossings located by bisection.

    Along a nondecreasing path the eigenvalues of ``L - B(s)`` are
    nonincreasing, so the negative count is monotone and every jump marks a
    crossing.  Near-zero eigenvalues at ``s = 0`` count as crossings; at
    ``s = 1`` they do not.
    """
    where = "index_core.spectral_flow"
    if steps < 2:
        raise PreconditionError(f"steps must be >= 2, got {steps}", where)
    tr = modeset.transform()
    margin = min_order_margin(B1, B2, tr)
    if margin < -ORDER_TOL:
        raise OrderViolationError(f"B1 <= B2 fails: min eigenvalue of B2-B1 is {margin:.3e}", where)

    def count(s, thresh):
        return int(np.sum(shifted_spectrum(_path(B1, B2, s), modeset) < thresh))

    grid = np.linspace(0.0, 1.0, int(steps))
    counts = [count(0.0, -tol)] + [count(s, 0.0) for s in grid[1:-1]] + [count(1.0, -tol)]
    crossings: list[tuple[float, int]] = []

    def isolate(a, b, ca, cb):
        if cb <= ca:
            return
        if b - a < resolution:
            mid = 0.5 * (a + b)
            jump = cb - ca
            null = nullity(_path(B1, B2, mid), modeset, tol)
            if null != jump:
                raise UnresolvedCrossingError(
                    f"cannot separate crossings near s={mid:.12f}: jump {jump}, nullity {null}", where)
            crossings.append((mid, jump))
            return
        mid = 0.5 * (a + b)
        cm = min(max(count(mid, 0.0), ca), cb)
        isolate(a, mid, ca, cm)
        isolate(mid, b, cm, cb)

    for i in range(len(grid) - 1):
        isolate(grid[i], grid[i + 1], counts[i], counts[i + 1])
    total = counts[-1] - counts[0]
    return FlowResult(total, crossings, len(grid))


def gap_radius(B1: MatrixField, B2: MatrixField, B_samples, modeset: ModeSet, tol: float = NULLITY_TOL) -> float:
    """``min`` over samples of ``min |eig(L - B)|``, after gating the pinching hypotheses."""
    where = "index_core.gap_radius"
    i1 = relative_index(B1, modeset, tol)
    i2 = relative_index(B2, modeset, tol)
    if i1.mu != i2.mu:
        raise HypothesisViolationError(f"mu(B1)={i1.mu} differs from mu(B2)={i2.mu}", where, failed="index_equal")
    if i2.nu != 0:
        raise HypothesisViolationError(f"nu(B2)={i2.nu} is not zero", where, failed="nondegenerate_B2")
    tr = modeset.transform()
    radius = np.inf
    for j, B in enumerate(B_samples):
        if min_order_margin(B1, B, tr) < -ORDER_TOL:
            raise HypothesisViolationError(f"sample {j} violates B1 <= B", where, failed="lower_order")
        if min_order_margin(B, B2, tr) < -ORDER_TOL:
            raise HypothesisViolationError(f"sample {j} violates B <= B2", where, failed="upper_order")
        radius = min(radius, float(np.abs(shifted_spectrum(B, modeset)).min()))
    return radius


def pinched_samples(B1: MatrixField, B2: MatrixField, count: int = 21) -> list[MatrixField]:
    """Equispaced samples ``B1 + s (B2 - B1)``, endpoints included."""
    return [_path(B1, B2, s) for s in np.linspace(0.0, 1.0, count)]
