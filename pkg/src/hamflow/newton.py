"""Damped Newton with central finite-difference Jacobians."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FD_REL_STEP = 1e-6


def fd_jacobian(fun, x: np.ndarray, rel_step: float = FD_REL_STEP) -> np.ndarray:
    """Central differences with step ``rel_step * (1 + |x|)``."""
    n = x.size
    h = rel_step * (1.0 + np.linalg.norm(x))
    cols = []
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        cols.append((fun(x + e) - fun(x - e)) / (2 * h))
    return np.stack(cols, axis=1) if cols else np.zeros((0, 0))


@dataclass
class NewtonResult:
    x: np.ndarray
    fx: np.ndarray
    residual: float
    converged: bool
    iterations: int


def damped_newton(fun, x0, tol: float = 1e-10, max_iter: int = 50, max_halvings: int = 20) -> NewtonResult:
    """Newton iteration halving the step (at most ``max_halvings`` times) on residual increase."""
    x = np.array(x0, dtype=float)
    fx = fun(x)
    res = float(np.linalg.norm(fx))
    for it in range(max_iter):
        if res <= tol:
            return NewtonResult(x, fx, res, True, it)
        J = fd_jacobian(fun, x)
        try:
            step = np.linalg.solve(J, fx)
        except np.linalg.LinAlgError:
            return NewtonResult(x, fx, res, False, it)
        if not np.all(np.isfinite(step)):
            return NewtonResult(x, fx, res, False, it)
        t = 1.0
        for _ in range(max_halvings + 1):
            xn = x - t * step
            fn = fun(xn)
            rn = float(np.linalg.norm(fn))
            if rn < res:
                break
            t *= 0.5
        else:
            return NewtonResult(x, fx, res, False, it)
        x, fx, res = xn, fn, rn
    return NewtonResult(x, fx, res, res <= tol, max_iter)


def jacobian_sign(fun, x: np.ndarray) -> int:
    if x.size == 0:
        return 1
    d = np.linalg.det(fd_jacobian(fun, x))
    return int(np.sign(d))


def dedupe(points, radius: float = 1e-6):
    """Indices of points pairwise farther apart than ``radius`` (first occurrence kept)."""
    keep: list[int] = []
    for i, p in enumerate(points):
        if all(np.linalg.norm(p - points[j]) > radius for j in keep):
            keep.append(i)
    return keep
