"""Nonlinearity models, pseudo-spectral gradients, residuals and hypothesis audits.

Every model splits ``grad_z H(t, x, z) = A z + r(t, x, z)`` where ``A`` is its
``linear_part`` (the asymptotic ``B`` of a saturating model, ``B1`` of a
pinched one).  The homotopy right-hand side used by both continuation modes is

    Phi'_lam(z) = (1 - lam) A z + lam grad_z H(z) = A z + lam r(z),

and for the pinched class ``A z + r`` is rewritten as ``B(t, x, z) z + f``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, GridMismatchError
from .index import MatrixField
from .spectral import ModeSet, SpectralField, SpectralTransform


class HamiltonianModel:
    """Base class; subclasses implement the pointwise remainder ``r``."""

    kind = "abstract"
    hypotheses: tuple[str, ...] = ()

    def __init__(self, linear_part: MatrixField, forcing: SpectralField | None, l_H: float | None, m: int):
        self.linear_part = linear_part
        self.forcing = forcing
        self.m = m
        self.l_H = float(l_H) if l_H is not None else self.lipschitz_bound()
        if not self.l_H > 0:
            raise ConfigurationError(f"l_H must be positive, got {self.l_H}", f"hamiltonians.{self.kind}")

    # -- pointwise core ------------------------------------------------------
    def remainder(self, z: np.ndarray, fval) -> np.ndarray:
        raise NotImplementedError

    def lipschitz_bound(self) -> float:
        raise NotImplementedError

    def forcing_sup(self) -> float:
        return 0.0 if self.forcing is None else self.forcing.sup_bound()

    def forcing_grid(self, transform: SpectralTransform):
        if self.forcing is None:
            return 0.0
        if self.forcing.modeset is not transform.modeset:
            raise GridMismatchError("forcing lives on a different mode set", "hamiltonians.grad_eval")
        cache = self.__dict__.setdefault("_fgrid", {})
        key = id(transform)
        if key not in cache:
            cache[key] = transform.to_grid(self.forcing.coeffs)
        return cache[key]

    def forcing_at(self, t, x):
        if self.forcing is None:
            return np.zeros((len(np.atleast_1d(t)), 2 * self.m))
        return self.forcing.evaluate(t, x)

    def _linear_pointwise(self, z: np.ndarray) -> np.ndarray:
        if not self.linear_part.is_constant:
            raise NotImplementedError("pointwise evaluation needs a constant linear part")
        return z @ self.linear_part.value.T

    def gradient_at(self, z: np.ndarray, fval) -> np.ndarray:
        """Pointwise ``grad_z H`` for point samples (used by the audit)."""
        return self._linear_pointwise(z) + self.remainder(z, fval)

    # -- grid level ----------------------------------------------------------
    def remainder_grid(self, transform: SpectralTransform, zg: np.ndarray) -> np.ndarray:
        return self.remainder(zg, self.forcing_grid(transform))

    def gradient_grid(self, transform: SpectralTransform, zg: np.ndarray) -> np.ndarray:
        return self.linear_part.apply_grid(transform, zg) + self.remainder_grid(transform, zg)

    def homotopy_rhs_grid(self, transform: SpectralTransform, zg: np.ndarray, lam: float) -> np.ndarray:
        return self.linear_part.apply_grid(transform, zg) + lam * self.remainder_grid(transform, zg)

    def homotopy_rhs(self, transform: SpectralTransform, coeffs: np.ndarray, lam: float) -> np.ndarray:
        """Coefficients of the projected ``Phi'_lam`` at the field ``coeffs``."""
        zg = transform.to_grid(coeffs)
        return transform.from_grid(self.homotopy_rhs_grid(transform, zg, lam))

    def remainder_sup(self) -> float:
        """Bound for ``sup |r|``; infinite when ``r`` is unbounded."""
        return np.inf

    def describe(self) -> dict:
        return {"kind": self.kind, "l_H": self.l_H, "hypotheses": list(self.hypotheses),
                "linear_part": self.linear_part.label}


class LinearForcedModel(HamiltonianModel):
    """``grad H = B z + f``: the remainder is the forcing alone."""

    kind = "linear_forced"
    hypotheses = ("lipschitz",)

    def __init__(self, B: MatrixField, forcing: SpectralField | None = None, l_H: float | None = None, m: int = 1):
        self.B = B
        super().__init__(B, forcing, l_H, m)

    def remainder(self, z, fval):
        return np.broadcast_to(fval, z.shape) + 0.0 * z

    def lipschitz_bound(self):
        if self.B.is_constant:
            lip = float(np.abs(np.linalg.eigvalsh(self.B.value)).max())
        else:
            return 1.0
        # any positive constant is a Lipschitz bound for the zero map
        return lip if lip > 0 else 0.5

    def remainder_sup(self):
        return self.forcing_sup()


class SaturatingModel(HamiltonianModel):
    """``r(z) = sign * M2 * z / sqrt(1 + |z|^2) + f``: bounded, with an asymptotic sign condition.

    ``M1`` bounds ``|r|``; the sign condition ``sign (r, z) >= c |z|`` holds for
    ``|z| > K`` with ``K / sqrt(1 + K^2) = saturation`` and
    ``c = saturation * M2 - sup |f|``.
    """

    kind = "saturating_asymptotic"

    def __init__(self, B: MatrixField, M2: float, sign: int = -1, forcing: SpectralField | None = None,
                 l_H: float | None = None, m: int = 1, saturation: float = 0.99):
        if sign not in (-1, 1):
            raise ConfigurationError(f"sign must be +1 or -1, got {sign}", "hamiltonians.saturating_asymptotic")
        if not M2 > 0:
            raise ConfigurationError(f"M2 must be positive, got {M2}", "hamiltonians.saturating_asymptotic")
        if not B.is_constant:
            raise ConfigurationError("saturating model needs a constant B", "hamiltonians.saturating_asymptotic")
        self.B = B
        self.M2 = float(M2)
        self.sign = int(sign)
        self.saturation = float(saturation)
        self.hypotheses = ("lipschitz", "bounded_remainder", "sign_condition_plus" if sign > 0 else "sign_condition_minus")
        super().__init__(B, forcing, l_H, m)
        self.K = float(self.saturation / np.sqrt(1 - self.saturation**2))
        self.M1 = self.M2 + self.forcing_sup()
        self.sign_constant = self.saturation * self.M2 - self.forcing_sup()

    def remainder(self, z, fval):
        s = np.sqrt(1.0 + np.sum(z * z, axis=-1, keepdims=True))
        return self.sign * self.M2 * z / s + fval

    def lipschitz_bound(self):
        # Jacobian of the saturating term has spectrum in sign*[0, M2]
        ev = np.linalg.eigvalsh(self.B.value)
        lo, hi = ev.min(), ev.max()
        if self.sign < 0:
            lo -= self.M2
        else:
            hi += self.M2
        return float(max(abs(lo), abs(hi)))

    def remainder_sup(self):
        return self.M1

    def describe(self):
        return dict(super().describe(), M1=self.M1, M2=self.M2, K=self.K, sign=self.sign,
                    sign_constant=self.sign_constant)


class PinchedModel(HamiltonianModel):
    """``grad H = B(z) z + f`` with ``B(z) = B1 + sigma(|z|_D) D``, ``D = B2 - B1``.

    ``sigma(rho) = rho / (1 + rho)`` and ``|z|_D^2 = z^T D z``, so ``B(z) z`` is
    the gradient of a function of ``z^T D z`` and both ``B(z)`` and the Jacobian
    stay between ``B1`` and ``B2``.
    """

    kind = "pinched"
    hypotheses = ("lipschitz", "sublinear_remainder", "pinching")

    def __init__(self, B1: MatrixField, B2: MatrixField, forcing: SpectralField | None = None,
                 l_H: float | None = None, m: int = 1):
        if not (B1.is_constant and B2.is_constant):
            raise ConfigurationError("pinched model needs constant B1, B2", "hamiltonians.pinched")
        D = B2.value - B1.value
        if np.linalg.eigvalsh(D).min() < -1e-12:
            raise ConfigurationError("B1 <= B2 fails", "hamiltonians.pinched")
        self.B1, self.B2, self.D = B1, B2, D
        super().__init__(B1, forcing, l_H, m)

    def _rho(self, z):
        q = np.einsum("...a,ab,...b->...", z, self.D, z)
        return np.sqrt(np.maximum(q, 0.0))[..., None]

    def state_matrix(self, z):
        """``B(t, x, z)`` for point samples ``z`` of shape ``(..., 2m)``."""
        rho = self._rho(z)
        return self.B1.value + (rho / (1 + rho))[..., None] * self.D

    def remainder(self, z, fval):
        # r relative to B1: sigma * D z + f
        rho = self._rho(z)
        return (rho / (1 + rho)) * (z @ self.D.T) + fval

    def true_remainder(self, z, fval):
        """The remainder ``grad H - B(z) z`` relative to the state matrix, i.e. the forcing."""
        return np.broadcast_to(fval, z.shape) + 0.0 * z

    def lipschitz_bound(self):
        lo = np.linalg.eigvalsh(self.B1.value).min()
        hi = np.linalg.eigvalsh(self.B2.value).max()
        return float(max(abs(lo), abs(hi)))

    def describe(self):
        return dict(super().describe(), B1=self.B1.label, B2=self.B2.label)


def grad_eval(model: HamiltonianModel, z: SpectralField, oversample: int = 2) -> SpectralField:
    """Projected ``grad_z H(t, x, z(t, x))`` computed on the oversampled grid."""
    tr = z.modeset.transform(oversample)
    zg = tr.to_grid(z.coeffs)
    return SpectralField(z.modeset, tr.from_grid(model.gradient_grid(tr, zg)))


def residual(model: HamiltonianModel, z: SpectralField, eps: float, lam: float, oversample: int = 2) -> float:
    """``|| (eps + L) z - P Phi'_lam(z) ||`` on the truncated space."""
    ms = z.modeset
    tr = ms.transform(oversample)
    lhs = ms.L_sparse @ z.coeffs + eps * z.coeffs
    return float(np.linalg.norm(lhs - model.homotopy_rhs(tr, z.coeffs, lam)))


def remainder_norm(model: HamiltonianModel, z: SpectralField, oversample: int = 2) -> float:
    """Truncated ``L^2`` norm of ``r(., ., z)``."""
    tr = z.modeset.transform(oversample)
    return float(np.linalg.norm(tr.from_grid(model.remainder_grid(tr, tr.to_grid(z.coeffs)))))


@dataclass
class CheckResult:
    passed: bool
    margin: float
    detail: dict = field(default_factory=dict)


@dataclass
class AuditReport:
    kind: str
    checks: dict[str, CheckResult]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "passed": self.passed,
            "checks": {k: {"passed": c.passed, "margin": c.margin, **c.detail} for k, c in self.checks.items()},
        }


def _sample_points(model, rng, count):
    ms = model.forcing.modeset if model.forcing is not None else None
    if ms is None:
        return None, None
    d = ms.domain
    t = rng.uniform(0, d.period, count)
    x = rng.uniform(0, 1, (count, d.dim)) * np.array(d.lengths)
    return t, x


def _structured_z(rng, dim, count, radius, K):
    """Random directions at radii near 0, near K, far beyond K and uniform in the ball."""
    dirs = rng.standard_normal((count, dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    groups = [
        rng.uniform(0, 1e-3, count),
        K * rng.uniform(0.9, 1.1, count),
        rng.uniform(max(10 * K, radius), 100 * max(K, radius, 1.0), count),
        radius * rng.uniform(0, 1, count) ** (1 / dim),
    ]
    return np.concatenate([dirs * g[:, None] for g in groups])


def audit_conditions(model: HamiltonianModel, sample_count: int = 1000, radius: float = 10.0,
                     seed: int = 0) -> AuditReport:
    """Check the declared hypotheses on random and structured samples.

    Failures are reported, never raised.
    """
    rng = np.random.default_rng(seed)
    dim = 2 * model.m
    K = getattr(model, "K", 1.0)
    z = _structured_z(rng, dim, max(1, sample_count), radius, K)
    P = len(z)
    t, x = _sample_points(model, rng, P)
    fval = model.forcing_at(t, x) if t is not None else np.zeros((P, dim))
    checks: dict[str, CheckResult] = {}

    # Lipschitz ratios for small and large increments
    # increments scale with |z| so cancellation stays below 1e-12 relative
    zn = np.linalg.norm(z, axis=1, keepdims=True)
    scale = (1.0 + zn) * np.exp(rng.uniform(np.log(1e-4), 0.0, (P, 1)))
    y = rng.standard_normal((P, dim))
    y *= scale / np.linalg.norm(y, axis=1, keepdims=True)
    ratio = np.linalg.norm(model.gradient_at(z + y, fval) - model.gradient_at(z, fval), axis=1) / np.linalg.norm(y, axis=1)
    worst = float(ratio.max())
    checks["lipschitz"] = CheckResult(worst <= model.l_H * (1 + 1e-9), model.l_H - worst,
                                      {"max_ratio": worst, "declared_l_H": model.l_H})

    if isinstance(model, SaturatingModel):
        r = model.remainder(z, fval)
        rn = np.linalg.norm(r, axis=1)
        checks["bounded_remainder"] = CheckResult(bool(rn.max() <= model.M1), model.M1 - float(rn.max()),
                                                  {"max_abs_r": float(rn.max()), "M1": model.M1})
        zn = np.linalg.norm(z, axis=1)
        far = zn > model.K
        lhs = model.sign * np.sum(r * z, axis=1)
        slack = lhs[far] - model.sign_constant * zn[far]
        m_far = float(slack.min()) if slack.size else np.inf
        checks["sign_condition"] = CheckResult(
            bool(model.sign_constant > 0 and m_far >= 0), m_far,
            {"K": model.K, "sign_constant": model.sign_constant, "samples_beyond_K": int(far.sum())})

    if isinstance(model, PinchedModel):
        Bz = model.state_matrix(z)
        lower = float(np.linalg.eigvalsh(Bz - model.B1.value).min())
        upper = float(np.linalg.eigvalsh(model.B2.value - Bz).min())
        m_pin = min(lower, upper)
        checks["pinching"] = CheckResult(m_pin >= -1e-12, m_pin, {"lower_margin": lower, "upper_margin": upper})
        # sublinear remainder: max |r|/|z| on shells 10, 100, 1000 must drop >= 2x per decade
        shells = []
        for rad in (10.0, 100.0, 1000.0):
            dirs = rng.standard_normal((P, dim))
            dirs *= rad / np.linalg.norm(dirs, axis=1, keepdims=True)
            rr = np.linalg.norm(model.true_remainder(dirs, fval), axis=1) / rad
            shells.append(float(rr.max()))
        decay = [shells[i] / shells[i + 1] if shells[i + 1] > 0 else np.inf for i in range(2)]
        ok = all(s == 0 for s in shells) or all(dcy >= 2 for dcy in decay)
        checks["o_z_decay"] = CheckResult(ok, min(decay) - 2, {"shell_ratios": shells})

    return AuditReport(model.kind, checks)


def measure_lipschitz(model: HamiltonianModel, modeset: ModeSet, pairs: int = 100, scale: float = 1.0,
                      step: float = 1e-3, seed: int = 0, oversample: int = 2) -> float:
    """Largest ``||grad(z+h) - grad(z)|| / ||h||`` over random field pairs."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(pairs):
        z = SpectralField.random(modeset, rng, scale)
        h = SpectralField.random(modeset, rng, step)
        g1 = grad_eval(model, z + h, oversample)
        g0 = grad_eval(model, z, oversample)
        worst = max(worst, (g1 - g0).norm() / h.norm())
    return worst
