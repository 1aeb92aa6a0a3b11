"""Space-time spectral basis for ``L = J d/dt - N Lap_x`` on ``S^1 x Omega``.

``Omega`` is a box ``prod (0, L_i)`` with Dirichlet or Neumann conditions, so
the spatial eigenfunctions are products of sines or cosines and ``L`` is
block diagonal in the real trigonometric time basis.  Each block is one scalar
basis function carrying ``2m`` vector components; the ``cos``/``sin`` pair of a
given ``(k, n)`` is coupled through ``J d/dt``.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property, lru_cache
from itertools import product
from pathlib import Path

import numpy as np
import scipy.fft
import scipy.sparse

from .errors import ConfigurationError, GridMismatchError, SingularOperatorError

ORDERING_VERSION = 1
_BIN_MAGIC = b"HAMFLOW-SF\x01\n"


class Boundary(str, Enum):
    DIRICHLET = "dirichlet"
    NEUMANN = "neumann"


class Parity(str, Enum):
    CONST = "const"
    COS = "cos"
    SIN = "sin"


_PARITY_RANK = {Parity.CONST: 0, Parity.COS: 1, Parity.SIN: 2}


@lru_cache(maxsize=None)
def structure_matrices(m: int) -> tuple[np.ndarray, np.ndarray]:
    """Return the ``2m x 2m`` matrices ``J`` and ``N`` (read-only)."""
    eye = np.eye(m)
    zero = np.zeros((m, m))
    J = np.block([[zero, -eye], [eye, zero]])
    N = np.block([[zero, eye], [eye, zero]])
    J.flags.writeable = False
    N.flags.writeable = False
    return J, N


@dataclass(frozen=True)
class DomainSpec:
    """Box domain, boundary condition, period and half component count."""

    lengths: tuple[float, ...] = (np.pi,)
    boundary: Boundary = Boundary.DIRICHLET
    period: float = 2 * np.pi
    m: int = 1

    def __post_init__(self):
        lengths = tuple(float(v) for v in np.atleast_1d(self.lengths))
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "boundary", Boundary(self.boundary))
        object.__setattr__(self, "period", float(self.period))
        where = "spectral_core.DomainSpec"
        if not lengths or any(not np.isfinite(v) or v <= 0 for v in lengths):
            raise ConfigurationError(f"box lengths must be positive, got {lengths}", where)
        if not np.isfinite(self.period) or self.period <= 0:
            raise ConfigurationError(f"period must be positive, got {self.period}", where)
        if int(self.m) != self.m or self.m < 1:
            raise ConfigurationError(f"m must be a positive integer, got {self.m}", where)
        object.__setattr__(self, "m", int(self.m))

    @property
    def dim(self) -> int:
        return len(self.lengths)

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    @property
    def n_min(self) -> int:
        return 1 if self.boundary is Boundary.DIRICHLET else 0

    def spatial_eigenvalue(self, n) -> float:
        return float(sum((ni * np.pi / Li) ** 2 for ni, Li in zip(n, self.lengths)))

    def frequency(self, k: int) -> float:
        return 2 * np.pi * k / self.period

    def to_dict(self) -> dict:
        return {
            "lengths": list(self.lengths),
            "boundary": self.boundary.value,
            "period": self.period,
            "m": self.m,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DomainSpec":
        return cls(tuple(data["lengths"]), Boundary(data["boundary"]), data["period"], data["m"])


@dataclass(frozen=True)
class ModeBlock:
    """One scalar basis function ``tau_k(t) phi_n(x)`` times ``R^{2m}``."""

    k: int
    n: tuple[int, ...]
    mu: float
    parity: Parity
    omega: float
    m: int

    @property
    def J(self) -> np.ndarray:
        return structure_matrices(self.m)[0]

    @property
    def Nmat(self) -> np.ndarray:
        return structure_matrices(self.m)[1]

    @property
    def magnitude(self) -> float:
        return float(np.hypot(self.omega, self.mu))

    @property
    def label(self) -> str:
        n = ",".join(str(v) for v in self.n)
        return f"k={self.k}:{self.parity.value}:n=({n})"


def mode_eigenvalues(block: ModeBlock) -> tuple[float, float]:
    """Eigenvalues ``+-sqrt(omega^2 + mu^2)`` of ``L`` on the block."""
    lam = block.magnitude
    return lam, -lam


@dataclass(frozen=True)
class CouplingGroup:
    """Blocks sharing ``(k, n)``: a lone constant block or a cos/sin pair."""

    k: int
    n: tuple[int, ...]
    mu: float
    omega: float
    blocks: tuple[int, ...]
    indices: np.ndarray = field(repr=False, compare=False)

    @property
    def magnitude(self) -> float:
        return float(np.hypot(self.omega, self.mu))


@dataclass(frozen=True, eq=False)
class ModeSet:
    """Truncated, deterministically ordered family of mode blocks."""

    domain: DomainSpec
    k_max: int
    spatial_cutoff: float
    blocks: tuple[ModeBlock, ...]

    @property
    def m(self) -> int:
        return self.domain.m

    @property
    def ncomp(self) -> int:
        return 2 * self.domain.m

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    @property
    def total_dim(self) -> int:
        return self.n_blocks * self.ncomp

    @cached_property
    def n_max(self) -> tuple[int, ...]:
        return tuple(max(b.n[i] for b in self.blocks) for i in range(self.domain.dim))

    @cached_property
    def block_lookup(self) -> dict:
        return {(b.k, b.parity, b.n): i for i, b in enumerate(self.blocks)}

    @cached_property
    def groups(self) -> tuple[CouplingGroup, ...]:
        seen: dict = {}
        for i, b in enumerate(self.blocks):
            seen.setdefault((b.k, b.n), []).append(i)
        out = []
        c = self.ncomp
        for (k, n), members in seen.items():
            members.sort(key=lambda i: _PARITY_RANK[self.blocks[i].parity])
            idx = np.concatenate([np.arange(i * c, (i + 1) * c) for i in members])
            b0 = self.blocks[members[0]]
            out.append(CouplingGroup(k, n, b0.mu, b0.omega, tuple(members), idx))
        return tuple(out)

    @cached_property
    def magnitudes(self) -> np.ndarray:
        """``|lambda|`` of ``L`` for every coefficient (constant per block)."""
        mags = np.repeat([b.magnitude for b in self.blocks], self.ncomp)
        mags.flags.writeable = False
        return mags

    @cached_property
    def L_sparse(self) -> scipy.sparse.csr_matrix:
        return assemble_truncated_L(self, sparse=True)

    @cached_property
    def L_dense(self) -> np.ndarray:
        out = self.L_sparse.toarray()
        out.flags.writeable = False
        return out

    def transform(self, oversample: int = 2) -> "SpectralTransform":
        cache = self.__dict__.setdefault("_transforms", {})
        if oversample not in cache:
            cache[oversample] = SpectralTransform(self, oversample)
        return cache[oversample]

    def refined(self) -> "ModeSet":
        """The next truncation level: ``k_max + 1`` and the next spatial eigenvalue."""
        d = self.domain
        base = [int(np.floor(Li * np.sqrt(self.spatial_cutoff) / np.pi + 1e-9)) for Li in d.lengths]
        ranges = [range(d.n_min, nm + 2) for nm in base]
        mus = [d.spatial_eigenvalue(n) for n in product(*ranges)]
        above = [mu for mu in mus if mu > self.spatial_cutoff * (1 + 1e-12)]
        return enumerate_modes(d, self.k_max + 1, min(above))

    def labels(self) -> list[str]:
        return [f"{b.label}:c={c}" for b in self.blocks for c in range(self.ncomp)]

    def header(self) -> dict:
        return {
            "domain": self.domain.to_dict(),
            "k_max": self.k_max,
            "spatial_cutoff": self.spatial_cutoff,
            "ordering_version": ORDERING_VERSION,
            "total_dim": self.total_dim,
        }


def enumerate_modes(domain: DomainSpec, k_max: int, spatial_cutoff: float) -> ModeSet:
    """All blocks with ``|k| <= k_max`` and ``mu <= spatial_cutoff``.

    Blocks are sorted by ``(mu, k, parity, n)``; components follow within a
    block, so the coefficient order is lexicographic in
    ``(mu, k, parity, n, component)``.
    """
    where = "spectral_core.enumerate_modes"
    if int(k_max) != k_max or k_max < 0:
        raise ConfigurationError(f"k_max must be a nonnegative integer, got {k_max}", where)
    k_max = int(k_max)
    spatial_cutoff = float(spatial_cutoff)
    if not np.isfinite(spatial_cutoff) or spatial_cutoff <= 0:
        raise ConfigurationError(f"spatial_cutoff must be positive, got {spatial_cutoff}", where)
    limit = spatial_cutoff * (1 + 1e-12)
    nmax = [int(np.floor(Li * np.sqrt(limit) / np.pi + 1e-9)) for Li in domain.lengths]
    spatial = []
    for n in product(*[range(domain.n_min, nm + 1) for nm in nmax]):
        mu = domain.spatial_eigenvalue(n)
        if mu <= limit:
            spatial.append((mu, n))
    if not spatial:
        raise ConfigurationError(
            f"empty mode set: spatial_cutoff={spatial_cutoff} is below the first spatial eigenvalue",
            where,
        )
    blocks = []
    for mu, n in spatial:
        for k in range(k_max + 1):
            omega = domain.frequency(k)
            parities = (Parity.CONST,) if k == 0 else (Parity.COS, Parity.SIN)
            for p in parities:
                blocks.append(ModeBlock(k, n, mu, p, omega, domain.m))
    blocks.sort(key=lambda b: (round(b.mu, 9), b.k, _PARITY_RANK[b.parity], b.n))
    return ModeSet(domain, k_max, spatial_cutoff, tuple(blocks))


def group_matrix(group: CouplingGroup, m: int) -> np.ndarray:
    """Matrix of ``L`` on one coupling group, in (cos, sin) block order."""
    J, N = structure_matrices(m)
    if group.k == 0:
        return group.mu * N
    mu, w = group.mu, group.omega
    return np.block([[mu * N, w * J], [-w * J, mu * N]])


def assemble_truncated_L(modeset: ModeSet, sparse: bool = False):
    """Galerkin matrix of ``L`` on the mode set (symmetric, block diagonal)."""
    rows, cols, vals = [], [], []
    for g in modeset.groups:
        G = group_matrix(g, modeset.m)
        gi, gj = np.nonzero(G)
        rows.append(g.indices[gi])
        cols.append(g.indices[gj])
        vals.append(G[gi, gj])
    D = modeset.total_dim
    mat = scipy.sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(D, D)
    ).tocsr()
    return mat if sparse else mat.toarray()


def stacked_group_matrices(modeset: ModeSet, B: np.ndarray | None = None, shift: float = 0.0):
    """``shift*I + L_g - B`` for every group, stacked by group size.

    Returns a list of ``(group_ids, matrices)`` with ``matrices`` of shape
    ``(len(group_ids), s, s)``.
    """
    c = modeset.ncomp
    by_size: dict = {}
    for gid, g in enumerate(modeset.groups):
        by_size.setdefault(len(g.blocks), []).append(gid)
    out = []
    for nb, gids in sorted(by_size.items()):
        mats = np.stack([group_matrix(modeset.groups[i], modeset.m) for i in gids])
        s = nb * c
        if shift:
            mats = mats + shift * np.eye(s)
        if B is not None:
            mats = mats - np.kron(np.eye(nb), B)
        out.append((gids, mats))
    return out


def solve_linear(modeset: ModeSet, B, f: "SpectralField", shift: float = 0.0, tol: float = 1e-10):
    """Solve ``(shift*I + L - B) z = f`` blockwise for a constant symmetric ``B``."""
    where = "spectral_core.solve_linear"
    c = modeset.ncomp
    B = np.zeros((c, c)) if B is None else np.asarray(B, dtype=float)
    if B.shape != (c, c):
        raise ConfigurationError(f"B must be {c}x{c}, got shape {B.shape}", where)
    if f.modeset is not modeset:
        raise GridMismatchError("forcing lives on a different mode set", where)
    z = np.zeros(modeset.total_dim)
    for gids, mats in stacked_group_matrices(modeset, B, shift):
        w, V = np.linalg.eigh(mats)
        bad = np.abs(w) <= tol
        if bad.any():
            gi, ei = np.argwhere(bad)[0]
            g = modeset.groups[gids[gi]]
            raise SingularOperatorError(
                f"operator singular on block (k={g.k}, n={g.n}, mu={g.mu:g}): eigenvalue {w[gi, ei]:.3e}",
                where,
                eigenvalue=float(w[gi, ei]),
                block=(g.k, g.n, g.mu),
            )
        idx = np.stack([modeset.groups[i].indices for i in gids])
        rhs = f.coeffs[idx]
        sol = np.einsum("gij,gj->gi", V, np.einsum("gji,gj->gi", V, rhs) / w)
        z[idx] = sol
    return SpectralField(modeset, z)


DENSE_LIMIT = 2_000_000


class SpectralTransform:
    """Fast trigonometric transforms between coefficients and collocation grids.

    Time uses a uniform periodic grid (real FFT); space uses interior points of
    a type-I sine grid (Dirichlet) or the endpoints-included type-I cosine grid
    (Neumann).  Grid values have shape ``(..., nt, nx_1, ..., nx_N, 2m)``.
    """

    def __init__(self, modeset: ModeSet, oversample: int = 2):
        where = "spectral_core.transform"
        if int(oversample) != oversample or oversample < 2:
            raise GridMismatchError(f"oversample must be an integer >= 2, got {oversample}", where)
        self.modeset = modeset
        self.oversample = int(oversample)
        d = modeset.domain
        self.T = d.period
        self.nt = self.oversample * (2 * modeset.k_max + 1)
        self.dirichlet = d.boundary is Boundary.DIRICHLET
        nx, coords, wts, nspec = [], [], [], []
        for Li, nm in zip(d.lengths, modeset.n_max):
            if self.dirichlet:
                N = self.oversample * (nm + 1) - 1
                h = Li / (N + 1)
                coords.append(h * np.arange(1, N + 1))
                wts.append(np.full(N, h))
                nspec.append(nm)
            else:
                N = self.oversample * (nm + 1) + 1
                h = Li / (N - 1)
                coords.append(h * np.arange(N))
                w = np.full(N, h)
                w[[0, -1]] *= 0.5
                wts.append(w)
                nspec.append(nm + 1)
            nx.append(N)
        self.nx = tuple(nx)
        self.t = self.T * np.arange(self.nt) / self.nt
        self.x = tuple(coords)
        self.grid_shape = (self.nt,) + self.nx
        self.value_shape = self.grid_shape + (modeset.ncomp,)
        w = np.full(self.nt, self.T / self.nt)
        for wi in wts:
            w = np.multiply.outer(w, wi)
        self.weights = w
        self._spec_shape = (2 * modeset.k_max + 1,) + tuple(nspec)
        tidx = []
        sidx = []
        for b in modeset.blocks:
            tidx.append(0 if b.k == 0 else 2 * b.k - (1 if b.parity is Parity.COS else 0))
            sidx.append(tuple(ni - d.n_min for ni in b.n))
        multi = (np.array(tidx),) + tuple(np.array(s) for s in zip(*sidx))
        self._flat = np.ravel_multi_index(multi, self._spec_shape)
        self._norms = []
        for Li, ns in zip(d.lengths, nspec):
            if self.dirichlet:
                self._norms.append(np.full(ns, np.sqrt(2 / Li)))
            else:
                v = np.full(ns, np.sqrt(2 / Li))
                v[0] = np.sqrt(1 / Li)
                self._norms.append(v)

    def mesh(self):
        """Broadcastable ``t`` and ``x_i`` arrays over the grid shape."""
        arrays = np.meshgrid(self.t, *self.x, indexing="ij")
        return arrays[0], tuple(arrays[1:])

    def _check(self, arr, shape, what):
        if arr.shape[-len(shape):] != shape:
            raise GridMismatchError(
                f"{what} has trailing shape {arr.shape[-len(shape):]}, expected {shape}",
                "spectral_core.transform",
            )

    def _dense_maps(self):
        # small truncations: explicit synthesis/analysis matrices beat FFT call overhead
        if "_dense" not in self.__dict__:
            D = self.modeset.total_dim
            G = int(np.prod(self.value_shape))
            if D * G > DENSE_LIMIT:
                self._dense = None
            else:
                syn = self._to_grid_fft(np.eye(D)).reshape(D, G)
                ana = self._from_grid_fft(np.eye(G).reshape((G,) + self.value_shape)).reshape(G, D)
                self._dense = (syn, ana)
        return self._dense

    def to_grid(self, coeffs) -> np.ndarray:
        coeffs = np.asarray(coeffs, dtype=float)
        self._check(coeffs, (self.modeset.total_dim,), "coefficient array")
        dense = self._dense_maps()
        if dense is None:
            return self._to_grid_fft(coeffs)
        return (coeffs @ dense[0]).reshape(coeffs.shape[:-1] + self.value_shape)

    def from_grid(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        self._check(values, self.value_shape, "grid array")
        dense = self._dense_maps()
        if dense is None:
            return self._from_grid_fft(values)
        lead = values.ndim - len(self.value_shape)
        return values.reshape(values.shape[:lead] + (-1,)) @ dense[1]

    def _to_grid_fft(self, coeffs) -> np.ndarray:
        batch = coeffs.shape[:-1]
        lead = len(batch)
        c = self.modeset.ncomp
        S = int(np.prod(self._spec_shape))
        C = np.zeros(batch + (S, c))
        C[..., self._flat, :] = coeffs.reshape(batch + (self.modeset.n_blocks, c))
        C = C.reshape(batch + self._spec_shape + (c,))
        for ax, (Li, N, nrm) in enumerate(zip(self.modeset.domain.lengths, self.nx, self._norms)):
            axis = lead + 1 + ax
            g = C * _along(nrm, axis, C.ndim)
            pad = [(0, 0)] * C.ndim
            pad[axis] = (0, N - g.shape[axis])
            g = np.pad(g, pad)
            if self.dirichlet:
                C = scipy.fft.dst(g, type=1, axis=axis) / 2
            else:
                g0 = np.take(g, [0], axis=axis)
                C = (scipy.fft.dct(g, type=1, axis=axis) + g0) / 2
        K = self.modeset.k_max
        axis = lead
        X = np.zeros(C.shape[:axis] + (self.nt // 2 + 1,) + C.shape[axis + 1:], dtype=complex)
        a = np.take(C, [0], axis=axis)
        _assign(X, axis, slice(0, 1), self.nt * a / np.sqrt(self.T))
        if K:
            cos = np.take(C, np.arange(1, 2 * K, 2), axis=axis)
            sin = np.take(C, np.arange(2, 2 * K + 1, 2), axis=axis)
            _assign(X, axis, slice(1, K + 1), self.nt * np.sqrt(2 / self.T) * (cos - 1j * sin) / 2)
        return scipy.fft.irfft(X, n=self.nt, axis=axis)

    def _from_grid_fft(self, values) -> np.ndarray:
        lead = values.ndim - len(self.value_shape)
        batch = values.shape[:lead]
        K = self.modeset.k_max
        F = scipy.fft.rfft(values, axis=lead)
        tc = np.empty(F.shape[:lead] + (2 * K + 1,) + F.shape[lead + 1:])
        _assign(tc, lead, slice(0, 1), np.take(F, [0], axis=lead).real * np.sqrt(self.T) / self.nt)
        if K:
            Fk = np.take(F, np.arange(1, K + 1), axis=lead) * (np.sqrt(2 * self.T) / self.nt)
            _assign(tc, lead, slice(1, 2 * K, 2), Fk.real)
            _assign(tc, lead, slice(2, 2 * K + 1, 2), -Fk.imag)
        C = tc
        for ax, (Li, N, nrm) in enumerate(zip(self.modeset.domain.lengths, self.nx, self._norms)):
            axis = lead + 1 + ax
            ns = len(nrm)
            if self.dirichlet:
                h = Li / (N + 1)
                y = scipy.fft.dst(C, type=1, axis=axis)
            else:
                h = Li / (N - 1)
                y = scipy.fft.dct(C, type=1, axis=axis)
            y = np.take(y, np.arange(ns), axis=axis)
            C = y * (h / 2) * _along(nrm, axis, y.ndim)
        c = self.modeset.ncomp
        C = C.reshape(batch + (-1, c))
        return C[..., self._flat, :].reshape(batch + (self.modeset.total_dim,))

    def grid_norm(self, values) -> np.ndarray:
        """Quadrature ``L^2(S^1 x Omega)`` norm over the grid axes."""
        values = np.asarray(values, dtype=float)
        self._check(values, self.value_shape, "grid array")
        sq = np.sum(values**2, axis=-1) * self.weights
        axes = tuple(range(sq.ndim - len(self.grid_shape), sq.ndim))
        return np.sqrt(np.sum(sq, axis=axes))

    def project(self, values) -> np.ndarray:
        return self.from_grid(values)


def _along(vec, axis, ndim):
    shape = [1] * ndim
    shape[axis] = len(vec)
    return np.reshape(vec, shape)


def _assign(arr, axis, sl, value):
    index = [slice(None)] * arr.ndim
    index[axis] = sl
    arr[tuple(index)] = value


def basis_values(modeset: ModeSet, t, x) -> np.ndarray:
    """Scalar basis functions at points: returns ``(P, n_blocks)``."""
    d = modeset.domain
    t = np.atleast_1d(np.asarray(t, dtype=float))
    x = np.asarray(x, dtype=float).reshape(len(t), d.dim)
    cols = []
    for b in modeset.blocks:
        if b.parity is Parity.CONST:
            v = np.full(len(t), 1 / np.sqrt(d.period))
        elif b.parity is Parity.COS:
            v = np.sqrt(2 / d.period) * np.cos(b.omega * t)
        else:
            v = np.sqrt(2 / d.period) * np.sin(b.omega * t)
        for i, (ni, Li) in enumerate(zip(b.n, d.lengths)):
            if d.boundary is Boundary.DIRICHLET:
                v = v * np.sqrt(2 / Li) * np.sin(ni * np.pi * x[:, i] / Li)
            elif ni == 0:
                v = v / np.sqrt(Li)
            else:
                v = v * np.sqrt(2 / Li) * np.cos(ni * np.pi * x[:, i] / Li)
        cols.append(v)
    return np.stack(cols, axis=1)


def basis_sup(modeset: ModeSet) -> np.ndarray:
    """``sup |phi_b|`` over ``S^1 x Omega`` for every block."""
    d = modeset.domain
    out = []
    for b in modeset.blocks:
        s = 1 / np.sqrt(d.period) if b.parity is Parity.CONST else np.sqrt(2 / d.period)
        for ni, Li in zip(b.n, d.lengths):
            s *= 1 / np.sqrt(Li) if (d.boundary is Boundary.NEUMANN and ni == 0) else np.sqrt(2 / Li)
        out.append(s)
    return np.array(out)


class SpectralField:
    """A field ``z(t, x) in R^{2m}`` stored as coefficients over a mode set."""

    def __init__(self, modeset: ModeSet, coeffs=None):
        self.modeset = modeset
        if coeffs is None:
            coeffs = np.zeros(modeset.total_dim)
        coeffs = np.array(coeffs, dtype=float)
        if coeffs.shape != (modeset.total_dim,):
            raise GridMismatchError(
                f"expected {modeset.total_dim} coefficients, got shape {coeffs.shape}",
                "spectral_core.SpectralField",
            )
        self.coeffs = coeffs

    @classmethod
    def random(cls, modeset: ModeSet, rng, scale: float = 1.0) -> "SpectralField":
        return cls(modeset, scale * rng.standard_normal(modeset.total_dim))

    @classmethod
    def from_terms(cls, modeset: ModeSet, terms) -> "SpectralField":
        """Build from ``(k, parity, n, component, amplitude)`` terms."""
        out = np.zeros(modeset.total_dim)
        for k, parity, n, comp, amp in terms:
            key = (int(k), Parity(parity), tuple(int(v) for v in np.atleast_1d(n)))
            if key not in modeset.block_lookup:
                raise ConfigurationError(
                    f"mode {key} is not in the truncated mode set", "spectral_core.SpectralField"
                )
            if not 0 <= comp < modeset.ncomp:
                raise ConfigurationError(f"component {comp} out of range", "spectral_core.SpectralField")
            out[modeset.block_lookup[key] * modeset.ncomp + comp] += amp
        return cls(modeset, out)

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def to_grid(self, oversample: int = 2) -> np.ndarray:
        return self.modeset.transform(oversample).to_grid(self.coeffs)

    def evaluate(self, t, x) -> np.ndarray:
        """Point values ``(P, 2m)`` at arbitrary ``(t, x)``."""
        phi = basis_values(self.modeset, t, x)
        return phi @ self.coeffs.reshape(self.modeset.n_blocks, self.modeset.ncomp)

    def sup_bound(self) -> float:
        """Upper bound for ``sup |z(t, x)|`` from the coefficients."""
        c = self.coeffs.reshape(self.modeset.n_blocks, self.modeset.ncomp)
        return float(np.sum(basis_sup(self.modeset) * np.linalg.norm(c, axis=1)))

    def _like(self, coeffs):
        return SpectralField(self.modeset, coeffs)

    def _other(self, other):
        if isinstance(other, SpectralField):
            if other.modeset is not self.modeset:
                raise GridMismatchError("fields live on different mode sets", "spectral_core.SpectralField")
            return other.coeffs
        return other

    def __add__(self, other):
        return self._like(self.coeffs + self._other(other))

    def __sub__(self, other):
        return self._like(self.coeffs - self._other(other))

    def __mul__(self, scalar):
        return self._like(self.coeffs * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return self._like(-self.coeffs)

    def __repr__(self):
        return f"SpectralField(total_dim={self.modeset.total_dim}, norm={self.norm():.6g})"

    def save(self, path) -> None:
        """Write the self-describing binary format (JSON header + ``<f8`` data)."""
        header = dict(self.modeset.header(), format="hamflow.spectralfield", dtype="<f8")
        raw = json.dumps(header, sort_keys=True).encode()
        with open(path, "wb") as fh:
            fh.write(_BIN_MAGIC)
            fh.write(struct.pack("<Q", len(raw)))
            fh.write(raw)
            fh.write(self.coeffs.astype("<f8").tobytes())

    @classmethod
    def load(cls, path) -> "SpectralField":
        data = Path(path).read_bytes()
        where = "spectral_core.SpectralField.load"
        if not data.startswith(_BIN_MAGIC):
            raise ConfigurationError(f"{path} is not a SpectralField file", where)
        off = len(_BIN_MAGIC)
        (hlen,) = struct.unpack("<Q", data[off:off + 8])
        off += 8
        header = json.loads(data[off:off + hlen])
        off += hlen
        if header.get("ordering_version") != ORDERING_VERSION:
            raise ConfigurationError(f"unsupported ordering version {header.get('ordering_version')}", where)
        modeset = enumerate_modes(DomainSpec.from_dict(header["domain"]), header["k_max"], header["spatial_cutoff"])
        coeffs = np.frombuffer(data[off:], dtype="<f8")
        if coeffs.size != header["total_dim"] or coeffs.size != modeset.total_dim:
            raise GridMismatchError("coefficient count does not match header", where)
        return cls(modeset, coeffs.astype(float))

    def to_csv(self, path) -> None:
        lines = ["index,k,parity,n,mu,component,coefficient"]
        c = self.modeset.ncomp
        for i, b in enumerate(self.modeset.blocks):
            n = " ".join(str(v) for v in b.n)
            for comp in range(c):
                val = self.coeffs[i * c + comp]
                lines.append(f"{i * c + comp},{b.k},{b.parity.value},{n},{b.mu:.17g},{comp},{val:.17g}")
        Path(path).write_text("\n".join(lines) + "\n")
