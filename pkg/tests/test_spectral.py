import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hamflow.errors import ConfigurationError, GridMismatchError, SingularOperatorError
from hamflow.spectral import (
    Boundary,
    DomainSpec,
    Parity,
    SpectralField,
    assemble_truncated_L,
    basis_sup,
    enumerate_modes,
    mode_eigenvalues,
    solve_linear,
    structure_matrices,
)


def analytic_spectrum(k_max, l_max, m=1):
    out = []
    for k in range(k_max + 1):
        for l in range(1, l_max + 1):
            v = math.sqrt(k * k + l**4)
            mult = m * (1 if k == 0 else 2)
            out += [v] * mult + [-v] * mult
    return np.sort(out)


def test_structure_matrices_anticommute():
    for m in (1, 2, 3):
        J, N = structure_matrices(m)
        I = np.eye(2 * m)
        assert np.allclose(J.T, -J) and np.allclose(J @ J, -I)
        assert np.allclose(N, N.T) and np.allclose(N @ N, I)
        assert np.allclose(J @ N + N @ J, 0)


def test_spectrum_k2_l2_table():
    ms = enumerate_modes(DomainSpec(), 2, 4)
    ev = np.linalg.eigvalsh(assemble_truncated_L(ms))
    assert ev.size == 20
    assert np.abs(ev - analytic_spectrum(2, 2)).max() < 1e-12
    # one block's two eigenvalues
    b = ms.blocks[ms.block_lookup[(1, Parity.SIN, (2,))]]
    assert mode_eigenvalues(b) == pytest.approx((math.sqrt(17), -math.sqrt(17)))


@pytest.mark.parametrize("k_max,l_max", [(0, 3), (3, 1), (5, 4)])
def test_spectrum_matches_formula(k_max, l_max):
    ms = enumerate_modes(DomainSpec(), k_max, l_max**2)
    ev = np.linalg.eigvalsh(assemble_truncated_L(ms))
    assert np.abs(ev - analytic_spectrum(k_max, l_max)).max() < 1e-12


def test_spectrum_two_component_pairs():
    ms = enumerate_modes(DomainSpec(m=2), 2, 4)
    ev = np.linalg.eigvalsh(assemble_truncated_L(ms))
    assert np.abs(ev - analytic_spectrum(2, 2, m=2)).max() < 1e-12


def test_operator_symmetric_and_sparse_consistent(small):
    L = assemble_truncated_L(small)
    assert np.array_equal(L, L.T)
    assert np.array_equal(assemble_truncated_L(small, sparse=True).toarray(), L)


def test_ordering_by_mu_then_k(small):
    keys = [(round(b.mu, 9), b.k) for b in small.blocks]
    assert keys == sorted(keys)
    assert small.blocks[0].k == 0 and small.blocks[0].n == (1,)


def test_operator_matches_differential_action(small, rng):
    """L c reproduces J z_t - N z_xx computed by finite differences on point values."""
    c = rng.standard_normal(small.total_dim) * np.repeat(1.0 / (1 + small.magnitudes[::2]), 2)
    z = SpectralField(small, c)
    Lz = SpectralField(small, small.L_dense @ c)
    t = rng.uniform(0, 2 * np.pi, 25)
    x = rng.uniform(0.3, np.pi - 0.3, 25)[:, None]
    h = 1e-4
    zt = (z.evaluate(t + h, x) - z.evaluate(t - h, x)) / (2 * h)
    zxx = (z.evaluate(t, x + h) - 2 * z.evaluate(t, x) + z.evaluate(t, x - h)) / h**2
    J, N = structure_matrices(1)
    lhs = zt @ J.T - zxx @ N.T
    assert np.abs(lhs - Lz.evaluate(t, x)).max() < 1e-4 * (1 + np.abs(lhs).max())


def test_neumann_has_kernel_from_constant_mode(neumann):
    ev = np.linalg.eigvalsh(assemble_truncated_L(neumann))
    assert np.sum(np.abs(ev) < 1e-12) == 2  # k = 0, n = 0 block, both components


def test_box_2d_magnitudes(box2d):
    d = box2d.domain
    for b in box2d.blocks:
        assert b.mu == pytest.approx((b.n[0] * np.pi / d.lengths[0]) ** 2 + (b.n[1] * np.pi / d.lengths[1]) ** 2)
    ev = np.linalg.eigvalsh(assemble_truncated_L(box2d))
    ref = np.sort(np.concatenate([[s * b.magnitude] * d.m for b in box2d.blocks for s in (1, -1)]))
    assert np.abs(ev - ref).max() < 1e-12


@pytest.mark.parametrize("fixture", ["small", "neumann", "box2d"])
def test_transform_roundtrip_and_parseval(fixture, request, rng):
    ms = request.getfixturevalue(fixture)
    tr = ms.transform()
    c = rng.standard_normal((5, ms.total_dim))
    g = tr.to_grid(c)
    assert g.shape == (5,) + tr.value_shape
    assert np.abs(tr.from_grid(g) - c).max() < 1e-12 * np.abs(c).max() * 10
    assert np.allclose(tr.grid_norm(g), np.linalg.norm(c, axis=1), rtol=1e-12)


@pytest.mark.parametrize("fixture", ["small", "neumann", "box2d"])
def test_dense_and_fft_paths_agree(fixture, request, rng):
    ms = request.getfixturevalue(fixture)
    tr = ms.transform(3)
    c = rng.standard_normal(ms.total_dim)
    g = tr.to_grid(c)
    assert np.allclose(g, tr._to_grid_fft(c), atol=1e-12)
    vals = rng.standard_normal(tr.value_shape)
    assert np.allclose(tr.from_grid(vals), tr._from_grid_fft(vals), atol=1e-12)


def test_grid_matches_point_evaluation(box2d, rng):
    tr = box2d.transform()
    z = SpectralField.random(box2d, rng)
    T, X = tr.mesh()
    pts_t = T.ravel()
    pts_x = np.stack([Xi.ravel() for Xi in X], axis=1)
    ref = z.evaluate(pts_t, pts_x).reshape(tr.value_shape)
    assert np.abs(tr.to_grid(z.coeffs) - ref).max() < 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1e-3, 1e3))
def test_parseval_property(seed, scale):
    ms = enumerate_modes(DomainSpec(), 3, 9)
    tr = ms.transform()
    c = scale * np.random.default_rng(seed).standard_normal(ms.total_dim)
    g = tr.to_grid(c)
    assert abs(tr.grid_norm(g) - np.linalg.norm(c)) <= 1e-12 * np.linalg.norm(c)
    assert np.linalg.norm(tr.from_grid(g) - c) <= 1e-12 * np.linalg.norm(c)


def test_sup_bound_dominates_grid(small, rng):
    z = SpectralField.random(small, rng)
    assert np.abs(z.to_grid()).max() <= z.sup_bound() + 1e-12
    assert basis_sup(small)[0] == pytest.approx(1 / np.sqrt(2 * np.pi) * np.sqrt(2 / np.pi))


def test_solve_linear_matches_dense(small, rng):
    B = np.array([[0.3, 0.1], [0.1, -0.2]])
    f = SpectralField.random(small, rng)
    z = solve_linear(small, B, f, shift=0.05)
    A = small.L_dense + 0.05 * np.eye(small.total_dim) - np.kron(np.eye(small.n_blocks), B)
    assert np.allclose(z.coeffs, np.linalg.solve(A, f.coeffs), atol=1e-12)


def test_solve_linear_singular_names_block(small, rng):
    f = SpectralField.random(small, rng)
    with pytest.raises(SingularOperatorError) as info:
        solve_linear(small, np.eye(2), f)
    assert info.value.block == (0, (1,), 1.0)
    assert "k=0" in str(info.value) and "spectral_core" in str(info.value)


def test_oversample_and_grid_errors(small):
    with pytest.raises(GridMismatchError):
        small.transform(1)
    with pytest.raises(GridMismatchError):
        small.transform().to_grid(np.zeros(small.total_dim + 1))
    other = enumerate_modes(DomainSpec(), 3, 9)
    with pytest.raises(GridMismatchError):
        SpectralField(small) + SpectralField(other)


def test_enumerate_errors():
    with pytest.raises(ConfigurationError):
        enumerate_modes(DomainSpec(), 2, 0.5)  # below first eigenvalue
    with pytest.raises(ConfigurationError):
        enumerate_modes(DomainSpec(), -1, 4)
    with pytest.raises(ConfigurationError):
        DomainSpec(lengths=(0.0,))
    with pytest.raises(ConfigurationError):
        DomainSpec(m=0)


def test_binary_roundtrip_exact(tmp_path, box2d, rng):
    z = SpectralField.random(box2d, rng)
    p = tmp_path / "z.bin"
    z.save(p)
    back = SpectralField.load(p)
    assert np.array_equal(back.coeffs, z.coeffs)
    assert back.modeset.domain == box2d.domain
    (tmp_path / "bad.bin").write_bytes(b"nothing")
    with pytest.raises(ConfigurationError):
        SpectralField.load(tmp_path / "bad.bin")


def test_csv_exact_digits(tmp_path, small, rng):
    z = SpectralField.random(small, rng)
    p = tmp_path / "z.csv"
    z.to_csv(p)
    rows = p.read_text().splitlines()
    assert rows[0] == "index,k,parity,n,mu,component,coefficient"
    vals = np.array([float(r.split(",")[-1]) for r in rows[1:]])
    assert np.array_equal(vals, z.coeffs)


def test_from_terms_rejects_missing_mode(small):
    with pytest.raises(ConfigurationError):
        SpectralField.from_terms(small, [(9, "cos", 1, 0, 1.0)])


def test_refined_grows(small):
    r = small.refined()
    assert r.k_max == small.k_max + 1 and r.total_dim > small.total_dim
    assert max(b.mu for b in r.blocks) > max(b.mu for b in small.blocks)


def test_neumann_boundary_enum():
    ms = enumerate_modes(DomainSpec(boundary="neumann"), 0, 1)
    assert [b.n for b in ms.blocks] == [(0,), (1,)]
    assert ms.domain.boundary is Boundary.NEUMANN
