import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hamflow.errors import DivergenceError, IterationLimitError, PreconditionError
from hamflow.hamiltonians import LinearForcedModel, SaturatingModel, residual
from hamflow.index import MatrixField
from hamflow.reduction import ReducedProblem, build_window, outer_fixed_point, reduced_map, solve_reduced
from hamflow.spectral import DomainSpec, SpectralField, enumerate_modes, solve_linear

from conftest import FORCING


def test_window_selects_unit_block(small):
    w = build_window(small, 1.2)
    assert w.inner_dim == 2 and not w.nudged
    assert w.delta == pytest.approx(0.2, abs=1e-14)
    assert np.all(small.magnitudes[w.inner_mask] == 1.0)
    assert w.outer_min_magnitude == pytest.approx(math.sqrt(2))


def test_window_below_spectrum_is_empty(small):
    w = build_window(small, 0.5)
    assert w.inner_dim == 0 and w.delta == pytest.approx(0.5)


def test_window_on_eigenvalue_is_nudged(small):
    w = build_window(small, 1.0)
    assert w.nudged and w.requested_l_H == 1.0
    assert w.l_H == pytest.approx((1 + math.sqrt(2)) / 2)
    assert w.inner_dim == 2
    with pytest.raises(PreconditionError):
        build_window(small, 0.0)


def test_contraction_bound_formula(small):
    w = build_window(small, 1.2)
    assert w.contraction_bound(1.2) == pytest.approx(1.2 / 1.3)


@pytest.mark.parametrize("eps", [0.0, 0.05, 0.1])
def test_linear_oracle(small, rng, eps):
    B = MatrixField.constant(0.5, m=1)
    w = build_window(small, 1.2)
    for _ in range(3):
        f = SpectralField.random(small, rng)
        model = LinearForcedModel(B, f)
        z = solve_reduced(w, eps, 1.0, model, [np.zeros(2)])[0]
        ref = solve_linear(small, B.value, f, shift=eps)
        assert (z.field - ref).norm() <= 1e-10 * ref.norm()
        assert z.residual < 1e-10


def test_measured_contraction_below_bound(saturating_small, small):
    w = build_window(small, 1.2)
    prob = ReducedProblem(w, saturating_small, 0.05, 1.0)
    for z0 in ([0.0, 0.0], [3.0, -1.0], [20.0, 5.0]):
        prob.outer(np.array(z0))
    assert prob.all_ratios
    assert prob.max_ratio <= w.contraction_bound(saturating_small.l_H) + 1e-6


def test_outer_residual_invariant(saturating_small, small):
    w = build_window(small, 1.2)
    pt = outer_fixed_point(w, np.array([0.4, -0.2]), 0.1, 0.7, saturating_small)
    prob = ReducedProblem(w, saturating_small, 0.1, 0.7)
    full = pt.full(w)
    v = saturating_small.homotopy_rhs(prob.transform, full, 0.7)[w.outer_mask]
    lhs = (small.L_sparse @ full)[w.outer_mask] + 0.1 * pt.z_perp
    assert np.linalg.norm(lhs - v) <= 1e-12 * (1 + np.linalg.norm(v))


@settings(max_examples=10, deadline=None)
@given(st.floats(0.0, 0.1), st.floats(0.0, 1.0))
def test_zeros_have_small_residual(eps, lam):
    ms = enumerate_modes(DomainSpec(), 3, 9)
    f = SpectralField.from_terms(ms, FORCING)
    model = SaturatingModel(MatrixField.constant(1.0, m=1), 0.5, -1, f, l_H=1.2)
    w = build_window(ms, 1.2)
    zeros = solve_reduced(w, eps, lam, model, [np.zeros(2), np.array([2.0, 1.0])])
    for z in zeros:
        assert z.reduced_residual < 2e-10
        assert residual(model, z.field, eps, lam) < 1e-9


def test_reduced_map_is_linear_inner_equation_at_lam_zero(saturating_small, small):
    # at lam = 0 the map is (L + eps - I) z0 on the inner block, and z_perp = 0
    w = build_window(small, 1.2)
    z0 = np.array([0.3, -0.8])
    a = reduced_map(w, z0, 0.1, 0.0, saturating_small)
    Lin = small.L_dense[np.ix_(w.inner_mask, w.inner_mask)]
    assert np.allclose(a, (Lin + 0.1 * np.eye(2) - np.eye(2)) @ z0, atol=1e-12)


def test_preconditions(saturating_small, small):
    w = build_window(small, 1.2)
    with pytest.raises(PreconditionError):
        ReducedProblem(w, saturating_small, 0.11, 1.0)
    with pytest.raises(PreconditionError):
        ReducedProblem(w, saturating_small, -0.01, 1.0)
    model = LinearForcedModel(MatrixField.constant(0.5, m=1), l_H=1.3)
    with pytest.raises(PreconditionError):
        ReducedProblem(w, model, 0.0, 1.0)
    with pytest.raises(PreconditionError):
        solve_reduced(w, 0.0, 1.0, saturating_small, [np.zeros(3)])


def test_understated_lipschitz_diverges(small):
    # |B| = 3 exceeds every outer magnitude below 3, so the outer map expands
    f = SpectralField.from_terms(small, FORCING)
    model = LinearForcedModel(MatrixField.constant(3.0, m=1), f, l_H=1.0)
    w = build_window(small, 1.2)
    with pytest.raises(DivergenceError) as info:
        outer_fixed_point(w, np.zeros(2), 0.0, 1.0, model)
    assert "ratios" in str(info.value)


def test_iteration_limit(saturating_small, small):
    w = build_window(small, 1.2)
    with pytest.raises(IterationLimitError):
        outer_fixed_point(w, np.array([5.0, 5.0]), 0.0, 1.0, saturating_small, max_iter=3)


def test_empty_window_solves_pure_outer(small, rng):
    B = MatrixField.constant(0.5, m=1)
    f = SpectralField.random(small, rng)
    model = LinearForcedModel(B, f, l_H=0.5)
    w = build_window(small, 0.5)
    z = solve_reduced(w, 0.0, 1.0, model, [])[0]
    ref = solve_linear(small, B.value, f)
    assert (z.field - ref).norm() <= 1e-10 * ref.norm()
