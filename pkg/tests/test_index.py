import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hamflow.errors import (
    ConfigurationError,
    HypothesisViolationError,
    NonStabilizedError,
    OrderViolationError,
    PreconditionError,
)
from hamflow.index import (
    MatrixField,
    gap_radius,
    negative_gap,
    nullity,
    pinched_samples,
    relative_index,
    shifted_spectrum,
    spectral_flow,
)
from hamflow.spectral import DomainSpec, enumerate_modes

I = lambda b: MatrixField.constant(b, m=1)


def magnitudes_below(b, k_max=8, l_max=8):
    """Number of positive eigenvalues of L in [0, b), from the closed-form spectrum."""
    count = 0
    for k in range(k_max + 1):
        for l in range(1, l_max + 1):
            if math.sqrt(k * k + l**4) < b:
                count += 1 if k == 0 else 2
    return count


@pytest.mark.parametrize("b,expected", [(0.0, 0), (1.0, 1), (0.5, 0)])
def test_nullity_examples(medium, b, expected):
    assert nullity(I(b), medium) == expected


def test_nullity_rejects_bad_tol(small):
    with pytest.raises(PreconditionError):
        nullity(I(0.0), small, tol=0.0)


@pytest.mark.parametrize("b", [0.0, 0.5, 1.5, 2.5, 3.2])
def test_relative_index_counts_eigenvalues_in_window(medium, b):
    ip = relative_index(I(b), medium)
    assert ip.mu == magnitudes_below(b)
    assert ip.stabilized
    assert [h[0] for h in ip.truncation_history] == [272, 342]


def test_relative_index_frozen_values(medium):
    # closed-form counts: eigenvalues 1, sqrt2 (x2) lie below 1.5; sqrt5 (x2) joins below 2.5
    assert relative_index(I(1.5), medium).mu == 3
    assert relative_index(I(2.5), medium).mu == 5
    assert relative_index(I(1.5), medium).certificate()["nu"] == 0


def test_relative_index_not_stabilized():
    ms = enumerate_modes(DomainSpec(), 1, 4)
    with pytest.raises(NonStabilizedError) as info:
        relative_index(I(30.0), ms)
    assert info.value.values[0] != info.value.values[1]


def test_negative_index_for_negative_shift(medium):
    # B = -1.5 I moves the eigenvalues -1, -sqrt2 above zero
    assert relative_index(I(-1.5), medium).mu == -3


def test_flow_frozen_crossings(medium):
    fl = spectral_flow(I(0.5), I(2.5), 40, medium)
    assert fl.total == 5
    # crossing where 0.5 + 2s equals 1, sqrt2, sqrt5
    expected = [((1 - 0.5) / 2, 1), ((math.sqrt(2) - 0.5) / 2, 2), ((math.sqrt(5) - 0.5) / 2, 2)]
    assert len(fl.crossings) == 3
    for (s, j), (s0, j0) in zip(sorted(fl.crossings), expected):
        assert abs(s - s0) < 1e-9 and j == j0


def test_flow_zero_without_crossing(medium):
    fl = spectral_flow(I(1.1), I(1.3), 10, medium)
    assert fl.total == 0 and fl.crossings == []


def test_flow_requires_order(small):
    with pytest.raises(OrderViolationError):
        spectral_flow(I(2.0), I(1.0), 10, small)
    with pytest.raises(PreconditionError):
        spectral_flow(I(0.0), I(1.0), 1, small)


@settings(max_examples=25, deadline=None)
@given(st.floats(-3.0, 3.0), st.floats(0.0, 3.0))
def test_additivity_property(b1, width):
    ms = enumerate_modes(DomainSpec(), 3, 9)
    B1, B2 = I(b1), I(b1 + width)
    # skip endpoints sitting on an eigenvalue, where the crossing belongs to s = 0 by convention
    ev = np.abs(shifted_spectrum(B2, ms))
    if ev.min() < 1e-6:
        return
    fl = spectral_flow(B1, B2, 12, ms)
    i1, i2 = relative_index(B1, ms, levels=1), relative_index(B2, ms, levels=1)
    assert i2.mu - i1.mu == fl.total
    assert fl.total >= 0


def test_flow_counts_starting_kernel(small):
    # at s = 0 the kernel of L - I is crossed immediately
    fl = spectral_flow(I(1.0), I(1.2), 8, small)
    assert fl.total == 1 and fl.crossings[0][0] < 1e-9


def test_sampled_field_matches_constant(small):
    const = I(0.7)
    samp = MatrixField.sampled(lambda t, x: 0.7 * np.eye(2) + 0 * t[..., None, None])
    assert np.allclose(samp.galerkin(small), const.galerkin(small), atol=1e-12)
    assert np.allclose(shifted_spectrum(samp, small), shifted_spectrum(const, small), atol=1e-10)


def test_sampled_field_index_between_bounds(small):
    # 1.1 + 0.1 cos t sin x stays within [1.0, 1.2], so the count equals the constant one
    samp = MatrixField.sampled(lambda t, x: (1.1 + 0.1 * np.cos(t) * np.sin(x[0]))[..., None, None] * np.eye(2))
    assert relative_index(samp, small, levels=1).mu == relative_index(I(1.1), small, levels=1).mu


def test_matrix_field_validation():
    with pytest.raises(ConfigurationError):
        MatrixField.constant([[1.0, 2.0], [0.0, 1.0]])
    with pytest.raises(ConfigurationError):
        MatrixField.constant(1.0)
    bad = MatrixField.sampled(lambda t, x: np.array([[0.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(ConfigurationError):
        bad.samples(enumerate_modes(DomainSpec(), 1, 1).transform())


def test_order_relation(small):
    assert I(1.0).leq(I(1.5), small.transform())
    assert not I(1.5).leq(I(1.0), small.transform())


def test_gap_radius_value(medium):
    g = gap_radius(I(1.1), I(1.3), pinched_samples(I(1.1), I(1.3), 21), medium)
    assert abs(g - 0.1) < 1e-12


def test_gap_radius_bounds_interior_samples(medium):
    g = gap_radius(I(1.1), I(1.3), pinched_samples(I(1.1), I(1.3), 5), medium)
    for b in np.linspace(1.1, 1.3, 37):
        assert np.abs(shifted_spectrum(I(b), medium)).min() >= g - 1e-12


def test_gap_radius_hypotheses(medium):
    with pytest.raises(HypothesisViolationError) as info:
        gap_radius(I(0.5), I(2.5), pinched_samples(I(0.5), I(2.5)), medium)
    assert info.value.failed == "index_equal"
    with pytest.raises(HypothesisViolationError) as info:
        gap_radius(I(0.5), I(1.0), [I(0.5), I(1.0)], medium)
    assert info.value.failed in ("index_equal", "nondegenerate_B2")
    with pytest.raises(HypothesisViolationError) as info:
        gap_radius(I(1.1), I(1.3), [I(1.35)], medium)
    assert info.value.failed == "upper_order"
    assert info.value.exit_code == 2


def test_negative_gap(medium):
    # L - I: the negative eigenvalue nearest zero is -1 - 1 = -2
    assert negative_gap(I(1.0), medium) == pytest.approx(2.0)
