import csv

import numpy as np
import pytest

from hamflow.errors import BoundaryZeroError, HypothesisViolationError, MonitorViolation, PreconditionError
from hamflow.hamiltonians import LinearForcedModel, PinchedModel, SaturatingModel
from hamflow.homotopy import (
    TRACE_COLUMNS,
    ContinuationSchedule,
    ContinuationTrace,
    Mode,
    TracePoint,
    apriori_monitor,
    brouwer_degree,
    run_homotopy,
)
from hamflow.index import MatrixField
from hamflow.reduction import build_window
from hamflow.spectral import SpectralField, solve_linear

from conftest import FORCING

SHORT = dict(lambda_steps=4)


@pytest.mark.parametrize("d", [1, 2, 3, 4])
def test_degree_identity_and_antipodal(d):
    assert brouwer_degree(lambda z: z, d, 1.7).degree == 1
    assert brouwer_degree(lambda z: -z, d, 1.7).degree == (-1) ** d


def test_degree_winding_crosscheck_counts_two_zeros():
    # z -> z^2 in complex form has degree 2 around a disc containing 0
    def sq(v):
        return np.array([v[0] ** 2 - v[1] ** 2 + 0.01, 2 * v[0] * v[1]])
    res = brouwer_degree(sq, 2, 1.0, n_random=20, rng=np.random.default_rng(3))
    assert res.winding == 2 and res.degree == 2


def test_degree_no_zero_inside():
    res = brouwer_degree(lambda z: z - 5.0, 2, 1.0)
    assert res.degree == 0 and res.winding == 0


def test_boundary_zero_detected():
    with pytest.raises(BoundaryZeroError):
        brouwer_degree(lambda z: z - np.array([1.0, 0.0]), 2, 1.0)
    with pytest.raises(BoundaryZeroError):
        brouwer_degree(lambda z: z - 2.0, 1, 2.0)


def test_zero_remainder_gives_trivial_solution(small):
    model = LinearForcedModel(MatrixField.constant(1.0, m=1))
    sched = ContinuationSchedule.geometric(0.1, 3, 0.5, **SHORT)
    trace = run_homotopy(sched, model, build_window(small, 1.2))
    assert trace.final.norm() < 1e-12
    assert trace.final_residual < 1e-12
    assert all(v == 1 for v in trace.degrees.values())


def test_saturating_short_run(saturating_small, small):
    sched = ContinuationSchedule.geometric(0.1, 4, 0.5, **SHORT)
    trace = run_homotopy(sched, saturating_small, build_window(small, 1.2))
    assert trace.final_residual < 1e-8
    assert trace.monitor.clean
    assert sorted(trace.degrees) == [0.0, 0.5, 1.0] and set(trace.degrees.values()) == {1}
    g = trace.cauchy_gaps
    assert len(g) == 3 and all(b < a for a, b in zip(g, g[1:]))
    assert trace.limit_gap is not None
    assert all(p.eps_norm_margin <= 1e-9 * (1 + p.norm) for p in trace.points if p.eps > 0)
    assert trace.points[-1].stage == "final" and trace.points[-1].eps == 0.0


def test_linear_forced_pinched_matches_direct_solve(small, rng):
    B = MatrixField.constant(0.5, m=1)
    f = SpectralField.random(small, rng)
    trace = run_homotopy(ContinuationSchedule(mode=Mode.PINCHED, **SHORT), LinearForcedModel(B, f),
                         build_window(small, 1.2))
    ref = solve_linear(small, B.value, f)
    assert (trace.final - ref).norm() < 1e-10 * max(ref.norm(), 1.0)
    assert trace.certificate["gap_radius"] == pytest.approx(0.5)


def test_pinched_bound_respected(pinched_small, small):
    trace = run_homotopy(ContinuationSchedule(mode=Mode.PINCHED, **SHORT), pinched_small, build_window(small, 1.3))
    assert trace.monitor.clean
    assert trace.certificate["gap_radius"] == pytest.approx(0.1)
    for p in trace.points:
        assert p.norm <= p.bound * (1 + 1e-9) + 1e-12


def test_pinched_refuses_index_jump(small):
    model = PinchedModel(MatrixField.constant(0.5, m=1), MatrixField.constant(2.5, m=1), l_H=2.5)
    with pytest.raises(HypothesisViolationError):
        run_homotopy(ContinuationSchedule(mode=Mode.PINCHED, **SHORT), model, build_window(small, 2.5))


def test_preconditions(saturating_small, pinched_small, small):
    w = build_window(small, 1.2)
    with pytest.raises(PreconditionError):
        run_homotopy(ContinuationSchedule(eps_sequence=(0.05, 0.1)), saturating_small, w)
    with pytest.raises(PreconditionError):
        run_homotopy(ContinuationSchedule(eps_sequence=()), saturating_small, w)
    with pytest.raises(PreconditionError):
        run_homotopy(ContinuationSchedule(lambda_steps=0), saturating_small, w)
    with pytest.raises(PreconditionError):
        run_homotopy(ContinuationSchedule(ball_radius_policy="other"), saturating_small, w)
    with pytest.raises(PreconditionError):
        run_homotopy(ContinuationSchedule(**SHORT), pinched_small, build_window(small, 1.3))
    with pytest.raises(PreconditionError):
        run_homotopy(ContinuationSchedule(mode=Mode.PINCHED, **SHORT), saturating_small, w)


def test_eps0_must_stay_below_half_gap(small):
    # with B = -0.9 I the negative eigenvalue of L - B nearest zero is -0.1, so eps0 must be below 0.05
    f = SpectralField.from_terms(small, FORCING)
    model = SaturatingModel(MatrixField.constant(-0.9, m=1), 0.05, 1, f, l_H=1.0)
    with pytest.raises(PreconditionError, match="half the gap"):
        run_homotopy(ContinuationSchedule.geometric(0.09, 2, 0.5, **SHORT), model, build_window(small, 1.2))


def _point(norm, lam=1.0, eps=0.1, bound=np.inf, margin=-1.0):
    return TracePoint("lambda_sweep", eps, lam, norm, norm, 1.0, 0.0, 1.0, bound, margin, 1, 0.0)


def test_monitor_flags_growing_norms():
    trace = ContinuationTrace(Mode.REGULARIZED, [_point(1.0), _point(1.1), _point(0.9), _point(50.0)])
    rep = apriori_monitor(trace)
    assert not rep.clean and rep.growth_ratio > 10
    assert any("grows" in f for f in rep.flags)


def test_monitor_flags_bound_and_eps_norm():
    trace = ContinuationTrace(Mode.REGULARIZED, [_point(2.0, bound=1.0), _point(1.0, margin=0.5)])
    rep = apriori_monitor(trace)
    assert len(rep.flags) == 2
    assert rep.worst_bound_margin == pytest.approx(1.0, rel=1e-6)
    assert rep.worst_eps_norm_margin == 0.5


def test_monitor_clean_and_empty():
    assert apriori_monitor(ContinuationTrace(Mode.PINCHED, [_point(1.0, bound=2.0)])).clean
    with pytest.raises(PreconditionError):
        apriori_monitor(ContinuationTrace(Mode.PINCHED))


def test_strict_mode_raises_with_trace(saturating_small, small):
    sched = ContinuationSchedule.geometric(0.1, 2, 0.5, growth_factor=1.0 + 1e-12, **SHORT)
    # a growth factor of one flags any nonconstant norm along lam = 1
    with pytest.raises(MonitorViolation) as info:
        run_homotopy(sched, saturating_small, build_window(small, 1.2))
    assert info.value.exit_code == 2
    assert info.value.trace.final is not None


def test_trace_csv_columns(tmp_path, saturating_small, small):
    trace = run_homotopy(ContinuationSchedule.geometric(0.1, 2, 0.5, **SHORT), saturating_small,
                         build_window(small, 1.2))
    p = tmp_path / "trace.csv"
    trace.write_csv(p)
    rows = list(csv.reader(open(p)))
    assert rows[0] == TRACE_COLUMNS
    assert len(rows) == len(trace.points) + 1
    assert trace.summary()["points"] == len(trace.points)
