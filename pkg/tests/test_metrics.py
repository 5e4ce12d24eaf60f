"""Pose error metrics and run-level aggregation."""

import math

import numpy as np
import pytest

from satpose import (
    EmptyDataset,
    ErrorReport,
    Pose,
    Quaternion,
    SymmetryGroup,
    ZeroGroundTruthRange,
    aggregate,
    combined_error,
    make_report,
    normalized_translation_error,
    rotation_error,
    summary_csv,
    summary_table,
    symmetric_rotation_error,
    translation_error,
)

Z = [0.0, 0.0, 1.0]


def test_rotation_error_blind_to_double_cover():
    q = Quaternion.from_axis_angle([1, 2, 3], 0.8)
    neg = Quaternion(-q.w, -q.x, -q.y, -q.z)
    assert rotation_error(q, q) == 0.0
    assert rotation_error(q, neg) == pytest.approx(0.0, abs=1e-12)


def test_rotation_error_quarter_turn():
    assert rotation_error(
        Quaternion.identity(), Quaternion.from_axis_angle(Z, math.pi / 2)
    ) == pytest.approx(math.pi / 2)


def test_rotation_error_recovers_sampled_angles(rng):
    for _ in range(200):
        axis = rng.normal(size=3)
        angle = float(rng.uniform(0, math.pi))
        base = Quaternion(*rng.normal(size=4))
        err = rotation_error(base, base.multiply(Quaternion.from_axis_angle(axis, angle)))
        assert err == pytest.approx(angle, abs=1e-9)
        assert 0.0 <= err <= math.pi + 1e-12


def test_translation_errors():
    assert translation_error([0, 0, 10], [0, 0, 10.5]) == pytest.approx(0.5)
    assert normalized_translation_error([0, 0, 10], [0, 0, 10.5]) == pytest.approx(0.05)
    assert translation_error([3, 4, 0], [6, 8, 0]) == pytest.approx(5.0)
    assert normalized_translation_error([3, 4, 0], [6, 8, 0]) == pytest.approx(1.0)


def test_zero_range_rejected():
    with pytest.raises(ZeroGroundTruthRange):
        normalized_translation_error([0, 0, 0], [1, 0, 0])


def test_combined_error_is_a_plain_sum():
    assert combined_error(0.1, 0.02) == pytest.approx(0.12)


class TestSymmetry:
    def test_trivial_group_changes_nothing(self, rng):
        sym = SymmetryGroup.trivial()
        for _ in range(50):
            a = Quaternion(*rng.normal(size=4))
            b = Quaternion(*rng.normal(size=4))
            assert symmetric_rotation_error(a, b, sym) == rotation_error(a, b)

    def test_exact_flip_scores_zero(self):
        sym = SymmetryGroup.flip_about(Z)
        q_true = Quaternion.from_axis_angle([1, 0, 0], 0.3)
        flipped = q_true.multiply(Quaternion.from_axis_angle(Z, math.pi))
        assert rotation_error(q_true, flipped) == pytest.approx(math.pi)
        # acos near a unit dot product is good to about sqrt(2 eps) ~ 3e-8 rad
        assert symmetric_rotation_error(q_true, flipped, sym) == pytest.approx(0.0, abs=1e-7)

    def test_near_flip_scores_the_residual(self):
        sym = SymmetryGroup.flip_about(Z)
        q_est = Quaternion.from_axis_angle(Z, math.radians(170))
        assert symmetric_rotation_error(Quaternion.identity(), q_est, sym) == pytest.approx(
            math.radians(10), abs=1e-9
        )

    def test_never_exceeds_plain_error(self, rng):
        sym = SymmetryGroup.flip_about(Z)
        for _ in range(300):
            a = Quaternion(*rng.normal(size=4))
            b = Quaternion(*rng.normal(size=4))
            assert symmetric_rotation_error(a, b, sym) <= rotation_error(a, b) + 1e-15

    def test_group_validation(self):
        with pytest.raises(ValueError):
            SymmetryGroup(())
        with pytest.raises(ValueError):
            SymmetryGroup((Quaternion.from_axis_angle(Z, 1.0),))  # no identity
        with pytest.raises(ValueError):
            # quarter turn is not self-inverse, so {I, q} is not closed
            SymmetryGroup((Quaternion.identity(), Quaternion.from_axis_angle(Z, math.pi / 2)))
        SymmetryGroup.flip_about([0, 1, 0])  # valid


def test_make_report_fields():
    truth = Pose(Quaternion.identity(), [0, 0, 10])
    est = Pose(Quaternion.from_axis_angle(Z, 0.2), [0, 0, 10.5])
    rep = make_report(truth, est, sym=SymmetryGroup.flip_about(Z), e_k_hat=3.5)
    assert rep.e_r == pytest.approx(0.2)
    assert rep.e_r_deg == pytest.approx(math.degrees(0.2))
    assert rep.e_t == pytest.approx(0.5)
    assert rep.e_tn == pytest.approx(0.05)
    assert rep.e_c == pytest.approx(0.25)
    assert rep.e_r_sym == pytest.approx(0.2)
    assert rep.e_k_hat == 3.5


def _report(e_t):
    return ErrorReport(e_r=0.0, e_t=float(e_t), e_tn=0.0, e_c=0.0)


def test_aggregate_splits_full_and_accepted():
    full, accepted = aggregate([_report(v) for v in (1, 2, 100)], [False, False, True])
    assert full.count == 3
    assert accepted.count == 2
    assert full.metrics["e_t"].mean == pytest.approx(103 / 3)
    assert full.metrics["e_t"].median == pytest.approx(2.0)
    assert accepted.metrics["e_t"].mean == pytest.approx(1.5)
    assert accepted.metrics["e_t"].median == pytest.approx(1.5)
    assert full.proportion_rejected == pytest.approx(1 / 3)
    assert accepted.proportion_rejected == pytest.approx(1 / 3)


def test_median_matches_sort_oracle(rng):
    # even and odd lengths, against the sort-and-average definition
    for size in (1, 2, 7, 8, 101):
        vals = rng.normal(size=size) * 10
        full, _ = aggregate([_report(v) for v in vals], [False] * size)
        s = np.sort(vals)
        if size % 2:
            expect = s[size // 2]
        else:
            expect = 0.5 * (s[size // 2 - 1] + s[size // 2])
        assert abs(full.metrics["e_t"].median - expect) < 1e-12


def test_optional_metrics_dropped_when_any_missing():
    a = ErrorReport(e_r=0.1, e_t=1.0, e_tn=0.1, e_c=0.2, e_r_sym=0.05)
    b = ErrorReport(e_r=0.1, e_t=1.0, e_tn=0.1, e_c=0.2)  # no symmetric error
    full, _ = aggregate([a, b], [False, False])
    assert "e_r_sym_deg" not in full.metrics
    assert "e_k_hat" not in full.metrics
    assert "e_r_deg" in full.metrics


def test_aggregate_validation():
    with pytest.raises(EmptyDataset):
        aggregate([], [])
    with pytest.raises(ValueError):
        aggregate([_report(1)], [False, True])


def test_all_rejected_leaves_empty_accepted_summary():
    full, accepted = aggregate([_report(1)], [True])
    assert accepted.count == 0
    assert accepted.metrics == {}
    assert full.proportion_rejected == 1.0


def test_renderings_carry_the_numbers():
    full, accepted = aggregate([_report(v) for v in (1, 2, 100)], [False, False, True])
    csv = summary_csv(full, accepted)
    assert "subset,metric,median,mean" in csv
    assert "accepted,e_t,1.5,1.5" in csv
    assert "run,proportion_rejected" in csv
    table = summary_table(full, accepted)
    assert "E_T (m)" in table
    assert "Proportion rejected" in table
    assert "0.3333" in table
