"""Error statistics, trust gate, and consistency checks.

Oracles: per-element scalar recomputation of distances, and a brute-force
sort-and-index quantile plus fsum-based mean/std, all independent of numpy.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fairfab.errors import ValidationError
from fairfab.rng import Xoshiro256StarStar
from fairfab.uq import (
    ConsistencyReport,
    TRUSTED,
    UNTRUSTED,
    consistency_check,
    error_stats,
    euclidean_errors,
    nearest_rank_p95,
    trust_gate,
)


def oracle_stats(values):
    n = len(values)
    mean = math.fsum(values) / n
    var = math.fsum((v - mean) ** 2 for v in values) / n
    ordered = sorted(values)
    p95 = ordered[math.ceil(0.95 * n) - 1]
    return mean, math.sqrt(var), p95, max(values)


def test_identical_lists_give_zero_errors():
    pts = [[1.0, 2.0], [3.5, 7.25], [0.0, 0.0]]
    assert list(euclidean_errors(pts, pts)) == [0.0, 0.0, 0.0]


def test_three_four_five_triangle():
    errors = euclidean_errors([[3.0, 4.0]], [[0.0, 0.0]])
    assert errors[0] == 5.0


def test_errors_match_scalar_formula():
    rng = Xoshiro256StarStar(77)
    preds = [[rng.uniform() * 11, rng.uniform() * 11] for _ in range(500)]
    truths = [[rng.uniform() * 11, rng.uniform() * 11] for _ in range(500)]
    errors = euclidean_errors(preds, truths)
    for i in range(500):
        expect = math.sqrt((preds[i][0] - truths[i][0]) ** 2
                           + (preds[i][1] - truths[i][1]) ** 2)
        assert errors[i] == pytest.approx(expect, rel=1e-15, abs=0.0)


def test_length_mismatch_rejected():
    with pytest.raises(ValidationError):
        euclidean_errors([[0, 0]], [[0, 0], [1, 1]])
    with pytest.raises(ValidationError):
        consistency_check([[0, 0]], [[0, 0], [1, 1]])


def test_all_zero_distances():
    report = error_stats([0.0, 0.0, 0.0, 0.0], trust_threshold=1e-9)
    assert (report.mean_error, report.std_error, report.p95_error, report.max_error) \
        == (0.0, 0.0, 0.0, 0.0)
    assert report.verdict == TRUSTED


def test_p95_nearest_rank_on_uniform_grid():
    distances = [i / 100 for i in range(1, 101)]
    report = error_stats(distances, trust_threshold=1.0)
    assert report.p95_error == 0.95
    assert nearest_rank_p95(list(reversed(distances))) == 0.95


def test_untrusted_above_default_threshold():
    distances = [0.7] * 100
    report = error_stats(distances, trust_threshold=0.688)
    assert report.p95_error == pytest.approx(0.7)
    assert report.verdict == UNTRUSTED


def test_trust_gate_messages_and_boundary():
    report = error_stats([0.3] * 10, trust_threshold=0.688)
    verdict, justification = trust_gate(report)
    assert verdict == TRUSTED
    assert "p95 0.3 <= 0.688 -> trusted" in justification

    boundary = error_stats([0.688] * 10, trust_threshold=0.688)
    assert boundary.verdict == TRUSTED  # inclusive comparison

    bad = error_stats([2.0] * 10, trust_threshold=0.688)
    verdict, justification = trust_gate(bad)
    assert verdict == UNTRUSTED and ">" in justification


def test_empty_and_nonfinite_refused():
    with pytest.raises(ValidationError):
        error_stats([], trust_threshold=1.0)
    with pytest.raises(ValidationError):
        error_stats([1.0, float("nan")], trust_threshold=1.0)
    with pytest.raises(ValidationError):
        error_stats([1.0], trust_threshold=0.0)


def test_stats_match_oracle_on_random_lists():
    rng = Xoshiro256StarStar(123)
    for _ in range(300):
        n = 1 + rng.below(400)
        values = [rng.uniform() * 3 for _ in range(n)]
        report = error_stats(values, trust_threshold=0.688)
        mean, std, p95, peak = oracle_stats(values)
        assert report.mean_error == pytest.approx(mean, rel=1e-12)
        assert report.std_error == pytest.approx(std, rel=1e-12, abs=1e-15)
        assert report.p95_error == p95
        assert report.max_error == peak


def test_permutation_invariance():
    rng = Xoshiro256StarStar(5)
    values = [rng.uniform() for _ in range(257)]
    base = error_stats(values, 0.5)
    shuffled = list(values)
    rng.shuffle(shuffled)
    assert error_stats(shuffled, 0.5) == base


def test_scale_covariance_exact_for_powers_of_two():
    rng = Xoshiro256StarStar(9)
    values = [rng.uniform() for _ in range(100)]
    base = error_stats(values, 0.688)
    for scale in (0.5, 2.0, 8.0):
        scaled = error_stats([scale * v for v in values], 0.688 * scale)
        assert scaled.mean_error == scale * base.mean_error
        assert scaled.p95_error == scale * base.p95_error
        assert scaled.max_error == scale * base.max_error
        assert scaled.std_error == pytest.approx(scale * base.std_error, rel=1e-15)
        assert scaled.verdict == base.verdict


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(min_value=0, max_value=1e6, allow_nan=False), min_size=1,
                max_size=500))
def test_p95_equals_bruteforce_oracle(values):
    assert nearest_rank_p95(values) == sorted(values)[math.ceil(0.95 * len(values)) - 1]


def test_consistency_identical_passes_at_zero():
    pts = [[1.0, 2.0], [3.0, 4.0]]
    report = consistency_check(pts, pts, tolerance=0.0)
    assert report.passed and report.max_abs_deviation == 0.0


def test_consistency_symmetry_and_outlier():
    a = [[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]
    b = [[1.0, 2.0], [3.0, 4.1], [5.0, 6.0]]
    r_ab = consistency_check(a, b, tolerance=1e-5)
    r_ba = consistency_check(b, a, tolerance=1e-5)
    assert r_ab == r_ba
    assert not r_ab.passed
    assert r_ab.max_abs_deviation == pytest.approx(0.1)
    assert r_ab.mean_abs_deviation == pytest.approx(0.1 / 6)


def test_consistency_report_document():
    doc = consistency_check([[0, 0]], [[0, 0]], 1e-5).to_document()
    assert doc == {"max_abs_deviation": 0.0, "mean_abs_deviation": 0.0,
                   "tolerance": 1e-5, "passed": True}
