from __future__ import annotations

import itertools
import math

import numpy as np
import pytest

from touchauth.errors import MetricError
from touchauth.evaluation import (
    auc,
    eer,
    fuse_moving_average,
    roc_curve,
    user_window_metrics,
    wilcoxon_signed_rank,
)


# --- independent oracles -----------------------------------------------------

def auc_brute_force(genuine, impostor):
    """Pairwise concordance count; ties worth one half."""
    wins = 0.0
    for g in genuine:
        for i in impostor:
            if g > i:
                wins += 1.0
            elif g == i:
                wins += 0.5
    return wins / (len(genuine) * len(impostor))


def eer_threshold_sweep(genuine, impostor):
    """Exhaustive sweep over all observed thresholds with linear interpolation."""
    genuine = np.asarray(genuine)
    impostor = np.asarray(impostor)
    thresholds = [math.inf] + sorted(set(genuine) | set(impostor), reverse=True)
    far = [np.mean(impostor >= t) if t != math.inf else 0.0 for t in thresholds]
    frr = [np.mean(genuine < t) if t != math.inf else 1.0 for t in thresholds]
    for k in range(len(thresholds)):
        d = far[k] - frr[k]
        if d == 0.0:
            return far[k]
        if d > 0.0:
            f0, f1 = far[k - 1], far[k]
            r0, r1 = frr[k - 1], frr[k]
            s = (r0 - f0) / ((f1 - f0) - (r1 - r0))
            return f0 + s * (f1 - f0)
    raise AssertionError("no crossing found")


def wilcoxon_enumerate(diffs):
    """Exact two-sided p by literal enumeration of all 2^n sign assignments."""
    diffs = np.asarray(diffs, dtype=float)
    diffs = diffs[diffs != 0]
    n = len(diffs)
    absd = np.abs(diffs)
    order = np.argsort(absd, kind="stable")
    ranks = np.empty(n)
    sorted_abs = absd[order]
    i = 0
    while i < n:
        j = i
        while j + 1 < n and sorted_abs[j + 1] == sorted_abs[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    w_plus = ranks[diffs > 0].sum()
    w_minus = ranks.sum() - w_plus
    w = min(w_plus, w_minus)
    total = ranks.sum()
    count = 0
    for signs in itertools.product((0, 1), repeat=n):
        wp = sum(r for r, s in zip(ranks, signs) if s)
        if wp <= w or wp >= total - w:
            count += 1
    return w, min(1.0, count / 2.0**n)


def random_scores(rng, allow_ties=True):
    n_g = int(rng.integers(2, 40))
    n_i = int(rng.integers(2, 40))
    g = rng.normal(size=n_g)
    i = rng.normal(size=n_i)
    if allow_ties and rng.random() < 0.5:
        g = np.round(g, 1)
        i = np.round(i, 1)
    return g, i


# --- AUC ----------------------------------------------------------------------

class TestAuc:
    def test_complete_separation(self):
        assert auc([0.9, 0.8], [0.1, 0.2]) == 1.0

    def test_derived_three_of_four_concordant(self):
        g, i = [0.6, 0.4], [0.5, 0.3]
        assert auc_brute_force(g, i) == 0.75
        assert auc(g, i) == 0.75

    def test_all_ties_half(self):
        assert auc([0.5, 0.5, 0.5], [0.5, 0.5]) == 0.5

    def test_matches_brute_force_exactly(self, rng):
        for _ in range(400):
            g, i = random_scores(rng)
            assert auc(g, i) == auc_brute_force(g, i)

    def test_reversal_identity(self, rng):
        for _ in range(100):
            g, i = random_scores(rng, allow_ties=False)
            assert auc(g, i) + auc(i, g) == pytest.approx(1.0, abs=1e-12)

    def test_monotone_transform_invariance(self, rng):
        for _ in range(50):
            g, i = random_scores(rng)
            assert auc(np.exp(g), np.exp(i)) == pytest.approx(auc(g, i), abs=1e-12)

    def test_empty_class_raises(self):
        with pytest.raises(MetricError):
            auc([], [0.1])

    def test_equals_trapezoid_under_roc(self, rng):
        for _ in range(50):
            g, i = random_scores(rng)
            curve = roc_curve(g, i)
            trapezoid = np.trapezoid(curve.tpr, curve.fpr)
            assert auc(g, i) == pytest.approx(trapezoid, abs=1e-12)


class TestRocCurve:
    def test_endpoints_and_monotonicity(self, rng):
        for _ in range(50):
            g, i = random_scores(rng)
            curve = roc_curve(g, i)
            assert curve.fpr[0] == 0.0 and curve.tpr[0] == 0.0
            assert curve.fpr[-1] == 1.0 and curve.tpr[-1] == 1.0
            assert np.all(np.diff(curve.fpr) >= 0)
            assert np.all(np.diff(curve.tpr) >= 0)
            assert curve.thresholds[0] == np.inf
            assert np.all(np.diff(curve.thresholds) < 0)


class TestEer:
    def test_complete_separation_zero(self):
        assert eer([0.9, 0.8, 0.7], [0.1, 0.2]) == 0.0

    def test_derived_example_matches_sweep(self):
        g, i = [0.9, 0.3], [0.5, 0.1]
        assert eer(g, i) == pytest.approx(eer_threshold_sweep(g, i), abs=1e-12)
        assert eer(g, i) == 0.5

    def test_chance_level_on_random_labels(self, rng):
        scores = rng.uniform(size=4000)
        assert eer(scores[:2000], scores[2000:]) == pytest.approx(0.5, abs=0.05)

    def test_matches_sweep_oracle(self, rng):
        for _ in range(400):
            g, i = random_scores(rng)
            assert eer(g, i) == pytest.approx(eer_threshold_sweep(g, i), abs=1e-9)

    def test_bounds_and_crossing(self, rng):
        for _ in range(100):
            g, i = random_scores(rng)
            value = eer(g, i)
            assert 0.0 <= value <= 1.0

    def test_monotone_transform_invariance(self, rng):
        for _ in range(50):
            g, i = random_scores(rng)
            assert eer(2 * g + 5, 2 * i + 5) == pytest.approx(eer(g, i), abs=1e-12)


# --- fusion --------------------------------------------------------------------

class TestFusion:
    def test_window_one_is_identity(self, rng):
        x = rng.uniform(size=50)
        assert np.array_equal(fuse_moving_average(x, 1), x)

    def test_arithmetic_forced(self):
        out = fuse_moving_average(np.array([0.2, 0.4, 0.6]), 2)
        assert out == pytest.approx([0.3, 0.5])

    def test_constant_stream(self):
        out = fuse_moving_average(np.full(20, 0.7), 9)
        assert out == pytest.approx(np.full(12, 0.7))

    def test_short_stream_empty_with_warning(self, caplog):
        with caplog.at_level("WARNING"):
            out = fuse_moving_average(np.array([0.1, 0.2]), 5)
        assert out.size == 0
        assert any("shorter than window" in r.message for r in caplog.records)

    def test_length(self, rng):
        x = rng.uniform(size=120)
        for n in (1, 2, 5, 20):
            assert fuse_moving_average(x, n).size == 120 - n + 1

    def test_variance_shrinks_like_one_over_n(self, rng):
        sigma2 = 0.04
        x = rng.normal(0.5, math.sqrt(sigma2), size=200_000)
        for n in (2, 5, 10, 20):
            fused = fuse_moving_average(x, n)
            assert fused.var() == pytest.approx(sigma2 / n, rel=0.2)


# --- wilcoxon -------------------------------------------------------------------

class TestWilcoxon:
    def test_hand_derived_ranks(self):
        a = np.array([1.0, -2.0, 3.0, -4.0, 5.0])
        result = wilcoxon_signed_rank(a, np.zeros(5))
        # |d| ranks 1..5; positive ranks sum 9, negative 6
        assert result.statistic == 6.0
        assert result.method == "exact"

    def test_identical_samples_degenerate(self):
        a = np.array([0.8, 0.7, 0.9])
        result = wilcoxon_signed_rank(a, a)
        assert result.degenerate and result.p_value == 1.0 and not result.reject_at_05

    def test_exact_matches_enumeration(self, rng):
        for _ in range(120):
            n = int(rng.integers(1, 11))
            a = rng.normal(size=n)
            b = rng.normal(size=n)
            if rng.random() < 0.4:  # force |d| ties and zero diffs
                a = np.round(a, 1)
                b = np.round(b, 1)
            d = a - b
            if np.all(d == 0):
                continue
            expected_w, expected_p = wilcoxon_enumerate(d)
            result = wilcoxon_signed_rank(a, b)
            assert result.statistic == pytest.approx(expected_w, abs=1e-12)
            assert result.p_value == pytest.approx(expected_p, abs=1e-12)

    def test_normal_approximation_for_large_n(self, rng):
        a = rng.normal(size=40)
        b = a + rng.normal(0.8, 0.3, size=40)
        result = wilcoxon_signed_rank(a, b)
        assert result.method == "normal"
        assert result.p_value < 0.001 and result.reject_at_05

    def test_normal_close_to_exact_at_boundary(self, rng):
        # n = 25 runs exactly; the same data under the normal path should agree loosely
        from touchauth.evaluation import _average_ranks, _normal_signed_rank_p

        a = rng.normal(size=25)
        b = rng.normal(size=25) + 0.3
        result = wilcoxon_signed_rank(a, b)
        d = a - b
        d = d[d != 0]
        ranks = _average_ranks(np.abs(d))
        approx = _normal_signed_rank_p(ranks, result.statistic)
        assert approx == pytest.approx(result.p_value, abs=0.02)

    def test_length_mismatch(self):
        with pytest.raises(MetricError):
            wilcoxon_signed_rank([1.0, 2.0], [1.0])


# --- per-user metrics ------------------------------------------------------------

class TestUserWindowMetrics:
    def test_window_one_equals_unfused(self, rng):
        streams = {
            "owner": rng.uniform(0.5, 1.0, size=40),
            "imp1": rng.uniform(0.0, 0.6, size=40),
            "imp2": rng.uniform(0.0, 0.6, size=40),
        }
        a1, e1 = user_window_metrics(streams, "owner", 1)
        pooled = np.concatenate([streams["imp1"], streams["imp2"]])
        assert a1 == auc(streams["owner"], pooled)
        assert e1 == eer(streams["owner"], pooled)

    def test_windows_never_mix_streams(self, rng):
        # two impostors with alternating extreme scores: fusing within streams
        # keeps them extreme; cross-stream windows would average them out
        imp1 = np.full(30, 0.0)
        imp2 = np.full(30, 0.9)
        streams = {"owner": np.full(30, 0.95), "a": imp1, "b": imp2}
        a5, _ = user_window_metrics(streams, "owner", 5)
        fused_imp = np.concatenate(
            [fuse_moving_average(imp1, 5), fuse_moving_average(imp2, 5)]
        )
        assert a5 == auc(np.full(26, 0.95), fused_imp)
