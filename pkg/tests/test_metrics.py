import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cutset_sampling.metrics import (
    avg_abs_error,
    batch_means_ci,
    compare,
    hellinger_avg,
    kl_avg,
    kl_infinite,
    kl_per_variable,
    mse,
    running_variance,
    t_critical,
)
from cutset_sampling.model import marginals_from_vectors as mv

scipy_stats = pytest.importorskip("scipy.stats")


class TestErrors:
    def test_mse_and_abs(self):
        exact, est = mv([[0.5, 0.5]]), mv([[0.6, 0.4]])
        assert mse(exact, est) == pytest.approx(0.01, abs=1e-15)
        assert avg_abs_error(exact, est) == pytest.approx(0.1, abs=1e-15)

    def test_averaged_over_pairs(self):
        # one perfect variable and one off by 0.1 on both states
        exact, est = mv([[0.5, 0.5], [0.5, 0.5]]), mv([[0.5, 0.5], [0.6, 0.4]])
        assert mse(exact, est) == pytest.approx(0.005, abs=1e-15)
        assert avg_abs_error(exact, est) == pytest.approx(0.05, abs=1e-15)

    def test_skip(self):
        exact, est = mv([[1.0, 0.0], [0.5, 0.5]]), mv([[0.0, 1.0], [0.5, 0.5]])
        assert mse(exact, est, skip={0}) == 0.0

    def test_domain_mismatch(self):
        with pytest.raises(ValueError):
            mse(mv([[0.5, 0.5]]), mv([[0.2, 0.3, 0.5]]))


class TestDivergences:
    def test_kl_hand_value(self):
        # 0.5 lg 2 + 0.5 lg(2/3)
        assert kl_avg(mv([[0.5, 0.5]]), mv([[0.25, 0.75]])) == pytest.approx(0.20751874963942190, abs=1e-12)

    def test_kl_one_bit(self):
        assert kl_avg(mv([[1.0, 0.0]]), mv([[0.5, 0.5]])) == pytest.approx(1.0, abs=1e-15)

    def test_kl_infinite_excluded_and_flagged(self):
        exact = mv([[0.5, 0.5], [0.5, 0.5]])
        est = mv([[1.0, 0.0], [0.5, 0.5]])
        assert math.isinf(kl_per_variable(exact, est)[0])
        assert kl_infinite(exact, est) == [0]
        assert kl_avg(exact, est) == 0.0

    def test_hellinger_disjoint(self):
        assert hellinger_avg(mv([[1.0, 0.0]]), mv([[0.0, 1.0]])) == pytest.approx(2.0)

    def test_hellinger_hand_value(self):
        p, q = [0.5, 0.5], [0.25, 0.75]
        hand = (math.sqrt(0.5) - 0.5) ** 2 + (math.sqrt(0.5) - math.sqrt(0.75)) ** 2
        assert hellinger_avg(mv([p]), mv([q])) == pytest.approx(hand, abs=1e-15)
        assert hand == pytest.approx(0.0681483474218634, abs=1e-12)

    def test_compare_report(self):
        rep = compare(mv([[0.5, 0.5], [1.0, 0.0]]), mv([[0.6, 0.4], [1.0, 0.0]]), skip={1})
        assert rep.mse == pytest.approx(0.01)
        rows = rep.rows(["a", "b"])
        assert rows[0] == ("mse", "*", rep.mse)
        assert {r[1] for r in rows} == {"*", "a"}


class TestTCritical:
    def test_table_value(self):
        assert t_critical(0.1, 19) == pytest.approx(1.729, abs=5e-4)

    @pytest.mark.parametrize("alpha", [0.2, 0.1, 0.05, 0.02, 0.01])
    @pytest.mark.parametrize("df", [1, 2, 5, 10, 19, 30, 31, 45, 100, 1000])
    def test_against_scipy(self, alpha, df):
        ref = scipy_stats.t.ppf(1 - alpha / 2, df)
        assert t_critical(alpha, df) == pytest.approx(ref, abs=2e-4 if df > 30 else 1e-4)

    def test_rejects_unknown_alpha(self):
        with pytest.raises(ValueError):
            t_critical(0.3, 10)
        with pytest.raises(ValueError):
            t_critical(0.1, 0)


class TestBatchMeans:
    def test_running_variance_matches_two_pass(self):
        x = np.random.default_rng(0).normal(3.0, 0.01, size=(50, 4))
        v = running_variance(x.sum(axis=0), (x * x).sum(axis=0), 50)
        assert np.allclose(v, x.var(axis=0, ddof=1), atol=1e-12)

    def test_needs_two_chains(self):
        with pytest.raises(ValueError):
            batch_means_ci([mv([[0.5, 0.5]])])

    def test_identical_chains_zero_width(self):
        stats = batch_means_ci([mv([[0.3, 0.7]])] * 5)
        assert stats.aggregate == 0.0
        assert np.allclose(stats.pooled[0], [0.3, 0.7])

    def test_half_width_formula(self):
        vals = [0.1, 0.2, 0.3, 0.4]
        stats = batch_means_ci([mv([[v, 1 - v]]) for v in vals], alpha=0.1)
        s = np.std(vals, ddof=1)
        assert stats.half_width[0][0] == pytest.approx(t_critical(0.1, 3) * s / 2.0, rel=1e-12)

    def test_normal_coverage(self):
        rng = np.random.default_rng(2024)
        hits, reps, m = 0, 1000, 20
        for _ in range(reps):
            draws = rng.normal(0.3, 0.05, size=m)
            stats = batch_means_ci([mv([[d, 1 - d]]) for d in draws], alpha=0.1)
            hits += abs(stats.pooled[0][0] - 0.3) <= stats.half_width[0][0]
        assert 0.85 <= hits / reps <= 0.95


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.01, 0.99), min_size=1, max_size=6), st.lists(st.floats(0.01, 0.99), min_size=1, max_size=6))
def test_divergence_properties(ps, qs):
    k = min(len(ps), len(qs))
    exact = mv([[p, 1 - p] for p in ps[:k]])
    est = mv([[q, 1 - q] for q in qs[:k]])
    assert kl_avg(exact, est) >= -1e-12
    assert kl_avg(exact, exact) == pytest.approx(0.0, abs=1e-12)
    assert 0.0 <= hellinger_avg(exact, est) <= 2.0
    assert hellinger_avg(exact, est) == pytest.approx(hellinger_avg(est, exact), abs=1e-12)
    assert mse(exact, est) <= avg_abs_error(exact, est) + 1e-15
