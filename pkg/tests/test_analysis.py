import io
import itertools
import math

import numpy as np
import pytest
import scipy.stats
from hypothesis import given, settings
from hypothesis import strategies as st

from fairsift.analysis import (
    SyntheticSpec,
    expected_bias_binomial,
    expected_bias_binomial_std,
    generate_synthetic_corpus,
    monte_carlo_expected_bias,
    ols_fit,
    quantile_bias_curve,
    realized_alpha,
    score_attribute_spearman,
    spearman,
)
from fairsift.corpus import AttributeScheme, dump_image_records, dump_query_records
from fairsift.errors import (
    DegenerateX,
    EmptyInput,
    InvalidAlpha,
    InvalidSpec,
    LengthMismatch,
    ZeroVariance,
)
from fairsift.similarity import ScoredImage, rank_top_k
from fairsift.metrics import bag_bias

SCHEME = AttributeScheme("gender", ("male", "female"), allows_neutral=True)


def enumeration_oracle(k, alpha):
    """Sum |k-2m|/k over all 2^k label sequences."""
    total = 0.0
    for outcome in itertools.product([0, 1], repeat=k):
        males = sum(outcome)
        prob = alpha**males * (1 - alpha) ** (k - males)
        total += prob * abs(k - 2 * males) / k
    return total


class TestExpectedBiasBinomial:
    def test_two_draws_balanced(self):
        # MM and FF each w.p. 1/4 give bias 1; MF/FM give 0.
        assert expected_bias_binomial(2, 0.5) == pytest.approx(0.5, abs=1e-15)

    def test_single_draw_always_one(self):
        for alpha in (0.1, 0.5, 0.9):
            assert expected_bias_binomial(1, alpha) == pytest.approx(1.0, abs=1e-12)

    def test_degenerate_alpha(self):
        assert expected_bias_binomial(7, 0.0) == 1.0
        assert expected_bias_binomial(7, 1.0) == 1.0

    def test_invalid_alpha(self):
        with pytest.raises(InvalidAlpha):
            expected_bias_binomial(3, 1.5)

    @pytest.mark.parametrize("k", [1, 2, 3, 5, 8, 12])
    @pytest.mark.parametrize("alpha", [0.3, 0.5, 0.69])
    def test_matches_enumeration(self, k, alpha):
        assert expected_bias_binomial(k, alpha) == pytest.approx(
            enumeration_oracle(k, alpha), abs=1e-12)

    def test_symmetry(self):
        for k in (1, 2, 10, 100, 999):
            for alpha in (0.1, 0.3, 0.42, 0.69):
                assert expected_bias_binomial(k, alpha) == pytest.approx(
                    expected_bias_binomial(k, 1 - alpha), abs=1e-12)

    def test_non_increasing_in_k_at_half(self):
        values = [expected_bias_binomial(k, 0.5) for k in range(2, 201, 2)]
        assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))

    def test_asymptotic_at_100(self):
        assert expected_bias_binomial(100, 0.5) == pytest.approx(
            math.sqrt(2 / (math.pi * 100)), rel=0.05)

    def test_large_k_stable(self):
        value = expected_bias_binomial(10_000, 0.5)
        assert 0.0 < value < 0.01
        assert value == pytest.approx(math.sqrt(2 / (math.pi * 10_000)), rel=0.01)

    def test_exact_std(self):
        # k=2, alpha=.5: X in {0,1} each w.p. 1/2 -> E X=.5, E X^2=.5, sd=.5
        assert expected_bias_binomial_std(2, 0.5) == pytest.approx(0.5, abs=1e-12)


class TestMonteCarlo:
    def test_matches_enumeration_small(self):
        est = monte_carlo_expected_bias(2, 0.5, trials=100_000, seed=0)
        assert abs(est.mean - 0.5) <= 3 * est.std_error

    @pytest.mark.parametrize("k", [50, 100, 200])
    def test_matches_exact_sum(self, k):
        est = monte_carlo_expected_bias(k, 0.5, trials=100_000, seed=k)
        exact = expected_bias_binomial(k, 0.5)
        assert abs(est.mean - exact) <= 3 * max(est.std_error, 1e-9)

    def test_single_trial_deterministic(self):
        first = monte_carlo_expected_bias(10, 0.4, trials=1, seed=5)
        second = monte_carlo_expected_bias(10, 0.4, trials=1, seed=5)
        assert first == second
        assert first.std_error == 0.0

    def test_invalid_alpha(self):
        with pytest.raises(InvalidAlpha):
            monte_carlo_expected_bias(5, -0.2, trials=10, seed=0)


def scored_with_labels(pairs):
    """pairs: list of (score, label_name) in any order."""
    return [(ScoredImage(f"i{j:03d}", float(score)), SCHEME.label_from_name(name))
            for j, (score, name) in enumerate(pairs)]


class TestQuantileCurve:
    def test_homogeneous_bins(self):
        scored = scored_with_labels([
            (0.1, "female"), (0.2, "female"), (0.8, "male"), (0.9, "male")])
        curve = quantile_bias_curve(scored, bins=2)
        assert [b.bias for b in curve.bins] == [1.0, 1.0]
        assert [b.count for b in curve.bins] == [2, 2]

    def test_singleton_bins(self):
        pairs = [(i / 100, "male" if i % 2 else "female") for i in range(100)]
        curve = quantile_bias_curve(scored_with_labels(pairs), bins=100)
        assert all(b.bias == 1.0 for b in curve.bins)

    def test_alternating_pairs_balance(self):
        pairs = [(i / 100, "male" if i % 2 else "female") for i in range(100)]
        curve = quantile_bias_curve(scored_with_labels(pairs), bins=50)
        assert all(b.bias == 0.0 for b in curve.bins)

    def test_partition_exact(self):
        rng = np.random.default_rng(8)
        pairs = [(float(rng.random()), ["male", "female", "na"][int(rng.integers(3))])
                 for _ in range(103)]
        scored = scored_with_labels(pairs)
        curve = quantile_bias_curve(scored, bins=10)
        assert curve.counts_total == 103
        sizes = [b.count for b in curve.bins]
        assert max(sizes) - min(sizes) <= 1
        assert sizes == sorted(sizes, reverse=True)  # larger bins first
        # brute-force recount per bin
        ordered = sorted(scored, key=lambda pair: (pair[0].score, pair[0].image_id))
        start = 0
        for bin_ in curve.bins:
            chunk = ordered[start:start + bin_.count]
            signed = sum(lbl.signed_weight for _, lbl in chunk)
            assert bin_.bias == abs(signed) / bin_.count
            assert bin_.mean_similarity == pytest.approx(
                np.mean([item.score for item, _ in chunk]))
            start += bin_.count
        assert curve.bins[0].quantile_low == 0.0
        assert curve.bins[-1].quantile_high == 1.0

    def test_empty_raises(self):
        with pytest.raises(EmptyInput):
            quantile_bias_curve([], bins=3)


class TestOls:
    def test_exact_line(self):
        fit = ols_fit([(x, 2 * x + 1) for x in (0.0, 1.0, 2.0, 5.0)])
        assert fit.slope == pytest.approx(2.0, abs=1e-12)
        assert fit.intercept == pytest.approx(1.0, abs=1e-12)
        assert fit.r_squared == pytest.approx(1.0, abs=1e-12)

    def test_hand_solved_normal_equations(self):
        fit = ols_fit([(0, 0), (1, 1), (2, 0)])
        assert fit.slope == pytest.approx(0.0, abs=1e-15)
        assert fit.intercept == pytest.approx(1 / 3, abs=1e-15)

    def test_degenerate_x(self):
        with pytest.raises(DegenerateX):
            ols_fit([(1.0, 2.0), (1.0, 3.0)])

    def test_flat_y_r_squared_one(self):
        fit = ols_fit([(0, 5.0), (1, 5.0), (2, 5.0)])
        assert fit.slope == 0.0
        assert fit.r_squared == 1.0

    def test_matches_lstsq_oracle(self):
        rng = np.random.default_rng(55)
        for _ in range(200):
            n = int(rng.integers(2, 40))
            x = rng.standard_normal(n) * 3
            if np.ptp(x) == 0:
                continue
            y = rng.standard_normal(n) * 2 + 1.5 * x
            fit = ols_fit(list(zip(x, y)))
            design = np.column_stack([x, np.ones(n)])
            (slope, intercept), *_ = np.linalg.lstsq(design, y, rcond=None)
            assert fit.slope == pytest.approx(slope, abs=1e-9)
            assert fit.intercept == pytest.approx(intercept, abs=1e-9)


class TestSpearman:
    def test_monotone_increasing(self):
        assert spearman([1, 2, 3], [10, 20, 30]) == pytest.approx(1.0)

    def test_monotone_decreasing(self):
        assert spearman([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)

    def test_tied_hand_case(self):
        assert spearman([1, 2, 3, 4], [1, 1, 2, 2]) == pytest.approx(0.8944, abs=1e-3)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            spearman([1, 2], [1, 2, 3])

    def test_zero_variance(self):
        with pytest.raises(ZeroVariance):
            spearman([1, 1, 1], [1, 2, 3])

    def test_matches_scipy_oracle(self):
        rng = np.random.default_rng(31)
        for trial in range(500):
            n = int(rng.integers(2, 60))
            x = rng.standard_normal(n)
            y = rng.standard_normal(n)
            if rng.random() < 0.5:  # force ties
                x = np.round(x * 2) / 2
                y = np.round(y)
            if np.ptp(x) == 0 or np.ptp(y) == 0:
                continue
            expected = scipy.stats.spearmanr(x, y).statistic
            assert spearman(x.tolist(), y.tolist()) == pytest.approx(expected, abs=1e-9), trial

    @settings(max_examples=40, deadline=None)
    @given(st.integers(min_value=0, max_value=2**20))
    def test_invariant_under_increasing_transform(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal(12)
        y = rng.standard_normal(12)
        base = spearman(x.tolist(), y.tolist())
        transformed = spearman(np.exp(x).tolist(), (y**3 + 5 * y).tolist())
        assert transformed == pytest.approx(base, abs=1e-12)


class TestSyntheticCorpus:
    def test_unit_norm_and_exact_scores(self):
        spec = SyntheticSpec(n_images=200, d=16, alpha=0.5, n_queries=4, seed=3)
        corpus = generate_synthetic_corpus(spec)
        norms = [float(np.linalg.norm(im.embedding)) for im in corpus.images]
        assert max(abs(n - 1.0) for n in norms) < 1e-9
        assert len(corpus.queries) == 4
        assert all(len(q.relevant_ids) == 100 for q in corpus.queries)

    def test_independent_scores_uncorrelated(self):
        spec = SyntheticSpec(n_images=4000, d=12, alpha=0.5, model_bias=0.0,
                             n_queries=3, seed=11)
        corpus = generate_synthetic_corpus(spec)
        assert abs(score_attribute_spearman(corpus)) < 0.05

    def test_large_bias_dominates_topk(self):
        spec = SyntheticSpec(n_images=2000, d=10, alpha=0.5, model_bias=3.0,
                             n_queries=2, seed=13)
        corpus = generate_synthetic_corpus(spec)
        labels = corpus.ground_truth_labels()
        for query in corpus.queries:
            bag = rank_top_k(query, corpus.images, 100)
            assert bag_bias(bag, labels) > 0.9

    def test_byte_identical_across_runs(self):
        spec = SyntheticSpec(n_images=150, d=8, alpha=0.69, neutral_fraction=0.1,
                             model_bias=0.3, n_queries=3, seed=42)
        outputs = []
        for _ in range(2):
            corpus = generate_synthetic_corpus(spec)
            img_buf, qry_buf = io.StringIO(), io.StringIO()
            dump_image_records(corpus.images, img_buf)
            dump_query_records(corpus.queries, qry_buf)
            outputs.append(img_buf.getvalue() + qry_buf.getvalue())
        assert outputs[0] == outputs[1]

    def test_realized_alpha_tracks_spec(self):
        spec = SyntheticSpec(n_images=20_000, d=8, alpha=0.69, n_queries=2, seed=21)
        corpus = generate_synthetic_corpus(spec)
        assert realized_alpha(corpus) == pytest.approx(0.69, abs=0.02)

    def test_invalid_specs(self):
        with pytest.raises(InvalidSpec):
            SyntheticSpec(n_images=0, d=4, alpha=0.5)
        with pytest.raises(InvalidSpec):
            SyntheticSpec(n_images=10, d=4, alpha=1.5)
        with pytest.raises(InvalidSpec):
            SyntheticSpec(n_images=10, d=4, alpha=0.5, n_queries=4)
        with pytest.raises(InvalidSpec):
            SyntheticSpec(n_images=10, d=4, alpha=0.5, neutral_fraction=1.0)
