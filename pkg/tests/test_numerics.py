"""Kernel-level tests: fixtures are hand-derived or brute-force oracle values."""

import math

import numpy as np
import pytest
import scipy.stats

from nestembed.numerics import (
    ConstantInputError,
    DimensionMismatchError,
    EmptyInputError,
    NonFiniteError,
    ZeroNormError,
    average_ranks,
    cosine_similarity,
    log_sum_exp,
    pairwise_cosine,
    pearson,
    spearman,
)


def brute_force_ranks(x):
    """Independent O(n^2) fractional-rank oracle: count-below plus half the ties."""
    out = []
    for xi in x:
        less = sum(1 for v in x if v < xi)
        eq = sum(1 for v in x if v == xi)
        out.append(less + (eq + 1) / 2.0)
    return np.array(out)


class TestCosine:
    def test_identical(self):
        assert cosine_similarity([1, 0], [1, 0]) == 1.0

    def test_orthogonal(self):
        assert cosine_similarity([1, 0], [0, 1]) == 0.0

    def test_45_degrees(self):
        # analytically 1/sqrt(2)
        assert cosine_similarity([1, 0], [1, 1]) == pytest.approx(
            0.7071067811865475, abs=1e-12
        )

    def test_self_similarity_is_one(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            u = rng.normal(size=rng.integers(1, 12))
            assert cosine_similarity(u, u) == pytest.approx(1.0, abs=1e-12)

    def test_positive_scale_invariance(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            u = rng.normal(size=6)
            v = rng.normal(size=6)
            c = rng.uniform(0.01, 100.0)
            assert cosine_similarity(u, c * v) == pytest.approx(
                cosine_similarity(u, v), abs=1e-12
            )

    def test_clamped_range(self):
        rng = np.random.default_rng(9)
        for _ in range(200):
            u = rng.normal(size=4) * 10.0 ** float(rng.integers(-3, 4))
            assert -1.0 <= cosine_similarity(u, u * 3.7) <= 1.0

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            cosine_similarity([1, 0], [1, 0, 0])

    def test_zero_norm(self):
        with pytest.raises(ZeroNormError):
            cosine_similarity([0, 0], [1, 0])
        with pytest.raises(ZeroNormError):
            cosine_similarity([1, 0], [0, 0])

    def test_non_finite_rejected(self):
        with pytest.raises(NonFiniteError):
            cosine_similarity([1, np.nan], [1, 0])


class TestPairwiseCosine:
    def test_identity(self):
        out = pairwise_cosine(np.eye(2), np.eye(2))
        np.testing.assert_array_equal(out, np.eye(2))

    def test_self_diagonal(self):
        rng = np.random.default_rng(11)
        a = rng.normal(size=(4, 5))
        a /= np.linalg.norm(a, axis=1, keepdims=True)
        out = pairwise_cosine(a, a)
        np.testing.assert_allclose(np.diag(out), 1.0, atol=1e-12)

    def test_matches_scalar_loop_exactly(self):
        rng = np.random.default_rng(12)
        a = rng.normal(size=(3, 4))
        b = rng.normal(size=(2, 4))
        out = pairwise_cosine(a, b)
        for i in range(3):
            for j in range(2):
                assert out[i, j] == cosine_similarity(a[i], b[j])

    def test_column_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            pairwise_cosine(np.ones((2, 3)), np.ones((2, 4)))

    def test_zero_row_names_index(self):
        a = np.ones((3, 2))
        a[1] = 0.0
        with pytest.raises(ZeroNormError, match="row 1"):
            pairwise_cosine(a, np.ones((2, 2)))


class TestPearson:
    def test_exact_linear(self):
        assert pearson([1, 2, 3], [2, 4, 6]) == 1.0

    def test_exact_negative_linear(self):
        assert pearson([1, 2, 3], [3, 2, 1]) == -1.0

    def test_half_correlation_fixture(self):
        # frozen from the brute-force oracle (np.corrcoef agrees)
        assert pearson([1, 2, 3], [1, 3, 2]) == pytest.approx(0.5, abs=1e-12)

    def test_symmetry(self):
        rng = np.random.default_rng(13)
        for _ in range(20):
            x = rng.normal(size=8)
            y = rng.normal(size=8)
            assert pearson(x, y) == pytest.approx(pearson(y, x), abs=1e-15)

    def test_affine_image(self):
        rng = np.random.default_rng(14)
        x = rng.normal(size=10)
        assert pearson(x, 2.5 * x + 3) == pytest.approx(1.0, abs=1e-12)
        assert pearson(x, -0.5 * x + 1) == pytest.approx(-1.0, abs=1e-12)

    def test_errors(self):
        with pytest.raises(DimensionMismatchError):
            pearson([1, 2], [1, 2, 3])
        with pytest.raises(EmptyInputError):
            pearson([1], [2])
        with pytest.raises(ConstantInputError):
            pearson([1, 1, 1], [1, 2, 3])


class TestSpearman:
    def test_monotone_map_gives_one(self):
        assert spearman([1, 2, 3], [10, 20, 30]) == pytest.approx(1.0, abs=1e-12)

    def test_tie_ranks(self):
        np.testing.assert_allclose(
            average_ranks([1, 2, 2, 3]), [1.0, 2.5, 2.5, 4.0], atol=0
        )

    def test_fixture_point_eight(self):
        # frozen from the brute-force rank-then-correlate oracle
        assert spearman([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8, abs=1e-12)

    def test_invariant_under_increasing_transform(self):
        rng = np.random.default_rng(15)
        for _ in range(20):
            x = rng.normal(size=9)
            y = rng.normal(size=9)
            base = spearman(x, y)
            assert spearman(np.exp(x), y) == pytest.approx(base, abs=1e-12)
            assert spearman(x, y**3) == pytest.approx(base, abs=1e-12)

    def test_classic_formula_on_tie_free_input(self):
        rng = np.random.default_rng(16)
        for _ in range(30):
            n = int(rng.integers(3, 15))
            x = rng.permutation(n).astype(float)
            y = rng.permutation(n).astype(float)
            d = brute_force_ranks(x) - brute_force_ranks(y)
            classic = 1 - 6 * float(d @ d) / (n * (n * n - 1))
            assert spearman(x, y) == pytest.approx(classic, abs=1e-10)

    def test_brute_force_oracle_with_ties(self):
        rng = np.random.default_rng(17)
        for _ in range(100):
            n = int(rng.integers(4, 20))
            # small integer support forces ties
            x = rng.integers(0, 5, size=n).astype(float)
            y = rng.integers(0, 5, size=n).astype(float)
            rx, ry = brute_force_ranks(x), brute_force_ranks(y)
            if np.all(rx == rx[0]) or np.all(ry == ry[0]):
                with pytest.raises(ConstantInputError):
                    spearman(x, y)
                continue
            expected = float(np.corrcoef(rx, ry)[0, 1])
            assert spearman(x, y) == pytest.approx(expected, abs=1e-10)

    def test_agrees_with_scipy(self):
        rng = np.random.default_rng(18)
        for _ in range(25):
            x = rng.integers(0, 6, size=12).astype(float)
            y = rng.normal(size=12)
            if np.all(x == x[0]):
                continue
            ref = scipy.stats.spearmanr(x, y).statistic
            assert spearman(x, y) == pytest.approx(ref, abs=1e-10)

    def test_constant_after_ranking(self):
        with pytest.raises(ConstantInputError):
            spearman([5, 5, 5], [1, 2, 3])


class TestLogSumExp:
    def test_singleton(self):
        assert log_sum_exp([0.0]) == 0.0

    def test_pair_symmetry(self):
        a = 3.25
        assert log_sum_exp([a, a]) == pytest.approx(a + math.log(2), abs=1e-12)

    def test_no_overflow(self):
        assert log_sum_exp([1000.0, 1000.0]) == pytest.approx(
            1000 + math.log(2), abs=1e-9
        )
        assert math.isfinite(log_sum_exp([-1e308, 700.0, 700.0]))

    def test_empty(self):
        with pytest.raises(EmptyInputError):
            log_sum_exp([])
