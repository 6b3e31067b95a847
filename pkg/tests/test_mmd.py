import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from convmmd import (
    ConvMmdError,
    DimensionMismatchError,
    GaussianLocationModel,
    KernelMixture,
    NoiseModel,
    convmmd_objective,
    deviation_bound,
    mixture_kernel,
    mmd2_biased,
    mmd2_unbiased,
    noise_shift_bound,
    variance_inflation_bound,
)

UNIT = KernelMixture.single([1.0])


def brute_biased(xs, ys, kernel):
    xs, ys = np.atleast_2d(xs.T).T, np.atleast_2d(ys.T).T
    kxx = np.mean([[mixture_kernel(a, b, kernel) for b in xs] for a in xs])
    kyy = np.mean([[mixture_kernel(a, b, kernel) for b in ys] for a in ys])
    kxy = np.mean([[mixture_kernel(a, b, kernel) for b in ys] for a in xs])
    return kxx + kyy - 2 * kxy


def brute_unbiased(xs, ys, kernel):
    xs, ys = np.atleast_2d(xs.T).T, np.atleast_2d(ys.T).T
    n = len(xs)
    total = 0.0
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            total += (mixture_kernel(xs[i], xs[j], kernel)
                      + mixture_kernel(ys[i], ys[j], kernel)
                      - mixture_kernel(xs[i], ys[j], kernel)
                      - mixture_kernel(ys[i], xs[j], kernel))
    return total / (n * (n - 1))


class TestBiased:
    def test_identical_multisets_zero(self):
        xs = np.array([0.3, -1.2, 4.0])
        assert mmd2_biased(xs, xs.copy(), UNIT) == pytest.approx(0.0, abs=1e-12)

    def test_single_points(self):
        val = 1 + 1 - 2 * math.exp(-0.5)
        assert mmd2_biased(np.array([0.0]), np.array([1.0]), UNIT) == pytest.approx(
            val, rel=1e-12)
        assert mmd2_biased(np.array([0.0]), np.array([1.0]), UNIT) == pytest.approx(
            0.78694, abs=1e-5)

    def test_unequal_sizes(self):
        xs, ys = np.array([0.0, 2.0]), np.array([1.0])
        expect = (2 + 2 * math.exp(-2)) / 4 + 1 - 2 * math.exp(-0.5)
        assert mmd2_biased(xs, ys, UNIT) == pytest.approx(expect, rel=1e-12)
        assert mmd2_biased(xs, ys, UNIT) == pytest.approx(0.35450, abs=2e-4)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(0)
        mix = KernelMixture(bandwidths=[[0.7, 1.3], [1.4, 2.6]])
        xs, ys = rng.normal(size=(6, 2)), rng.normal(size=(4, 2))
        assert mmd2_biased(xs, ys, mix) == pytest.approx(
            brute_biased(xs, ys, mix), rel=1e-10)

    @settings(max_examples=30)
    @given(seed=st.integers(min_value=0, max_value=2**31))
    def test_nonnegative(self, seed):
        rng = np.random.default_rng(seed)
        xs = rng.normal(size=rng.integers(1, 12))
        ys = rng.normal(size=rng.integers(1, 12)) + rng.normal()
        assert mmd2_biased(xs, ys, UNIT) >= -1e-12

    def test_empty_rejected(self):
        with pytest.raises(ConvMmdError):
            mmd2_biased(np.empty(0), np.array([1.0]), UNIT)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            mmd2_biased(np.zeros((3, 2)), np.zeros((3, 1)), KernelMixture.single([1.0, 1.0]))


class TestUnbiased:
    def test_paired_identical_zero(self):
        xs = np.array([0.5, 1.5, -2.0])
        assert mmd2_unbiased(xs, xs.copy(), UNIT) == 0.0

    def test_same_multiset_zero(self):
        xs = np.array([0.0, 2.0])
        assert mmd2_unbiased(xs, np.array([0.0, 2.0]), UNIT) == pytest.approx(0.0, abs=1e-15)

    def test_brute_force_two_pairs(self):
        xs, ys = np.array([0.0, 2.0]), np.array([1.0, 3.0])
        assert mmd2_unbiased(xs, ys, UNIT) == pytest.approx(
            brute_unbiased(xs, ys, UNIT), rel=1e-12)

    def test_matches_brute_force_random(self):
        rng = np.random.default_rng(2)
        mix = KernelMixture(bandwidths=[[0.8], [1.6]])
        xs, ys = rng.normal(size=7), rng.normal(size=7) + 1.0
        assert mmd2_unbiased(xs, ys, mix) == pytest.approx(
            brute_unbiased(xs, ys, mix), rel=1e-10)

    def test_unequal_sizes_rejected(self):
        with pytest.raises(ConvMmdError):
            mmd2_unbiased(np.array([0.0, 1.0, 2.0]), np.array([0.0, 1.0]), UNIT)

    def test_too_few_points_rejected(self):
        with pytest.raises(ConvMmdError):
            mmd2_unbiased(np.array([0.0]), np.array([1.0]), UNIT)

    def test_lower_bound(self):
        # U-statistics may go negative but never below -4K
        rng = np.random.default_rng(3)
        for _ in range(50):
            xs, ys = rng.normal(size=5), rng.normal(size=5)
            assert mmd2_unbiased(xs, ys, UNIT) >= -4.0

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(min_value=0, max_value=2**31))
    def test_biased_unbiased_gap(self, seed):
        # the two estimators differ only through diagonal terms
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 20))
        xs = rng.normal(size=n)
        ys = rng.normal(size=n) + rng.normal()
        gap = abs(mmd2_biased(xs, ys, UNIT) - mmd2_unbiased(xs, ys, UNIT))
        assert gap <= 8.0 / n + 1e-12


class TestObjective:
    def test_point_mass_on_data_is_zero(self):
        data = np.array([[1.0], [2.0], [3.0], [4.0]])

        class PointMass:
            n_params = 0

            def sample(self, theta, n, rng):
                return data[:n] if n <= 4 else np.resize(data, (n, 1))

        val = convmmd_objective(data, PointMass(), np.empty(0), NoiseModel.none(),
                                UNIT, m=4, rng=np.random.default_rng(0))
        assert val == pytest.approx(0.0, abs=1e-12)

    def test_null_below_deviation_bound(self):
        rng = np.random.default_rng(5)
        data = rng.standard_normal((2000, 1))
        model = GaussianLocationModel(sigma=1.0)
        noise = NoiseModel.gaussian_fixed(1.0)
        noisy = data + rng.standard_normal((2000, 1))
        val = convmmd_objective(noisy, model, np.array([0.0]), noise, UNIT,
                                m=2000, rng=np.random.default_rng(6))
        assert val < deviation_bound(1.0, 2000, 0.05)

    def test_separation_from_null(self):
        model = GaussianLocationModel(sigma=1.0)
        noise = NoiseModel.gaussian_fixed(1.0)
        rng = np.random.default_rng(7)
        wins = 0
        for seed in range(20):
            data = rng.standard_normal((500, 1))
            noisy = data + rng.standard_normal((500, 1))
            null = convmmd_objective(noisy, model, np.array([0.0]), noise, UNIT,
                                     m=500, rng=np.random.default_rng(seed))
            alt = convmmd_objective(noisy, model, np.array([3.0]), noise, UNIT,
                                    m=500, rng=np.random.default_rng(seed))
            wins += alt > null
        assert wins == 20

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(8)
        data = rng.standard_normal((100, 1))
        model = GaussianLocationModel(sigma=1.0)
        noise = NoiseModel.gaussian_fixed(0.5)
        a = convmmd_objective(data, model, np.array([0.3]), noise, UNIT, m=100,
                              rng=np.random.default_rng(77))
        b = convmmd_objective(data, model, np.array([0.3]), noise, UNIT, m=100,
                              rng=np.random.default_rng(77))
        assert a == b

    def test_batch_too_small(self):
        with pytest.raises(ConvMmdError):
            convmmd_objective(np.zeros((5, 1)), GaussianLocationModel(1.0),
                              np.array([0.0]), NoiseModel.none(), UNIT, m=1,
                              rng=np.random.default_rng(0))


class TestBounds:
    def test_deviation_bound_values(self):
        assert deviation_bound(1.0, 10000, 0.05) == pytest.approx(0.07841, abs=1e-5)
        assert deviation_bound(1.0, 40000, 0.05) == pytest.approx(
            deviation_bound(1.0, 10000, 0.05) / 2, rel=1e-12)
        assert deviation_bound(1.0, 100, 0.999999) == pytest.approx(
            0.4 * (1 + math.sqrt(0.25 * math.log(2 / 0.999999))), rel=1e-6)

    def test_deviation_bound_near_one_gamma(self):
        assert deviation_bound(1.0, 100, 1 - 1e-12) == pytest.approx(
            0.4 * (1 + math.sqrt(0.25 * math.log(2))), rel=1e-4)
        assert deviation_bound(1.0, 100, 1 - 1e-12) == pytest.approx(0.56651, abs=2e-5)

    def test_deviation_bound_domain(self):
        for bad in [(0.0, 100, 0.05), (1.0, 0, 0.05), (1.0, 100, 0.0), (1.0, 100, 1.0)]:
            with pytest.raises(ConvMmdError):
                deviation_bound(*bad)

    def test_variance_inflation_values(self):
        assert variance_inflation_bound(0.60653, 1.0, 100, 0.0) == 0.0
        lk2a = 32 * 0.60653**2 * 1.0
        expect = (2 / 9900) * (lk2a + 8 * math.sqrt(lk2a))
        got = variance_inflation_bound(0.60653, 1.0, 100, 1.0)
        assert got == pytest.approx(expect, rel=1e-12)
        assert got == pytest.approx(0.00792, abs=1e-5)

    def test_variance_inflation_scaling(self):
        a = variance_inflation_bound(0.5, 1.0, 100, 1.0)
        b = variance_inflation_bound(0.5, 1.0, 1000, 1.0)
        assert b == pytest.approx(a * 9900 / 999000, rel=1e-12)

    def test_noise_shift_values(self):
        assert noise_shift_bound(0.60653, 0.0) == 0.0
        got = noise_shift_bound(0.60653, 1.0)
        assert got == pytest.approx(4 * 0.60653 * math.sqrt(2), rel=1e-12)
        assert got == pytest.approx(3.43097, abs=1e-4)
        assert noise_shift_bound(0.60653 / 2, 1.0) == pytest.approx(got / 2, rel=1e-12)

    def test_null_unbiased_mean_near_zero(self):
        # with matched distributions the unbiased statistic is centered at 0
        rng = np.random.default_rng(11)
        vals = []
        for _ in range(200):
            x = rng.standard_normal(200) + rng.standard_normal(200)
            y = rng.standard_normal(200) + rng.standard_normal(200)
            vals.append(mmd2_unbiased(x, y, UNIT))
        vals = np.array(vals)
        se = vals.std(ddof=1) / math.sqrt(len(vals))
        assert abs(vals.mean()) <= 3 * se
