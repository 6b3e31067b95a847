import math

import numpy as np
import pytest

from convmmd import (
    ConvMmdError,
    DegenerateDataError,
    GaussianMixtureModel1D,
    SeparationError,
    em_gmm,
    gmm_theta,
    logistic_mle,
    ols,
)

TRUTH_W = np.array([0.23, 0.33, 0.44])
TRUTH_MU = np.array([-3.72, 0.11, 4.52])


def draw_mixture(n, rng, noise_sd=0.0):
    model = GaussianMixtureModel1D(3)
    theta = gmm_theta(TRUTH_W, TRUTH_MU, [1.0, 1.0, 1.0])
    y = model.sample(theta, n, rng)[:, 0]
    if noise_sd:
        y = y + rng.normal(scale=noise_sd, size=n)
    return y


class TestEmGmm:
    def test_single_component_closed_form(self):
        y = np.array([1.0, 2.0, 4.0, 9.0])
        res = em_gmm(y, 1)
        assert res.weights[0] == pytest.approx(1.0)
        assert res.means[0] == pytest.approx(y.mean())
        assert res.sds[0] == pytest.approx(y.std())  # MLE sd

    def test_recovers_well_separated_mixture(self):
        y = draw_mixture(5000, np.random.default_rng(0))
        res = em_gmm(y, 3)
        # components come back sorted by ascending weight; truth is too
        assert np.all(np.abs(res.means - TRUTH_MU) < 0.15)
        assert np.all(np.abs(res.weights - TRUTH_W) < 0.05)

    def test_noise_inflates_sds(self):
        y = draw_mixture(5000, np.random.default_rng(1), noise_sd=1.258)
        res = em_gmm(y, 3)
        assert np.all(res.sds > 1.2)  # sqrt(1 + 1.583) ~ 1.61

    def test_log_likelihood_monotone(self):
        y = draw_mixture(500, np.random.default_rng(2))
        res = em_gmm(y, 3)
        ll = np.array(res.log_likelihood)
        assert np.all(np.diff(ll) >= -1e-9)
        assert res.n_iter_used == len(ll)

    def test_output_sorted_by_weight(self):
        y = draw_mixture(1000, np.random.default_rng(3))
        res = em_gmm(y, 3)
        assert np.all(np.diff(res.weights) >= 0)
        assert res.weights.sum() == pytest.approx(1.0)
        assert np.all(res.sds > 0)

    def test_degenerate_inputs(self):
        with pytest.raises(ConvMmdError):
            em_gmm(np.array([1.0, 2.0]), 2)
        with pytest.raises(DegenerateDataError):
            em_gmm(np.full(50, 3.0), 2)


class TestOls:
    def test_exact_line(self):
        x = np.array([0.0, 1.0, 2.0, 3.0])
        a, b, s = ols(x, 1.5 + x)
        assert a == pytest.approx(1.5, abs=1e-12)
        assert b == pytest.approx(1.0, abs=1e-12)
        assert s == pytest.approx(0.0, abs=1e-9)

    def test_normal_equations(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=200)
        y = 0.3 + 2.0 * x + rng.normal(size=200)
        a, b, _ = ols(x, y)
        resid = y - a - b * x
        assert abs(resid.sum()) < 1e-8 * np.abs(y).sum()
        assert abs((x * resid).sum()) < 1e-8 * np.abs(x * y).sum()

    def test_attenuation_under_x_noise(self):
        # measurement error in x biases the slope toward zero:
        # E[beta_hat] ~ var(X)/(var(X)+phi^2) ~ 0.41 for this design
        rng = np.random.default_rng(5)
        betas = []
        for _ in range(20):
            comp = rng.random(1000) < 0.3
            x = np.where(comp, rng.normal(2.5, 1.0, 1000), rng.normal(3.0, 1.0, 1000))
            y = 1.5 + x + rng.normal(size=1000)
            x_noisy = x + rng.normal(scale=1.258, size=1000)
            betas.append(ols(x_noisy, y)[1])
        assert np.mean(betas) < 1.0
        assert np.mean(betas) == pytest.approx(1.1025 / (1.1025 + 1.258**2), abs=0.05)

    def test_degenerate_inputs(self):
        with pytest.raises(ConvMmdError):
            ols(np.array([1.0, 2.0]), np.array([1.0, 2.0]))
        with pytest.raises(ConvMmdError):
            ols(np.full(10, 2.0), np.arange(10.0))


class TestLogisticMle:
    def test_null_model(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=(2000, 2))
        y = (rng.random(2000) < 0.5).astype(float)
        coef = logistic_mle(x, y)
        # null model: all coefficients ~ 0 with SE ~ 2/sqrt(N)
        assert np.all(np.abs(coef) < 4 * 2 / math.sqrt(2000))

    def test_monotone_link(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=500)
        y = (x > 0).astype(float)
        flip = rng.random(500) < 0.01
        y[flip] = 1 - y[flip]
        coef = logistic_mle(x[:, None], y)
        assert coef[1] > 2.0

    def test_recovers_truth(self):
        rng = np.random.default_rng(8)
        x = rng.normal(size=(5000, 2))
        p = 1 / (1 + np.exp(-(0.5 + 0.8 * x[:, 0] + 1.2 * x[:, 1])))
        y = (rng.random(5000) < p).astype(float)
        coef = logistic_mle(x, y)
        assert np.allclose(coef, [0.5, 0.8, 1.2], atol=0.15)

    def test_one_class_rejected(self):
        x = np.random.default_rng(9).normal(size=(50, 1))
        with pytest.raises(SeparationError):
            logistic_mle(x, np.ones(50))

    def test_complete_separation_rejected(self):
        x = np.linspace(-1, 1, 100)[:, None]
        y = (x[:, 0] > 0).astype(float)
        with pytest.raises(SeparationError):
            logistic_mle(x, y)
