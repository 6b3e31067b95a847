import math

import numpy as np
import pytest

from convmmd import (
    GaussianLocationModel,
    GaussianMixtureModel1D,
    GaussianScaleModel,
    LinearEivModel,
    LogisticEivModel,
    gmm_params,
    gmm_theta,
)

EIVR_GMM = gmm_theta([0.3, 0.7], [2.5, 3.0], [1.0, 1.0])


def make_models():
    rng = np.random.default_rng(123)
    gmm = GaussianMixtureModel1D(3)
    theta_gmm = gmm_theta([0.23, 0.33, 0.44], [-3.72, 0.11, 4.52], [1.0, 1.0, 1.0])
    eiv = LinearEivModel(2)
    theta_eiv = np.concatenate([[1.5, 1.0, 0.0], EIVR_GMM])
    logit = LogisticEivModel((1, 1))
    theta_logit = np.concatenate([
        [0.5, 0.8, 1.2],
        gmm_theta([1.0], [0.0], [1.0]),
        gmm_theta([1.0], [0.0], [1.0]),
    ])
    return [
        (gmm, theta_gmm),
        (eiv, theta_eiv),
        (logit, theta_logit),
        (GaussianScaleModel(), np.array([math.log(2.0)])),
        (GaussianLocationModel(sigma=1.5), np.array([0.7])),
    ], rng


class TestThetaHelpers:
    def test_round_trip(self):
        theta = gmm_theta([0.2, 0.8], [-1.0, 3.0], [0.5, 2.0])
        w, mu, sd = gmm_params(theta)
        assert np.allclose(w, [0.2, 0.8])
        assert np.allclose(mu, [-1.0, 3.0])
        assert np.allclose(sd, [0.5, 2.0])

    def test_weights_normalized(self):
        w, _, _ = gmm_params(np.array([5.0, 5.0, 5.0, 0, 1, 2, 0, 0, 0]))
        assert np.allclose(w, 1 / 3)
        assert w.sum() == pytest.approx(1.0)


class TestSampling:
    def test_gmm_single_component_mean(self):
        model = GaussianMixtureModel1D(1)
        theta = gmm_theta([1.0], [0.0], [1.0])
        out = model.sample(theta, 10**5, np.random.default_rng(0))
        assert out.shape == (10**5, 1)
        assert abs(out.mean()) < 0.013  # 4 SE of a standard normal mean

    def test_eiv_mean_y(self):
        model = LinearEivModel(2)
        theta = np.concatenate([[1.5, 1.0, 0.0], EIVR_GMM])
        out = model.sample(theta, 10**5, np.random.default_rng(1))
        assert out.shape == (10**5, 2)
        # E[X] = 0.3*2.5 + 0.7*3 = 2.85; E[Y] = 1.5 + 2.85 = 4.35
        assert out[:, 0].mean() == pytest.approx(2.85, abs=0.02)
        assert out[:, 1].mean() == pytest.approx(4.35, abs=0.03)

    def test_logistic_extreme_intercept(self):
        model = LogisticEivModel((1,))
        theta = np.concatenate([[-40.0, 0.0], gmm_theta([1.0], [0.0], [1.0])])
        out = model.sample(theta, 500, np.random.default_rng(2))
        assert out.shape == (500, 2)
        assert np.all(out[:, -1] == 0.0)

    def test_logistic_response_binary(self):
        model = LogisticEivModel((1,))
        theta = np.concatenate([[0.0, 1.0], gmm_theta([1.0], [0.0], [1.0])])
        out = model.sample(theta, 500, np.random.default_rng(3))
        assert set(np.unique(out[:, -1])) <= {0.0, 1.0}

    def test_deterministic(self):
        for model, theta in make_models()[0]:
            a = model.sample(theta, 20, np.random.default_rng(7))
            b = model.sample(theta, 20, np.random.default_rng(7))
            assert np.array_equal(a, b)


class TestLogDensity:
    def test_standard_normal_at_zero(self):
        model = GaussianMixtureModel1D(1)
        theta = gmm_theta([1.0], [0.0], [1.0])
        val = model.log_density(theta, np.array([[0.0]]))[0]
        assert val == pytest.approx(-0.5 * math.log(2 * math.pi), rel=1e-12)
        assert val == pytest.approx(-0.91894, abs=1e-5)

    def test_symmetric_two_component(self):
        model = GaussianMixtureModel1D(2)
        theta = gmm_theta([0.5, 0.5], [-1.0, 1.0], [1.0, 1.0])
        val = model.log_density(theta, np.array([[0.0]]))[0]
        assert val == pytest.approx(math.log(math.exp(-0.5) / math.sqrt(2 * math.pi)),
                                    rel=1e-12)
        assert val == pytest.approx(-1.41894, abs=1e-5)

    def test_logistic_balanced_point(self):
        model = LogisticEivModel((1,))
        feat_block = gmm_theta([1.0], [0.0], [1.0])
        theta = np.concatenate([[0.0, 0.0], feat_block])  # linear predictor 0
        y = np.array([[0.3, 1.0]])
        feat_model = GaussianMixtureModel1D(1)
        feat_ld = feat_model.log_density(feat_block, y[:, :1])[0]
        val = model.log_density(theta, y)[0]
        assert val == pytest.approx(feat_ld + math.log(0.5), rel=1e-12)

    def test_gmm_normalization(self):
        model = GaussianMixtureModel1D(3)
        theta = gmm_theta([0.23, 0.33, 0.44], [-3.72, 0.11, 4.52], [1.0, 0.5, 2.0])
        grid = np.linspace(-30.0, 30.0, 10**4)
        dens = np.exp(model.log_density(theta, grid[:, None]))
        assert np.trapezoid(dens, grid) == pytest.approx(1.0, abs=1e-6)


class TestScore:
    def test_single_gaussian_hand_values(self):
        model = GaussianMixtureModel1D(1)
        theta = gmm_theta([1.0], [0.0], [1.0])
        s = model.score(theta, np.array([[2.0]]))[0]
        assert s[1] == pytest.approx(2.0, rel=1e-12)  # d/d mu
        assert s[2] == pytest.approx(3.0, rel=1e-12)  # d/d log sigma

    def test_symmetric_point_logit_gradients_vanish(self):
        model = GaussianMixtureModel1D(2)
        theta = gmm_theta([0.5, 0.5], [-1.5, 1.5], [1.0, 1.0])
        s = model.score(theta, np.array([[0.0]]))[0]
        assert s[0] == pytest.approx(0.0, abs=1e-12)
        assert s[1] == pytest.approx(0.0, abs=1e-12)

    def test_matches_finite_differences(self):
        models, rng = make_models()
        h = 1e-5
        for model, theta in models:
            ys = model.sample(theta, 10, rng)
            s = model.score(theta, ys)
            assert s.shape == (10, theta.size)
            for j in range(theta.size):
                step = np.zeros_like(theta)
                step[j] = h
                fd = (model.log_density(theta + step, ys)
                      - model.log_density(theta - step, ys)) / (2 * h)
                tol = np.maximum(1e-6, 1e-4 * np.abs(s[:, j]))
                assert np.all(np.abs(s[:, j] - fd) < tol + 1e-6)

    def test_fisher_identity(self):
        # E_q[score] = 0 at the sampling parameter
        models, _ = make_models()
        for model, theta in models:
            rng = np.random.default_rng(99)
            ys = model.sample(theta, 10**5, rng)
            s = model.score(theta, ys)
            se = s.std(axis=0, ddof=1) / math.sqrt(s.shape[0])
            assert np.all(np.abs(s.mean(axis=0)) <= 4 * np.maximum(se, 1e-12))

    def test_softmax_shift_invariance(self):
        model = GaussianMixtureModel1D(3)
        theta = gmm_theta([0.2, 0.3, 0.5], [-1.0, 0.0, 2.0], [0.7, 1.0, 1.3])
        shifted = theta.copy()
        shifted[:3] += 5.0
        ys = np.array([[0.4], [-2.0], [3.3]])
        assert np.allclose(model.log_density(theta, ys),
                           model.log_density(shifted, ys))
        assert np.allclose(model.score(theta, ys), model.score(shifted, ys))

    def test_label_permutation_symmetry(self):
        model = GaussianMixtureModel1D(2)
        theta = gmm_theta([0.3, 0.7], [-1.0, 2.0], [0.8, 1.2])
        perm = gmm_theta([0.7, 0.3], [2.0, -1.0], [1.2, 0.8])
        ys = np.array([[0.5], [-0.3]])
        assert np.allclose(model.log_density(theta, ys),
                           model.log_density(perm, ys))
        s, sp = model.score(theta, ys), model.score(perm, ys)
        swap = [1, 0, 3, 2, 5, 4]
        assert np.allclose(s, sp[:, swap])


class TestLayouts:
    def test_param_counts(self):
        assert GaussianMixtureModel1D(3).n_params == 9
        assert LinearEivModel(2).n_params == 3 + 6
        assert LogisticEivModel((1, 2)).n_params == 3 + 3 + 6
        assert GaussianScaleModel().n_params == 1
        assert GaussianLocationModel(1.0).n_params == 1

    def test_dims(self):
        assert GaussianMixtureModel1D(3).dim == 1
        assert LinearEivModel(2).dim == 2
        assert LogisticEivModel((1, 1)).dim == 3
