import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from convmmd import (
    ConvMmdError,
    CoordinateNoise,
    Fixed,
    HierarchicalUniform,
    NoiseModel,
    PerObservation,
    UnsupportedFamilyError,
    characteristic_function,
    mean_alpha,
    sample_noise,
    total_mean_alpha,
)


def _model(coord):
    return NoiseModel((coord,))


ALL_FAMILIES = [
    CoordinateNoise("gaussian", Fixed(1.258)),
    CoordinateNoise("uniform", Fixed(2.0)),
    CoordinateNoise("laplace", Fixed(0.9)),
    CoordinateNoise("student_t", Fixed(0.8)),
    CoordinateNoise("centered_poisson", rate=3.0, multiplier=0.5),
    CoordinateNoise("gaussian", HierarchicalUniform(1.0, 1.5)),
    CoordinateNoise("laplace", HierarchicalUniform(1.0, 1.5, math.sqrt(2.0))),
    CoordinateNoise("student_t", HierarchicalUniform(1.0, 1.5, math.sqrt(3.0))),
]


class TestSampling:
    def test_none_is_zero(self):
        out = sample_noise(NoiseModel.none(dim=2), 3, np.random.default_rng(0))
        assert out.shape == (3, 2)
        assert np.all(out == 0.0)

    def test_gaussian_fixed_variance(self):
        model = NoiseModel.gaussian_fixed(1.258)
        out = sample_noise(model, 10**5, np.random.default_rng(0))
        assert 1.50 <= np.var(out) <= 1.67  # phi^2 = 1.582564 +/- 3 SE

    def test_uniform_fixed_variance(self):
        model = _model(CoordinateNoise("uniform", Fixed(2.0)))
        out = sample_noise(model, 10**5, np.random.default_rng(0))
        assert 1.30 <= np.var(out) <= 1.37  # (2*2)^2 / 12 = 4/3

    @pytest.mark.parametrize("coord", ALL_FAMILIES,
                             ids=lambda c: f"{c.family}-{type(c.scale).__name__}")
    def test_mean_zero_and_second_moment(self, coord):
        model = _model(coord)
        out = sample_noise(model, 10**5, np.random.default_rng(42))[:, 0]
        a = mean_alpha(model)[0]
        assert abs(out.mean()) <= 4 * math.sqrt(a / 10**5)
        tol = 0.15 if coord.family == "student_t" else 0.05
        assert np.mean(out**2) == pytest.approx(a, rel=tol)

    def test_determinism(self):
        model = NoiseModel.gaussian_fixed(1.0, dim=2)
        a = sample_noise(model, 50, np.random.default_rng(9))
        b = sample_noise(model, 50, np.random.default_rng(9))
        assert np.array_equal(a, b)

    def test_rejects_zero_draws(self):
        with pytest.raises(ConvMmdError):
            sample_noise(NoiseModel.none(), 0, np.random.default_rng(0))

    def test_per_observation_uses_catalog(self):
        scales = np.array([0.5, 1.0, 2.0])
        coord = CoordinateNoise("gaussian", PerObservation(scales))
        rng = np.random.default_rng(0)
        out = sample_noise(_model(coord), 3, rng)
        assert out.shape == (3, 1)
        assert mean_alpha(_model(coord))[0] == pytest.approx(np.mean(scales**2))


class TestMeanAlpha:
    def test_gaussian_fixed(self):
        assert mean_alpha(NoiseModel.gaussian_fixed(1.258))[0] == pytest.approx(
            1.582564, rel=1e-12)

    def test_gaussian_hierarchical(self):
        coord = CoordinateNoise("gaussian", HierarchicalUniform(1.0, 1.5))
        expect = (1.5**3 - 1.0**3) / (3.0 * 0.5)
        assert mean_alpha(_model(coord))[0] == pytest.approx(expect, rel=1e-12)
        assert mean_alpha(_model(coord))[0] == pytest.approx(1.58333, abs=1e-5)

    def test_centered_poisson(self):
        coord = CoordinateNoise("centered_poisson", rate=3.0, multiplier=0.5)
        assert mean_alpha(_model(coord))[0] == pytest.approx(0.75, rel=1e-12)

    def test_divided_scales_match_gaussian_variance(self):
        # Laplace and Student-t hyper-scales are divided by sqrt(2)/sqrt(3)
        # so every family has conditional variance u^2
        gauss = CoordinateNoise("gaussian", HierarchicalUniform(1.0, 1.5))
        lap = CoordinateNoise("laplace", HierarchicalUniform(1.0, 1.5, math.sqrt(2.0)))
        stt = CoordinateNoise("student_t", HierarchicalUniform(1.0, 1.5, math.sqrt(3.0)))
        a = mean_alpha(_model(gauss))[0]
        assert mean_alpha(_model(lap))[0] == pytest.approx(a, rel=1e-12)
        assert mean_alpha(_model(stt))[0] == pytest.approx(a, rel=1e-12)

    def test_none_and_total(self):
        model = NoiseModel((CoordinateNoise("none"),
                            CoordinateNoise("gaussian", Fixed(2.0))))
        assert mean_alpha(model)[0] == 0.0
        assert total_mean_alpha(model) == pytest.approx(4.0)


class TestCharacteristicFunction:
    def test_uniform_zero_at_2pi(self):
        model = _model(CoordinateNoise("uniform", Fixed(0.5)))
        assert abs(characteristic_function(model, 2 * math.pi)) < 1e-12

    def test_value_one_at_origin(self):
        for fam, scale in [("gaussian", 1.0), ("uniform", 0.5), ("laplace", 2.0)]:
            model = _model(CoordinateNoise(fam, Fixed(scale)))
            assert characteristic_function(model, 0.0) == pytest.approx(1.0)

    def test_gaussian_value(self):
        model = _model(CoordinateNoise("gaussian", Fixed(1.0)))
        assert characteristic_function(model, 1.0).real == pytest.approx(
            math.exp(-0.5), rel=1e-12)

    def test_laplace_value(self):
        model = _model(CoordinateNoise("laplace", Fixed(2.0)))
        assert characteristic_function(model, 1.0).real == pytest.approx(0.2, rel=1e-12)

    def test_uniform_zeros_only_at_multiples(self):
        a = 0.5
        model = _model(CoordinateNoise("uniform", Fixed(a)))
        # exact zeros at every t = k*pi/a ...
        for k in range(1, 11):
            assert abs(characteristic_function(model, k * math.pi / a)) < 1e-12
        # ... and nowhere else: away from multiples of pi/a the value is
        # bounded below by |sin(a t)| / (a t) on the inspected range
        ts = np.linspace(1e-6, 20 * math.pi / a, 10**4)
        frac = np.abs(ts * a / math.pi - np.round(ts * a / math.pi))
        off_grid = ts[frac > 0.05]
        vals = np.array([abs(characteristic_function(model, t)) for t in off_grid])
        assert np.all(vals > 1e-3)

    def test_unsupported_families(self):
        with pytest.raises(UnsupportedFamilyError):
            characteristic_function(
                _model(CoordinateNoise("student_t", Fixed(1.0))), 1.0)
        with pytest.raises(UnsupportedFamilyError):
            characteristic_function(
                _model(CoordinateNoise("gaussian", HierarchicalUniform(1.0, 1.5))), 1.0)


class TestValidation:
    def test_unknown_family(self):
        with pytest.raises(UnsupportedFamilyError):
            CoordinateNoise("cauchy", Fixed(1.0))

    def test_missing_scale(self):
        with pytest.raises(ConvMmdError):
            CoordinateNoise("gaussian")

    def test_centered_poisson_needs_rate(self):
        with pytest.raises(ConvMmdError):
            CoordinateNoise("centered_poisson", multiplier=0.5)
        with pytest.raises(ConvMmdError):
            CoordinateNoise("centered_poisson", rate=-1.0, multiplier=0.5)

    def test_fixed_scale_positive(self):
        with pytest.raises(ConvMmdError):
            Fixed(0.0)

    def test_hierarchical_bounds(self):
        with pytest.raises(ConvMmdError):
            HierarchicalUniform(1.5, 1.0)
        with pytest.raises(ConvMmdError):
            HierarchicalUniform(-1.0, 1.0)

    @settings(max_examples=20)
    @given(lo=st.floats(min_value=0.1, max_value=2.0),
           width=st.floats(min_value=0.1, max_value=2.0))
    def test_hierarchical_mean_square_formula(self, lo, width):
        hi = lo + width
        law = HierarchicalUniform(lo, hi)
        # E[u^2] for u ~ U(lo, hi)
        expect = (hi**3 - lo**3) / (3.0 * (hi - lo))
        assert law.mean_square() == pytest.approx(expect, rel=1e-12)
