import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from halfvae.diffengine import grad_check
from halfvae.distributions import (
    DiagGaussian1D,
    GmmPrior,
    gaussian_logpdf,
    gmm_constrain,
    gmm_logpdf,
    gmm_logpdf_grad,
    raw_from_spread,
    reparam_sample,
    spread_from_raw,
)
from halfvae.errors import DomainError, ShapeError

finite = st.floats(-20, 20, allow_nan=False)


def _phi(x):
    return math.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)


def _random_prior(rng, k):
    return GmmPrior(rng.normal(size=k), rng.normal(scale=2.0, size=k), rng.uniform(-1.0, 0.7, size=k))


class TestGaussianLogpdf:
    @pytest.mark.parametrize(
        "x, mean, var, expected",
        [(0.0, 0.0, 1.0, -0.918939), (1.0, 0.0, 1.0, -1.418939), (0.0, 0.0, 4.0, -1.612086)],
    )
    def test_values(self, x, mean, var, expected):
        assert gaussian_logpdf(x, mean, var) == pytest.approx(expected, abs=1e-6)

    @pytest.mark.parametrize("var", [0.0, -1.0])
    def test_bad_variance(self, var):
        with pytest.raises(DomainError):
            gaussian_logpdf(0.0, 0.0, var)


class TestReparamSample:
    def test_zero_noise(self):
        assert reparam_sample(1.7, 3.0, 0.0) == 1.7

    def test_analytic(self):
        assert reparam_sample(0.0, 4.0, 1.0) == 2.0

    def test_monte_carlo_mean(self):
        noise = np.random.default_rng(3).standard_normal(100_000)
        s = reparam_sample(0.8, 2.5, noise)
        se = s.std() / math.sqrt(s.size)
        assert abs(s.mean() - 0.8) <= 4 * se

    def test_bad_variance(self):
        with pytest.raises(DomainError):
            reparam_sample(0.0, 0.0, 1.0)

    def test_diag_gaussian_rejects_nonpositive(self):
        with pytest.raises(DomainError):
            DiagGaussian1D(0.0, -2.0)


class TestGmmConstrain:
    def test_uniform_weights(self):
        w, _, _ = gmm_constrain(GmmPrior(np.zeros(3), np.zeros(3), np.zeros(3)))
        np.testing.assert_allclose(w, [1 / 3] * 3)

    def test_unit_variances(self):
        _, _, v = gmm_constrain(GmmPrior(np.zeros(4), np.arange(4.0), np.zeros(4)))
        np.testing.assert_array_equal(v, 1.0)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-30, 30), min_size=1, max_size=8))
    def test_simplex(self, logits):
        k = len(logits)
        w, _, v = gmm_constrain(GmmPrior(logits, np.zeros(k), np.zeros(k)))
        assert abs(w.sum() - 1.0) <= 1e-12
        assert np.all(w > 0) and np.all(v > 0)

    def test_mismatched_shapes(self):
        with pytest.raises(ShapeError):
            GmmPrior(np.zeros(2), np.zeros(3), np.zeros(2))


class TestGmmLogpdf:
    def test_single_component(self):
        assert gmm_logpdf(0.0, GmmPrior.standard_normal()) == pytest.approx(-0.918939, abs=1e-6)

    def test_symmetric_pair_at_zero(self):
        prior = GmmPrior(np.zeros(2), np.array([-1.0, 1.0]), np.zeros(2))
        assert gmm_logpdf(0.0, prior) == pytest.approx(-1.418939, abs=1e-6)

    def test_symmetric_pair_at_one(self):
        prior = GmmPrior(np.zeros(2), np.array([-1.0, 1.0]), np.zeros(2))
        expected = math.log(0.5 * _phi(0.0) + 0.5 * _phi(2.0))
        assert gmm_logpdf(1.0, prior) == pytest.approx(expected, abs=1e-12)
        assert expected == pytest.approx(-1.485158, abs=1e-6)

    def test_far_tail_does_not_underflow(self):
        prior = GmmPrior(np.zeros(2), np.array([0.0, 1.0]), np.log([0.1, 0.1]))
        x = 1.0 + 30 * 0.1 * 10
        val = gmm_logpdf(x, prior)
        expected = math.log(0.5) + gaussian_logpdf(x, 1.0, 0.01)
        assert np.isfinite(val)
        assert val == pytest.approx(expected, rel=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(finite, st.floats(-5, 5), st.floats(-2, 2))
    def test_k1_matches_gaussian(self, x, mean, log_scale):
        prior = GmmPrior([0.3], [mean], [log_scale])
        assert gmm_logpdf(x, prior) == pytest.approx(
            gaussian_logpdf(x, mean, math.exp(2 * log_scale)), rel=1e-12, abs=1e-12
        )

    @pytest.mark.parametrize("seed", range(5))
    def test_integrates_to_one(self, seed):
        rng = np.random.default_rng(seed)
        prior = _random_prior(rng, int(rng.integers(1, 5)))
        scale = np.exp(prior.raw_log_scales).max()
        grid = np.linspace(prior.raw_means.min() - 12 * scale, prior.raw_means.max() + 12 * scale, 200_001)
        mass = np.trapezoid(np.exp(gmm_logpdf(grid, prior)), grid)
        assert abs(mass - 1.0) <= 1e-6

    def test_broadcasts_over_priors(self, rng):
        priors = GmmPrior(rng.normal(size=(3, 2)), rng.normal(size=(3, 2)), rng.normal(size=(3, 2)) * 0.3)
        x = rng.normal(size=(3, 5))
        batched = gmm_logpdf(x, priors.reshape(3, 1, 2))
        for i in range(3):
            np.testing.assert_allclose(batched[i], gmm_logpdf(x[i], priors[i]), rtol=1e-14)


class TestGmmGradients:
    @pytest.mark.parametrize("seed", range(4))
    def test_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        k = 3
        x = rng.normal(size=4)
        p0 = np.concatenate([rng.normal(size=k), rng.normal(size=k), rng.uniform(-0.5, 0.5, size=k)])

        def f(flat):
            prior = GmmPrior(flat[:k], flat[k:2 * k], flat[2 * k:])
            logp, _, dw, dm, ds = gmm_logpdf_grad(x, prior)
            return logp.sum(), np.concatenate([dw.sum(0), dm.sum(0), ds.sum(0)])

        assert grad_check(f, p0) <= 1e-4

    def test_x_derivative(self, rng):
        prior = _random_prior(rng, 3)

        def f(x):
            logp, dx, *_ = gmm_logpdf_grad(x, prior)
            return logp.sum(), dx

        assert grad_check(f, rng.normal(size=6)) <= 1e-4


class TestSpreadTransform:
    @settings(max_examples=50, deadline=None)
    @given(st.floats(1e-3, 50))
    def test_roundtrip(self, sigma):
        assert spread_from_raw(raw_from_spread(sigma)) == pytest.approx(sigma, rel=1e-9)

    def test_floor(self):
        assert spread_from_raw(-800.0) == pytest.approx(1e-6)
