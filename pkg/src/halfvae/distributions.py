"""Gaussian and 1-D Gaussian-mixture densities with unconstrained parameters."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import softmax

from .errors import DomainError, ShapeError

LOG_2PI = float(np.log(2.0 * np.pi))
SPREAD_FLOOR = 1e-6


@dataclass
class DiagGaussian1D:
    mean: np.ndarray
    variance: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.variance = np.asarray(self.variance, dtype=np.float64)
        _check_variance(self.variance)


@dataclass
class GmmPrior:
    """Raw (unconstrained) parameters of one or more 1-D Gaussian mixtures.

    The trailing axis indexes the K mixture components. Leading axes, when
    present, index independent mixtures; ``prior[i]`` selects mixture ``i``.
    """

    raw_weights: np.ndarray
    raw_means: np.ndarray
    raw_log_scales: np.ndarray

    def __post_init__(self):
        self.raw_weights = np.asarray(self.raw_weights, dtype=np.float64)
        self.raw_means = np.asarray(self.raw_means, dtype=np.float64)
        self.raw_log_scales = np.asarray(self.raw_log_scales, dtype=np.float64)
        shape = self.raw_weights.shape
        if self.raw_means.shape != shape or self.raw_log_scales.shape != shape:
            raise ShapeError("GMM weight, mean and log-scale arrays must share a shape")
        if len(shape) == 0 or shape[-1] < 1:
            raise ShapeError("a GMM needs at least one component")

    @property
    def k(self) -> int:
        return self.raw_weights.shape[-1]

    def __len__(self):
        return self.raw_weights.shape[0] if self.raw_weights.ndim > 1 else 1

    def __getitem__(self, idx) -> "GmmPrior":
        return GmmPrior(self.raw_weights[idx], self.raw_means[idx], self.raw_log_scales[idx])

    def reshape(self, *shape) -> "GmmPrior":
        return GmmPrior(
            self.raw_weights.reshape(shape),
            self.raw_means.reshape(shape),
            self.raw_log_scales.reshape(shape),
        )

    @classmethod
    def standard_normal(cls) -> "GmmPrior":
        return cls(np.zeros(1), np.zeros(1), np.zeros(1))


def logsumexp(a, axis=-1, keepdims=False):
    top = np.max(a, axis=axis, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    out = np.log(np.sum(np.exp(a - top), axis=axis, keepdims=True)) + top
    return out if keepdims else np.squeeze(out, axis=axis)


def _check_variance(variance):
    if np.any(~(np.asarray(variance) > 0)):
        raise DomainError("variance must be strictly positive")


def softplus(x):
    return np.logaddexp(0.0, x)


def inverse_softplus(y):
    return y + np.log(-np.expm1(-y))


def spread_from_raw(rho):
    """Posterior standard deviation from its unconstrained parameter."""
    return softplus(rho) + SPREAD_FLOOR


def raw_from_spread(sigma):
    return inverse_softplus(np.asarray(sigma, dtype=np.float64) - SPREAD_FLOOR)


def gaussian_logpdf(x, mean, variance):
    """ln N(x | mean, variance), elementwise."""
    _check_variance(variance)
    x = np.asarray(x, dtype=np.float64)
    return -0.5 * (LOG_2PI + np.log(variance) + (x - mean) ** 2 / variance)


def reparam_sample(mean, variance, noise):
    """mean + sqrt(variance) * noise."""
    _check_variance(variance)
    return mean + np.sqrt(variance) * noise


def gmm_constrain(prior: GmmPrior):
    """Map raw parameters to (weights on the simplex, means, variances)."""
    weights = softmax(prior.raw_weights, axis=-1)
    return weights, prior.raw_means.copy(), np.exp(2.0 * prior.raw_log_scales)


def _component_terms(x, prior):
    x = np.asarray(x, dtype=np.float64)[..., None]
    log_w = prior.raw_weights - logsumexp(prior.raw_weights, axis=-1, keepdims=True)
    diff = x - prior.raw_means
    inv_var = np.exp(-2.0 * prior.raw_log_scales)
    terms = log_w - 0.5 * LOG_2PI - prior.raw_log_scales - 0.5 * diff * diff * inv_var
    return terms, log_w, diff, inv_var


def gmm_logpdf(x, prior: GmmPrior):
    """ln sum_k w_k N(x | m_k, v_k), evaluated with log-sum-exp.

    ``x`` broadcasts against the leading axes of ``prior``.
    """
    terms, *_ = _component_terms(x, prior)
    return logsumexp(terms, axis=-1)


def gmm_logpdf_grad(x, prior: GmmPrior):
    """Value and elementwise partial derivatives of :func:`gmm_logpdf`.

    Returns ``(logp, d_x, d_raw_weights, d_raw_means, d_raw_log_scales)``;
    the parameter derivatives keep the trailing K axis and the broadcast
    shape of ``x``, so callers reduce over sample axes themselves.
    """
    terms, log_w, diff, inv_var = _component_terms(x, prior)
    logp = logsumexp(terms, axis=-1)
    resp = np.exp(terms - logp[..., None])
    scaled = diff * inv_var
    d_x = -(resp * scaled).sum(axis=-1)
    d_w = resp - np.exp(log_w)
    d_m = resp * scaled
    d_s = resp * (diff * scaled - 1.0)
    return logp, d_x, d_w, d_m, d_s
