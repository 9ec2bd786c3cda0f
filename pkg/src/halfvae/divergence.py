"""KL divergences and the reconstruction term of the variational loss."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distributions import LOG_2PI, DiagGaussian1D, GmmPrior, gmm_logpdf_grad
from .errors import DomainError, ShapeError


@dataclass(frozen=True)
class KlEstimate:
    value: float
    sample_count: int
    standard_error: float = 0.0


def kl_gauss_std_normal(mean, variance):
    """Exact KL(N(mean, variance) || N(0, 1)), elementwise."""
    variance = np.asarray(variance, dtype=np.float64)
    if np.any(~(variance > 0)):
        raise DomainError("variance must be strictly positive")
    return 0.5 * (np.square(mean) + variance - 1.0 - np.log(variance))


def _kl_gauss_gauss(mean_q, var_q, mean_p, var_p):
    # closed form for arbitrary 1-D Gaussians; used as the K=1 reference
    return 0.5 * (np.log(var_p / var_q) + (var_q + (mean_q - mean_p) ** 2) / var_p - 1.0)


def _draw(noise, shape):
    if isinstance(noise, np.random.Generator):
        return noise.standard_normal(shape)
    eps = np.asarray(noise, dtype=np.float64)
    if eps.shape != shape:
        raise ShapeError(f"frozen noise has shape {eps.shape}, expected {shape}")
    return eps


def mc_kl_terms(mean, std, eps, prior: GmmPrior):
    """Monte-Carlo KL(N(mean, std^2) || GMM) per entry, with derivatives.

    ``eps`` carries the sample axis first: ``eps[s]`` broadcasts against
    ``mean`` and ``std``. ``prior`` arrays broadcast against ``mean[..., None]``.
    Each estimate is the sample mean of ``ln q(z) - ln p(z)`` with
    ``z = mean + std * eps``; all derivatives are of that sample mean.

    Returns ``(kl, per_sample, d_mean, d_std, (d_w, d_m, d_s))`` where
    ``per_sample`` keeps the sample axis, ``d_mean``/``d_std`` have the
    broadcast entry shape and the prior derivatives the broadcast entry shape
    plus a trailing K axis.
    """
    s = eps.shape[0]
    z = mean + std * eps
    log_p, dlogp_dz, d_w, d_m, d_s = gmm_logpdf_grad(z, prior)
    # ln q at its own sample only depends on the spread once z is reparameterized
    log_q = -0.5 * LOG_2PI - np.log(std) - 0.5 * eps * eps
    per_sample = log_q - log_p
    kl = per_sample.mean(axis=0)
    d_z = -dlogp_dz / s
    d_mean = d_z.sum(axis=0)
    d_std = (d_z * eps).sum(axis=0) - 1.0 / std
    d_prior = tuple(-g.sum(axis=0) / s for g in (d_w, d_m, d_s))
    return kl, per_sample, d_mean, d_std, d_prior


def kl_gauss_gmm_mc(posterior: DiagGaussian1D, prior: GmmPrior, samples: int, noise) -> KlEstimate:
    """Reparameterized Monte-Carlo estimate of KL(posterior || prior).

    ``posterior`` may hold an array of independent entries sharing ``prior``;
    the estimate is then the sum of the per-entry divergences. ``noise`` is a
    ``numpy.random.Generator`` or a frozen ``[samples, *entry_shape]`` array.
    """
    if samples < 1:
        raise DomainError("at least one Monte-Carlo sample is required")
    mean = posterior.mean
    std = np.sqrt(posterior.variance)
    eps = _draw(noise, (samples,) + np.shape(mean))
    per_sample = mc_kl_terms(mean, std, eps, prior)[1]
    totals = per_sample.reshape(samples, -1).sum(axis=1)
    se = float(totals.std(ddof=1) / np.sqrt(samples)) if samples > 1 else 0.0
    return KlEstimate(float(totals.mean()), samples, se)


def reconstruction_nll(x, x_hat):
    """Half the summed squared error: -ln p(X | Z) for unit-variance Gaussian noise, constants dropped."""
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x.shape != x_hat.shape:
        raise ShapeError(f"observation {x.shape} and reconstruction {x_hat.shape} differ")
    return 0.5 * float(np.sum((x - x_hat) ** 2))
