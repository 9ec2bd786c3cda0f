"""Half-VAE, GMM-prior VAE and vanilla VAE: parameters, losses and training.

All three share the same decoder and loss layout::

    loss = E_q[ 1/2 ||X - decoder(Z)||^2 ] + lam * sum_i KL(q(Z_i) || prior_i)

They differ only in where the posterior q comes from. The Half-VAE stores
its posterior means ``z_mu`` (N x L) and one spread per component directly
as trainable parameters; the VAE variants compute a per-column mean and
spread with an encoder network. Expectations use reparameterized samples
``z = mean + sigma * eps`` and one noise draw feeds both terms.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .diffengine import AdamState, MlpParams, adam_step, init_mlp, mlp_backward, mlp_forward
from .distributions import GmmPrior, raw_from_spread, spread_from_raw
from .divergence import _draw, kl_gauss_std_normal, mc_kl_terms
from .errors import DomainError, NumericError, ShapeError, UnderdeterminedError

log = logging.getLogger(__name__)

Z_95 = 1.959963984540054
DEFAULT_HIDDEN = (32, 32)
INIT_SPREAD = 0.1
INIT_PRIOR_SCALE = 0.5


@dataclass
class LatentBank:
    """Directly trainable posterior: means ``z_mu`` [N x L] and raw spreads ``z_rho`` [N]."""

    z_mu: np.ndarray
    z_rho: np.ndarray

    def __post_init__(self):
        self.z_mu = np.asarray(self.z_mu, dtype=np.float64)
        self.z_rho = np.asarray(self.z_rho, dtype=np.float64)
        if self.z_mu.ndim != 2 or self.z_rho.shape != (self.z_mu.shape[0],):
            raise ShapeError(f"z_mu {self.z_mu.shape} and z_rho {self.z_rho.shape} disagree")

    @property
    def sigma(self):
        return spread_from_raw(self.z_rho)

    @property
    def n(self):
        return self.z_mu.shape[0]

    @property
    def length(self):
        return self.z_mu.shape[1]


@dataclass
class HalfVaeModel:
    bank: LatentBank
    decoder: MlpParams
    priors: GmmPrior
    lam: float = 1.0

    kind = "half_vae"

    def __post_init__(self):
        n = self.bank.n
        if self.decoder.in_dim != n:
            raise ShapeError(f"decoder takes {self.decoder.in_dim} inputs, bank has {n} rows")
        if self.priors.raw_weights.shape[:-1] != (n,):
            raise ShapeError(f"need {n} priors, got {self.priors.raw_weights.shape[:-1]}")
        if self.lam < 0:
            raise DomainError("lambda must be non-negative")

    @property
    def n(self):
        return self.bank.n

    @property
    def m(self):
        return self.decoder.out_dim

    def param_arrays(self) -> dict:
        out = {"z_mu": self.bank.z_mu, "z_rho": self.bank.z_rho}
        out.update(self.decoder.arrays("decoder."))
        out.update(_prior_arrays(self.priors))
        return out


@dataclass
class VaeModel:
    """Encoder/decoder VAE. ``priors=None`` selects the standard-normal (vanilla) prior."""

    encoder: MlpParams
    decoder: MlpParams
    priors: GmmPrior | None = None
    lam: float = 1.0

    def __post_init__(self):
        n = self.decoder.in_dim
        if self.encoder.out_dim != 2 * n:
            raise ShapeError(f"encoder must emit 2N={2 * n} rows, emits {self.encoder.out_dim}")
        if self.encoder.in_dim != self.decoder.out_dim:
            raise ShapeError("encoder input dim must equal decoder output dim")
        if self.priors is not None and self.priors.raw_weights.shape[:-1] != (n,):
            raise ShapeError(f"need {n} priors, got {self.priors.raw_weights.shape[:-1]}")
        if self.lam < 0:
            raise DomainError("lambda must be non-negative")

    @property
    def kind(self):
        return "vanilla_vae" if self.priors is None else "vae_gmm"

    @property
    def n(self):
        return self.decoder.in_dim

    @property
    def m(self):
        return self.decoder.out_dim

    def param_arrays(self) -> dict:
        out = dict(self.encoder.arrays("encoder."))
        out.update(self.decoder.arrays("decoder."))
        if self.priors is not None:
            out.update(_prior_arrays(self.priors))
        return out


def _prior_arrays(priors):
    return {
        "prior.raw_weights": priors.raw_weights,
        "prior.raw_means": priors.raw_means,
        "prior.raw_log_scales": priors.raw_log_scales,
    }


@dataclass
class PosteriorSummary:
    means: np.ndarray
    lower95: np.ndarray
    upper95: np.ndarray


@dataclass
class LossResult:
    loss: float
    reconstruction: float
    kl: float
    kl_per_component: np.ndarray
    grads: dict = field(repr=False)


# -- construction -----------------------------------------------------------


def _streams(seed, count):
    return [np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(seed).spawn(count)]


def _init_priors(n, k):
    means = np.zeros(k) if k == 1 else np.linspace(-1.0, 1.0, k)
    return GmmPrior(
        np.zeros((n, k)),
        np.tile(means, (n, 1)),
        np.full((n, k), np.log(INIT_PRIOR_SCALE)),
    )


def _check_dims(n, m, l, k):
    if n < 1 or l < 1 or k < 1:
        raise DomainError("n, l and k must all be at least 1")
    if m < n:
        raise UnderdeterminedError(m, n)


def init_half_vae(n, m, l, k, seed, hidden=DEFAULT_HIDDEN, activation="tanh", lam=1.0) -> HalfVaeModel:
    """Seeded Half-VAE with an ``n -> hidden -> m`` decoder and ``n`` K-component priors."""
    _check_dims(n, m, l, k)
    dec_rng, bank_rng = _streams(seed, 2)
    decoder = init_mlp((n, *hidden, m), dec_rng, activation)
    bank = LatentBank(
        bank_rng.normal(0.0, INIT_SPREAD, size=(n, l)),
        np.full(n, raw_from_spread(INIT_SPREAD)),
    )
    return HalfVaeModel(bank, decoder, _init_priors(n, k), lam)


def init_vae(
    n, m, k, seed, prior="gmm", hidden=DEFAULT_HIDDEN, activation="tanh", lam=1.0, encoder_hidden=None
) -> VaeModel:
    """Seeded VAE; ``prior`` is ``"gmm"`` or ``"standard_normal"`` (vanilla).

    ``hidden`` sets the decoder widths; the encoder uses ``encoder_hidden``
    and falls back to ``hidden`` when that is None.
    """
    _check_dims(n, m, 1, k)
    if prior not in ("gmm", "standard_normal"):
        raise ValueError(f"unknown prior {prior!r}")
    dec_rng, enc_rng = _streams(seed, 2)
    decoder = init_mlp((n, *hidden, m), dec_rng, activation)
    enc_widths = hidden if encoder_hidden is None else encoder_hidden
    encoder = init_mlp((m, *enc_widths, 2 * n), enc_rng, activation)
    # start the encoder spread where the Half-VAE bank starts
    encoder.layers[-1][1][n:] = raw_from_spread(INIT_SPREAD)
    priors = _init_priors(n, k) if prior == "gmm" else None
    return VaeModel(encoder, decoder, priors, lam)


def param_count(model) -> int:
    return sum(a.size for a in model.param_arrays().values())


def _selected(model, names):
    arrays = model.param_arrays()
    if names is None:
        return arrays
    unknown = set(names) - set(arrays)
    if unknown:
        raise KeyError(f"unknown parameter groups: {sorted(unknown)}")
    return {k: v for k, v in arrays.items() if k in names}


def flatten_params(model, names=None) -> np.ndarray:
    return np.concatenate([a.ravel() for a in _selected(model, names).values()])


def flatten_grads(model, grads: dict, names=None) -> np.ndarray:
    return np.concatenate([np.asarray(grads[k]).ravel() for k in _selected(model, names)])


def set_flat_params(model, flat, names=None) -> None:
    """Write a flat vector (ordered as :func:`flatten_params`) back into the model in place."""
    flat = np.asarray(flat, dtype=np.float64)
    arrays = _selected(model, names).values()
    total = sum(a.size for a in arrays)
    if flat.shape != (total,):
        raise ShapeError(f"flat vector has shape {flat.shape}, model has {total} entries")
    offset = 0
    for arr in arrays:
        arr[...] = flat[offset:offset + arr.size].reshape(arr.shape)
        offset += arr.size


# -- losses -------------------------------------------------------------------


def _decode(decoder, z, x):
    """Reconstruction term over S samples and its gradient w.r.t. z [S x N x L]."""
    s, n, l = z.shape
    cols = z.transpose(1, 0, 2).reshape(n, s * l)
    x_hat, cache = mlp_forward(decoder, cols)
    m = x_hat.shape[0]
    resid = (x_hat.reshape(m, s, l) - x[:, None, :]).reshape(m, s * l)
    recon = 0.5 * float(np.sum(resid * resid)) / s
    dec_grads, d_cols = mlp_backward(decoder, cache, resid / s)
    d_z = d_cols.reshape(n, s, l).transpose(1, 0, 2)
    return recon, dec_grads, d_z


def _mlp_grad_dict(prefix, grads):
    out = {}
    for i, (dw, db) in enumerate(grads):
        out[f"{prefix}W{i}"] = dw
        out[f"{prefix}b{i}"] = db
    return out


def _check_x(model, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != model.m:
        raise ShapeError(f"observations {x.shape} do not have {model.m} rows")
    return x


def _finish(recon, kl_per_component, lam, grads):
    kl = float(np.sum(kl_per_component))
    for name, value in (("reconstruction", recon), ("kl", kl)):
        if not np.isfinite(value):
            raise NumericError(f"non-finite {name} term in loss")
    return LossResult(recon + lam * kl, recon, kl, kl_per_component, grads)


def sample_latents(bank: LatentBank, eps):
    """Reparameterized draws [S x N x L]; every entry of row i uses the same sigma_i."""
    return bank.z_mu + bank.sigma[:, None] * eps


def half_vae_loss(model: HalfVaeModel, x, samples=8, noise=None, lam=None) -> LossResult:
    """Sampled Half-VAE loss and exact gradients of that sampled objective.

    ``noise`` is a Generator or a frozen ``[samples, N, L]`` standard-normal
    array; ``lam`` overrides ``model.lam`` (used for warm-up).
    """
    x = _check_x(model, x)
    lam = model.lam if lam is None else lam
    bank = model.bank
    if x.shape[1] != bank.length:
        raise ShapeError(f"observations have {x.shape[1]} columns, bank has {bank.length}")
    if noise is None:
        noise = np.random.default_rng()
    eps = _draw(noise, (samples, bank.n, bank.length))
    sigma = bank.sigma[:, None]
    z = sample_latents(bank, eps)

    recon, dec_grads, d_z = _decode(model.decoder, z, x)
    kl, _, kl_dmu, kl_dsigma, kl_dprior = mc_kl_terms(
        bank.z_mu, sigma, eps, model.priors.reshape(bank.n, 1, -1)
    )
    d_mu = d_z.sum(axis=0) + lam * kl_dmu
    d_sigma = (d_z * eps).sum(axis=(0, 2)) + lam * kl_dsigma.sum(axis=1)
    grads = {"z_mu": d_mu, "z_rho": d_sigma * expit(bank.z_rho)}
    grads.update(_mlp_grad_dict("decoder.", dec_grads))
    for name, g in zip(("raw_weights", "raw_means", "raw_log_scales"), kl_dprior):
        grads[f"prior.{name}"] = lam * g.sum(axis=1)
    return _finish(recon, kl.sum(axis=1), lam, grads)


def encode(model: VaeModel, x):
    """Posterior mean and spread [N x L] for each observation column."""
    x = _check_x(model, x)
    h, _ = mlp_forward(model.encoder, x)
    return h[: model.n], spread_from_raw(h[model.n:])


def vae_loss(model: VaeModel, x, samples=8, noise=None, lam=None) -> LossResult:
    """Sampled VAE loss; closed-form KL for the vanilla prior, Monte-Carlo KL for GMM priors."""
    x = _check_x(model, x)
    lam = model.lam if lam is None else lam
    n, l = model.n, x.shape[1]
    if noise is None:
        noise = np.random.default_rng()
    eps = _draw(noise, (samples, n, l))
    h, enc_cache = mlp_forward(model.encoder, x)
    mu, rho = h[:n], h[n:]
    sigma = spread_from_raw(rho)
    z = mu + sigma * eps

    recon, dec_grads, d_z = _decode(model.decoder, z, x)
    d_mu = d_z.sum(axis=0)
    d_sigma = (d_z * eps).sum(axis=0)
    grads = {}
    if model.priors is None:
        kl = kl_gauss_std_normal(mu, sigma * sigma)
        d_mu = d_mu + lam * mu
        d_sigma = d_sigma + lam * (sigma - 1.0 / sigma)
    else:
        kl, _, kl_dmu, kl_dsigma, kl_dprior = mc_kl_terms(mu, sigma, eps, model.priors.reshape(n, 1, -1))
        d_mu = d_mu + lam * kl_dmu
        d_sigma = d_sigma + lam * kl_dsigma
        for name, g in zip(("raw_weights", "raw_means", "raw_log_scales"), kl_dprior):
            grads[f"prior.{name}"] = lam * g.sum(axis=1)
    d_h = np.vstack([d_mu, d_sigma * expit(rho)])
    enc_grads, _ = mlp_backward(model.encoder, enc_cache, d_h)
    grads.update(_mlp_grad_dict("encoder.", enc_grads))
    grads.update(_mlp_grad_dict("decoder.", dec_grads))
    return _finish(recon, kl.sum(axis=1), lam, grads)


def model_loss(model, x, samples=8, noise=None, lam=None) -> LossResult:
    if isinstance(model, HalfVaeModel):
        return half_vae_loss(model, x, samples, noise, lam)
    return vae_loss(model, x, samples, noise, lam)


def objective(model, x, noise, names=None, lam=None):
    """Flat-vector view of the frozen-noise loss over the parameter groups ``names``.

    Returns ``f(flat) -> (loss, gradient)``; evaluating ``f`` overwrites the
    selected parameters of ``model``.
    """
    noise = np.asarray(noise, dtype=np.float64)

    def f(flat):
        set_flat_params(model, flat, names)
        res = model_loss(model, x, noise.shape[0], noise, lam)
        return res.loss, flatten_grads(model, res.grads, names)

    return f


def posterior_means(model, x=None):
    """Estimated components [N x L]: the bank for a Half-VAE, encoder means otherwise."""
    if isinstance(model, HalfVaeModel):
        return model.bank.z_mu.copy()
    if x is None:
        raise ValueError("a VAE needs the observations to produce posterior means")
    return encode(model, x)[0]


def posterior_summary(bank: LatentBank) -> PosteriorSummary:
    """Means with a 95% band of +-1.96 sigma_i per row."""
    half = Z_95 * bank.sigma[:, None]
    mu = bank.z_mu.copy()
    return PosteriorSummary(mu, mu - half, mu + half)


# -- training -----------------------------------------------------------------


@dataclass
class TrainHistory:
    loss: list = field(default_factory=list)
    reconstruction: list = field(default_factory=list)
    kl: list = field(default_factory=list)
    snapshots: dict = field(default_factory=dict)


def train(
    model,
    x,
    epochs,
    learning_rate=1e-2,
    samples=8,
    rng=None,
    warmup_fraction=0.0,
    snapshot_every=None,
    callback=None,
    trainable=None,
) -> TrainHistory:
    """Full-batch Adam on the parameters of ``model`` (updated in place).

    ``trainable`` restricts the update to a subset of the parameter-group
    names from ``model.param_arrays()``; by default everything trains.
    ``lam`` ramps linearly from 0 to ``model.lam`` over the first
    ``warmup_fraction * epochs`` epochs. With ``snapshot_every`` set, the
    posterior means are recorded every that many epochs (and after the last).
    """
    if epochs < 1:
        raise DomainError("epochs must be at least 1")
    rng = np.random.default_rng() if rng is None else rng
    x = np.asarray(x, dtype=np.float64)
    flat = flatten_params(model, trainable)
    state = AdamState.zeros(flat.size, learning_rate=learning_rate)
    warmup = int(round(warmup_fraction * epochs))
    history = TrainHistory()
    for epoch in range(epochs):
        lam = model.lam * min(1.0, (epoch + 1) / warmup) if warmup else model.lam
        try:
            res = model_loss(model, x, samples, rng, lam)
        except NumericError as exc:
            raise NumericError(f"epoch {epoch}: {exc}") from exc
        history.loss.append(res.loss)
        history.reconstruction.append(res.reconstruction)
        history.kl.append(res.kl)
        flat, state = adam_step(state, flat, flatten_grads(model, res.grads, trainable))
        set_flat_params(model, flat, trainable)
        done = epoch + 1
        if snapshot_every and (done % snapshot_every == 0 or done == epochs):
            history.snapshots[done] = posterior_means(model, x)
        if callback is not None:
            callback(epoch, res)
    log.debug("trained %s for %d epochs, final loss %.6g", model.kind, epochs, history.loss[-1])
    return history
