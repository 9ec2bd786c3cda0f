"""scikit-learn style wrappers around the three models.

Inputs follow the sklearn convention ``X[n_samples, n_features]``: rows are
time points (L) and columns are observed channels (M). The core routines work
on ``[M x L]`` matrices, so data is transposed on the way in and out.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .diffengine import mlp_forward
from .models import (
    LatentBank,
    HalfVaeModel,
    encode,
    init_half_vae,
    init_vae,
    train,
)
from .whitening import Whitener, fit_whitener

DEFAULT_LAMBDA = 0.1


class _BaseVAE(TransformerMixin, BaseEstimator):
    def __init__(
        self,
        n_components=3,
        n_mixture=3,
        lam=DEFAULT_LAMBDA,
        epochs=3000,
        learning_rate=1e-2,
        train_samples=8,
        decoder_hidden=(),
        encoder_hidden=(32, 32),
        activation="tanh",
        warmup_fraction=0.0,
        whiten=True,
        random_state=0,
    ):
        self.n_components = n_components
        self.n_mixture = n_mixture
        self.lam = lam
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.train_samples = train_samples
        self.decoder_hidden = decoder_hidden
        self.encoder_hidden = encoder_hidden
        self.activation = activation
        self.warmup_fraction = warmup_fraction
        self.whiten = whiten
        self.random_state = random_state

    def _observations(self, X, fitting):
        X = check_array(X, dtype=np.float64, ensure_min_samples=2)
        x = X.T
        if fitting:
            self.whitener_ = fit_whitener(x) if self.whiten else Whitener.identity(x.shape[0])
            self.n_features_in_ = x.shape[0]
        elif x.shape[0] != self.n_features_in_:
            raise ValueError(f"X has {x.shape[0]} features, estimator was fitted with {self.n_features_in_}")
        return self.whitener_.transform(x)

    def _seed(self):
        seed = self.random_state
        return 0 if seed is None else int(seed)

    def _build(self, x):
        raise NotImplementedError

    def fit(self, X, y=None):
        x = self._observations(X, fitting=True)
        self.model_ = self._build(x)
        self.history_ = train(
            self.model_,
            x,
            self.epochs,
            self.learning_rate,
            self.train_samples,
            np.random.default_rng([self._seed(), 1]),
            self.warmup_fraction,
        )
        self._fit_x = x
        return self

    def inverse_transform(self, Z):
        """Decode components ``Z[n_samples, n_components]`` back to observation space."""
        check_is_fitted(self, "model_")
        z = check_array(Z, dtype=np.float64).T
        xw, _ = mlp_forward(self.model_.decoder, z)
        return self.whitener_.inverse_transform(xw).T


class HalfVAE(_BaseVAE):
    """Encoder-free VAE whose posterior means and spreads are free parameters.

    Since there is no encoder, ``transform`` on new data fits a fresh latent
    bank against the frozen decoder and priors.
    """

    def _build(self, x):
        return init_half_vae(
            self.n_components, x.shape[0], x.shape[1], self.n_mixture, self._seed(),
            tuple(self.decoder_hidden), self.activation, self.lam,
        )

    def fit_transform(self, X, y=None):
        return self.fit(X).model_.bank.z_mu.T.copy()

    def transform(self, X):
        check_is_fitted(self, "model_")
        x = self._observations(X, fitting=False)
        if x.shape == self._fit_x.shape and np.array_equal(x, self._fit_x):
            return self.model_.bank.z_mu.T.copy()
        fitted = self.model_
        fresh = init_half_vae(self.n_components, x.shape[0], x.shape[1], self.n_mixture, self._seed(),
                              tuple(self.decoder_hidden), self.activation, self.lam)
        model = HalfVaeModel(LatentBank(fresh.bank.z_mu, fresh.bank.z_rho), fitted.decoder.copy(),
                             fitted.priors, fitted.lam)
        train(model, x, self.epochs, self.learning_rate, self.train_samples,
              np.random.default_rng([self._seed(), 2]), trainable=["z_mu", "z_rho"])
        return model.bank.z_mu.T.copy()

    @property
    def components_sigma_(self):
        check_is_fitted(self, "model_")
        return self.model_.bank.sigma.copy()


class GmmVAE(_BaseVAE):
    """Encoder VAE with a trainable K-component mixture prior per latent."""

    prior = "gmm"

    def _build(self, x):
        return init_vae(
            self.n_components, x.shape[0], self.n_mixture, self._seed(), self.prior,
            tuple(self.decoder_hidden), self.activation, self.lam, tuple(self.encoder_hidden),
        )

    def transform(self, X):
        check_is_fitted(self, "model_")
        return encode(self.model_, self._observations(X, fitting=False))[0].T


class VanillaVAE(GmmVAE):
    """Encoder VAE with a standard-normal prior; ``n_mixture`` is ignored."""

    prior = "standard_normal"
