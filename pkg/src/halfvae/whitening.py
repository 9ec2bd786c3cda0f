"""ZCA whitening of observations before training.

A posterior with one independent spread per latent row can only match the
true posterior when the decoder's columns are orthogonal. Raw mixtures rarely
have that property, so training is run on centred, decorrelated, unit-variance
channels, where any orthogonal source mixture qualifies. The inverse map lets
reconstructions be reported in the original units.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError

RANK_TOL = 1e-10


@dataclass
class Whitener:
    mean: np.ndarray
    matrix: np.ndarray
    inverse: np.ndarray

    def transform(self, x):
        return self.matrix @ (np.asarray(x, dtype=np.float64) - self.mean[:, None])

    def inverse_transform(self, xw):
        return self.inverse @ np.asarray(xw, dtype=np.float64) + self.mean[:, None]

    def to_dict(self):
        return {"mean": self.mean.tolist(), "matrix": self.matrix.tolist(), "inverse": self.inverse.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(*(np.asarray(d[k], dtype=np.float64) for k in ("mean", "matrix", "inverse")))

    @classmethod
    def identity(cls, m):
        return cls(np.zeros(m), np.eye(m), np.eye(m))


def fit_whitener(x) -> Whitener:
    """Symmetric whitening for an [M x L] observation matrix.

    Directions with variance below ``RANK_TOL`` times the largest are
    projected out, which keeps tall (M > N) noiseless mixtures well defined.
    """
    x = np.asarray(x, dtype=np.float64)
    mean = x.mean(axis=1)
    centred = x - mean[:, None]
    cov = centred @ centred.T / x.shape[1]
    evals, evecs = np.linalg.eigh(cov)
    if evals[-1] <= 0:
        raise DegenerateInputError("observations have no variance to whiten")
    keep = evals > RANK_TOL * evals[-1]
    v = evecs[:, keep]
    e = evals[keep]
    return Whitener(mean, (v / np.sqrt(e)) @ v.T, (v * np.sqrt(e)) @ v.T)
