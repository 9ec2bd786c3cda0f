import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from halfvae.errors import DegenerateInputError
from halfvae.whitening import Whitener, fit_whitener


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 5))
def test_identity_covariance(seed, m):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(m, m)) @ rng.laplace(size=(m, 300)) + rng.normal(size=(m, 1))
    w = fit_whitener(x)
    xw = w.transform(x)
    np.testing.assert_allclose(xw.mean(axis=1), 0, atol=1e-10)
    np.testing.assert_allclose(xw @ xw.T / x.shape[1], np.eye(m), atol=1e-8)
    np.testing.assert_allclose(w.inverse_transform(xw), x, atol=1e-8 * np.abs(x).max())


def test_symmetric(rng):
    w = fit_whitener(rng.normal(size=(3, 3)) @ rng.normal(size=(3, 200)))
    np.testing.assert_allclose(w.matrix, w.matrix.T, atol=1e-12)


def test_tall_mixture_projects_out_null_space(rng):
    # 4 channels of a 2-source mixture: covariance has rank 2
    x = rng.normal(size=(4, 2)) @ rng.uniform(-1, 1, size=(2, 400))
    xw = fit_whitener(x).transform(x)
    evals = np.linalg.eigvalsh(xw @ xw.T / 400)
    np.testing.assert_allclose(np.sort(evals), [0, 0, 1, 1], atol=1e-6)


def test_constant_rejected():
    with pytest.raises(DegenerateInputError):
        fit_whitener(np.ones((2, 10)))


def test_dict_roundtrip(rng):
    w = fit_whitener(rng.normal(size=(3, 50)))
    back = Whitener.from_dict(w.to_dict())
    for name in ("mean", "matrix", "inverse"):
        assert getattr(back, name).tobytes() == getattr(w, name).tobytes()
    x = rng.normal(size=(2, 5))
    np.testing.assert_array_equal(Whitener.identity(2).transform(x), x)
