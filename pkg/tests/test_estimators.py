import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from halfvae.estimators import GmmVAE, HalfVAE, VanillaVAE
from halfvae.synth import default_source_specs, generate_sources, make_mixing, mix


@pytest.fixture(scope="module")
def data():
    z = generate_sources(default_source_specs(60), 3)
    return mix(make_mixing(3, 3, "linear", 3), z).T


@pytest.mark.parametrize("cls", [HalfVAE, GmmVAE, VanillaVAE])
def test_fit_transform_shapes(cls, data):
    est = cls(epochs=5, random_state=1)
    out = est.fit_transform(data)
    assert out.shape == (60, 3)
    assert len(est.history_.loss) == 5
    assert est.n_features_in_ == 3
    assert est.inverse_transform(out).shape == data.shape


@pytest.mark.parametrize("cls", [HalfVAE, GmmVAE, VanillaVAE])
def test_deterministic(cls, data):
    a = cls(epochs=4, random_state=5).fit_transform(data)
    b = cls(epochs=4, random_state=5).fit_transform(data)
    np.testing.assert_array_equal(a, b)


def test_params_roundtrip():
    est = HalfVAE(lam=0.3, n_mixture=2, decoder_hidden=(4,))
    params = est.get_params()
    assert params["lam"] == 0.3 and params["n_mixture"] == 2
    copy = clone(est).set_params(epochs=7)
    assert copy.epochs == 7 and copy.decoder_hidden == (4,)


def test_not_fitted(data):
    with pytest.raises(NotFittedError):
        HalfVAE().transform(data)
    with pytest.raises(NotFittedError):
        GmmVAE().inverse_transform(data)


def test_feature_mismatch(data):
    est = GmmVAE(epochs=2).fit(data)
    with pytest.raises(ValueError):
        est.transform(data[:, :2])


def test_rejects_non_finite(data):
    bad = data.copy()
    bad[0, 0] = np.nan
    with pytest.raises(ValueError):
        HalfVAE(epochs=2).fit(bad)


def test_half_transform_new_data_keeps_decoder(data):
    est = HalfVAE(epochs=3, random_state=0).fit(data[:40])
    decoder_before = [w.copy() for w, _ in est.model_.decoder.layers]
    out = est.transform(data[40:])
    assert out.shape == (20, 3)
    for before, (after, _) in zip(decoder_before, est.model_.decoder.layers):
        np.testing.assert_array_equal(before, after)
    np.testing.assert_array_equal(est.transform(data[:40]), est.model_.bank.z_mu.T)


def test_whitening_toggle(data):
    est = GmmVAE(epochs=1, whiten=False).fit(data)
    np.testing.assert_array_equal(est.whitener_.matrix, np.eye(3))
    est = GmmVAE(epochs=1).fit(data)
    xw = est.whitener_.transform(data.T)
    np.testing.assert_allclose(xw @ xw.T / xw.shape[1], np.eye(3), atol=1e-10)


def test_half_spread_exposed(data):
    est = HalfVAE(epochs=2).fit(data)
    np.testing.assert_allclose(est.components_sigma_, est.model_.bank.sigma)
