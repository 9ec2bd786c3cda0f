import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from halfvae.diffengine import (
    AdamState,
    MlpParams,
    adam_step,
    grad_check,
    init_mlp,
    mlp_backward,
    mlp_forward,
)
from halfvae.errors import NumericError, ShapeError


def _flat(params):
    return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in params.layers])


def _unflat(params, flat):
    out, off = [], 0
    for w, b in params.layers:
        nw = flat[off:off + w.size].reshape(w.shape)
        off += w.size
        nb = flat[off:off + b.size]
        off += b.size
        out.append((nw, nb))
    return MlpParams(out, params.hidden_activation)


class TestMlpForward:
    def test_identity_layer(self):
        net = MlpParams([(np.eye(2), np.zeros(2))])
        out, _ = mlp_forward(net, np.array([[1.0], [2.0]]))
        np.testing.assert_array_equal(out, [[1.0], [2.0]])

    def test_zero_weights_tanh(self, rng):
        net = MlpParams([(np.zeros((4, 3)), np.zeros(4)), (np.zeros((2, 4)), np.zeros(2))], "tanh")
        out, _ = mlp_forward(net, rng.normal(size=(3, 7)))
        np.testing.assert_array_equal(out, np.zeros((2, 7)))

    def test_batch_equals_per_column(self, rng):
        net = init_mlp((3, 5, 4), rng)
        x = rng.normal(size=(3, 11))
        batched, _ = mlp_forward(net, x)
        for j in range(x.shape[1]):
            col, _ = mlp_forward(net, x[:, j:j + 1])
            # BLAS blocking may differ between a matrix and a single column by an ulp
            np.testing.assert_allclose(col[:, 0], batched[:, j], rtol=1e-13, atol=1e-15)

    def test_shape_mismatch(self, rng):
        net = init_mlp((3, 4), rng)
        with pytest.raises(ShapeError):
            mlp_forward(net, np.zeros((2, 5)))

    def test_layers_must_chain(self):
        with pytest.raises(ShapeError):
            MlpParams([(np.zeros((4, 3)), np.zeros(4)), (np.zeros((2, 5)), np.zeros(2))])


class TestMlpBackward:
    def test_zero_upstream(self, rng):
        net = init_mlp((3, 6, 2), rng)
        out, cache = mlp_forward(net, rng.normal(size=(3, 4)))
        grads, gx = mlp_backward(net, cache, np.zeros_like(out))
        for dw, db in grads:
            assert not dw.any() and not db.any()
        assert not gx.any()

    def test_identity_layer_calculus(self, rng):
        w = np.eye(3)
        net = MlpParams([(w, np.zeros(3))])
        x = rng.normal(size=(3, 1))
        g = rng.normal(size=(3, 1))
        _, cache = mlp_forward(net, x)
        grads, gx = mlp_backward(net, cache, g)
        np.testing.assert_allclose(grads[0][0], g @ x.T)
        np.testing.assert_allclose(gx, w.T @ g)

    @pytest.mark.parametrize("activation", ["tanh", "relu"])
    def test_matches_finite_differences(self, rng, activation):
        net = init_mlp((3, 5, 2), rng, activation)
        for _, b in net.layers:
            b[:] = rng.normal(size=b.shape)
        x = rng.normal(size=(3, 6))
        target = rng.normal(size=(2, 6))

        def f(flat):
            p = _unflat(net, flat)
            out, cache = mlp_forward(p, x)
            r = out - target
            grads, _ = mlp_backward(p, cache, r)
            return 0.5 * np.sum(r * r), np.concatenate([np.concatenate([dw.ravel(), db]) for dw, db in grads])

        assert grad_check(f, _flat(net)) <= 1e-4

    def test_input_gradient(self, rng):
        net = init_mlp((3, 5, 2), rng)
        target = rng.normal(size=(2, 4))

        def f(flat):
            out, cache = mlp_forward(net, flat.reshape(3, 4))
            r = out - target
            _, gx = mlp_backward(net, cache, r)
            return 0.5 * np.sum(r * r), gx.ravel()

        assert grad_check(f, rng.normal(size=12)) <= 1e-4

    def test_foreign_cache(self, rng):
        a = init_mlp((3, 4, 2), rng)
        b = init_mlp((3, 2), rng)
        out, cache = mlp_forward(b, np.zeros((3, 2)))
        with pytest.raises(ShapeError):
            mlp_backward(a, cache, out)


class TestAdam:
    def test_zero_gradient(self):
        p = np.array([0.3, -1.2])
        new, state = adam_step(AdamState.zeros(2), p, np.zeros(2))
        np.testing.assert_array_equal(new, p)
        assert state.timestep == 1

    def test_first_step_is_lr_times_sign(self):
        new, _ = adam_step(AdamState.zeros(1, learning_rate=1e-3), np.array([0.0]), np.array([1.0]))
        assert new[0] == pytest.approx(-1e-3, rel=1e-6)

    def test_quadratic_decreases(self):
        state = AdamState.zeros(1)
        p = np.array([1.0])
        losses = [0.5 * p[0] ** 2]
        for _ in range(2):
            p, state = adam_step(state, p, p.copy())
            losses.append(0.5 * p[0] ** 2)
        assert losses[0] > losses[1] > losses[2]
        assert state.timestep == 2

    def test_inputs_untouched(self):
        state = AdamState.zeros(2)
        p = np.ones(2)
        adam_step(state, p, np.ones(2))
        assert state.timestep == 0 and not state.first_moment.any()
        np.testing.assert_array_equal(p, 1.0)

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            adam_step(AdamState.zeros(2), np.zeros(3), np.zeros(3))

    def test_non_finite_gradient(self):
        with pytest.raises(NumericError):
            adam_step(AdamState.zeros(1), np.zeros(1), np.array([np.nan]))


class TestGradCheck:
    # central differences are exact on a quadratic; only roundoff remains, and
    # that swamps coordinates many orders of magnitude below the function value
    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.one_of(st.just(0.0), st.floats(1e-2, 5), st.floats(-5, -1e-2)), min_size=1, max_size=6))
    def test_exact_quadratic(self, values):
        p = np.array(values)
        assert grad_check(lambda q: (0.5 * q @ q, q.copy()), p) <= 1e-8

    def test_detects_wrong_gradient(self):
        assert grad_check(lambda q: (0.5 * q @ q, 2.0 * q), np.array([1.0, 2.0])) > 0.1

    def test_scalar_function_with_grad(self):
        assert grad_check(lambda q: np.sum(np.sin(q)), np.array([0.2, 1.1]), grad=np.cos) <= 1e-8

    def test_non_finite(self):
        with pytest.raises(NumericError), np.errstate(invalid="ignore"):
            grad_check(lambda q: (np.log(q[0]), np.array([1 / q[0]])), np.array([1e-6]), h=1e-3)
