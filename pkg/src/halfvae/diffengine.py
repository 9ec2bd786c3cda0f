"""Small differentiable core: MLP forward/backward, Adam and a gradient checker.

Arrays are float64 numpy arrays laid out as ``[features x batch]``: every
column is one sample, so a decoder ``R^N -> R^M`` maps an ``N x L`` latent
matrix to an ``M x L`` observation matrix column by column.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError, ShapeError

ACTIVATIONS = ("tanh", "relu")


@dataclass
class MlpParams:
    """Weights and biases of a fully connected network.

    ``layers[i]`` is a ``(weight, bias)`` pair with ``weight`` of shape
    ``[out x in]`` and ``bias`` of shape ``[out]``. Hidden layers use
    ``hidden_activation``; the last layer is always the identity.
    """

    layers: list
    hidden_activation: str = "tanh"
    output_activation: str = "identity"

    def __post_init__(self):
        if not self.layers:
            raise ShapeError("an MLP needs at least one layer")
        if self.hidden_activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.hidden_activation!r}")
        if self.output_activation != "identity":
            raise ValueError("only the identity output activation is supported")
        self.layers = [
            (np.asarray(w, dtype=np.float64), np.asarray(b, dtype=np.float64))
            for w, b in self.layers
        ]
        for i, (w, b) in enumerate(self.layers):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ShapeError(f"layer {i}: weight {w.shape} and bias {b.shape} disagree")
            if i and w.shape[1] != self.layers[i - 1][0].shape[0]:
                raise ShapeError(
                    f"layer {i} expects {w.shape[1]} inputs but layer {i - 1} "
                    f"emits {self.layers[i - 1][0].shape[0]}"
                )

    @property
    def in_dim(self) -> int:
        return self.layers[0][0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.layers[-1][0].shape[0]

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in self.layers)

    def arrays(self, prefix="") -> dict:
        """Name -> array view of every parameter, in layer order."""
        out = {}
        for i, (w, b) in enumerate(self.layers):
            out[f"{prefix}W{i}"] = w
            out[f"{prefix}b{i}"] = b
        return out

    def copy(self) -> "MlpParams":
        return MlpParams(
            [(w.copy(), b.copy()) for w, b in self.layers],
            self.hidden_activation,
            self.output_activation,
        )


def init_mlp(sizes, rng, hidden_activation="tanh") -> MlpParams:
    """Xavier-uniform weights and zero biases for layer widths ``sizes``."""
    layers = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        layers.append((rng.uniform(-limit, limit, size=(fan_out, fan_in)), np.zeros(fan_out)))
    return MlpParams(layers, hidden_activation)


def _activate(kind, z):
    if kind == "tanh":
        return np.tanh(z)
    return np.maximum(z, 0.0)


def _activate_grad(kind, z, a):
    if kind == "tanh":
        return 1.0 - a * a
    return (z > 0.0).astype(z.dtype)


@dataclass
class MlpCache:
    """Per-layer inputs and pre-activations recorded by :func:`mlp_forward`."""

    inputs: list = field(default_factory=list)
    pre: list = field(default_factory=list)
    post: list = field(default_factory=list)


def mlp_forward(params: MlpParams, x):
    """Apply the network to every column of ``x`` (shape ``[in_dim x batch]``).

    Returns ``(output, cache)`` where ``output`` is ``[out_dim x batch]``.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != params.in_dim:
        raise ShapeError(f"input of shape {x.shape} does not match input dim {params.in_dim}")
    cache = MlpCache()
    a = x
    last = len(params.layers) - 1
    for i, (w, b) in enumerate(params.layers):
        cache.inputs.append(a)
        z = w @ a + b[:, None]
        a = z if i == last else _activate(params.hidden_activation, z)
        cache.pre.append(z)
        cache.post.append(a)
    return a, cache


def mlp_backward(params: MlpParams, cache: MlpCache, upstream):
    """Reverse pass for the scalar whose output gradient is ``upstream``.

    Returns ``(param_grads, input_grad)``; ``param_grads`` is a list of
    ``(dW, db)`` pairs aligned with ``params.layers``.
    """
    if len(cache.inputs) != len(params.layers):
        raise ShapeError("cache was not produced by this network")
    g = np.asarray(upstream, dtype=np.float64)
    if g.shape != cache.post[-1].shape:
        raise ShapeError(f"upstream gradient {g.shape} != output {cache.post[-1].shape}")
    grads = [None] * len(params.layers)
    last = len(params.layers) - 1
    for i in range(last, -1, -1):
        w, _ = params.layers[i]
        if i != last:
            g = g * _activate_grad(params.hidden_activation, cache.pre[i], cache.post[i])
        grads[i] = (g @ cache.inputs[i].T, g.sum(axis=1))
        g = w.T @ g
    return grads, g


@dataclass
class AdamState:
    """Moment estimates and hyper-parameters for :func:`adam_step`."""

    first_moment: np.ndarray
    second_moment: np.ndarray
    timestep: int = 0
    learning_rate: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def zeros(cls, size, **hyper) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size), 0, **hyper)


def adam_step(state: AdamState, params, grads):
    """One bias-corrected Adam update. Inputs are not modified."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != state.first_moment.shape or grads.shape != params.shape:
        raise ShapeError(
            f"params {params.shape}, grads {grads.shape} and moments "
            f"{state.first_moment.shape} must have the same length"
        )
    if not np.all(np.isfinite(grads)):
        raise NumericError("non-finite gradient passed to adam_step")
    t = state.timestep + 1
    m = state.beta1 * state.first_moment + (1.0 - state.beta1) * grads
    v = state.beta2 * state.second_moment + (1.0 - state.beta2) * grads * grads
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new_params = params - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    new_state = AdamState(m, v, t, state.learning_rate, state.beta1, state.beta2, state.epsilon)
    return new_params, new_state


def grad_check(f, point, grad=None, h=1e-5) -> float:
    """Largest relative disagreement between analytic and central-difference gradients.

    ``f`` maps a flat vector to either a scalar (then ``grad`` must be given)
    or a ``(value, gradient)`` pair. The relative error per coordinate is
    ``|a - n| / max(1e-8, |a| + |n|)``.
    """
    point = np.array(point, dtype=np.float64)

    def value(p):
        out = f(p)
        v = out[0] if isinstance(out, tuple) else out
        v = float(v)
        if not np.isfinite(v):
            raise NumericError("function under check returned a non-finite value")
        return v

    if grad is None:
        out = f(point)
        if not isinstance(out, tuple):
            raise TypeError("pass grad= or make f return (value, gradient)")
        analytic = np.asarray(out[1], dtype=np.float64).ravel()
    else:
        analytic = np.asarray(grad(point), dtype=np.float64).ravel()
    numeric = np.empty_like(analytic)
    for i in range(point.size):
        orig = point[i]
        point[i] = orig + h
        up = value(point)
        point[i] = orig - h
        down = value(point)
        point[i] = orig
        numeric[i] = (up - down) / (2.0 * h)
    denom = np.maximum(1e-8, np.abs(analytic) + np.abs(numeric))
    return float(np.max(np.abs(analytic - numeric) / denom))
