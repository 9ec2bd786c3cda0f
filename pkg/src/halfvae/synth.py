"""Synthetic independent sources and static mixing maps.

Randomness comes from numpy's PCG64 bit generator seeded through
``SeedSequence``; each source row and each mixing draw gets its own spawned
substream, so adding a source never perturbs the others.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .diffengine import MlpParams, init_mlp, mlp_forward
from .errors import ConfigError, ShapeError, UnderdeterminedError

SOURCE_KINDS = ("laplace", "uniform", "bimodal_gmm", "sine_plus_noise")
MAX_CONDITION = 100.0


@dataclass
class SourceSpec:
    """One source distribution. ``params`` keys depend on ``kind``:

    - laplace: ``loc``, ``scale``
    - uniform: ``low``, ``high``
    - bimodal_gmm: ``separation`` (means at +-separation), ``scale``
    - sine_plus_noise: ``frequency`` (cycles per sample), ``amplitude``, ``noise``
    """

    kind: str
    params: dict = field(default_factory=dict)
    length: int = 500

    def __post_init__(self):
        if self.kind not in SOURCE_KINDS:
            raise ConfigError(f"unknown source kind {self.kind!r}", field="kind")
        if self.length < 1:
            raise ConfigError("source length must be at least 1", field="length")
        p = self.params
        bad = (
            (self.kind == "laplace" and p.get("scale", 1.0) <= 0)
            or (self.kind == "uniform" and p.get("high", 1.0) <= p.get("low", -1.0))
            or (self.kind == "bimodal_gmm" and p.get("scale", 1.0) <= 0)
            or (self.kind == "sine_plus_noise" and p.get("noise", 0.1) < 0)
        )
        if bad:
            raise ConfigError(f"invalid parameters for {self.kind}: {p}", field="params")

    def sample(self, rng, length=None):
        n = self.length if length is None else length
        p = self.params
        if self.kind == "laplace":
            return rng.laplace(p.get("loc", 0.0), p.get("scale", 1.0), n)
        if self.kind == "uniform":
            return rng.uniform(p.get("low", -1.0), p.get("high", 1.0), n)
        if self.kind == "bimodal_gmm":
            sep = p.get("separation", 1.5)
            signs = np.where(rng.random(n) < 0.5, -1.0, 1.0)
            return signs * sep + rng.normal(0.0, p.get("scale", 0.4), n)
        t = np.arange(n)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        wave = p.get("amplitude", 1.0) * np.sin(2.0 * np.pi * p.get("frequency", 0.01) * t + phase)
        return wave + rng.normal(0.0, p.get("noise", 0.1), n)

    def to_dict(self):
        return {"kind": self.kind, "params": dict(self.params), "length": self.length}


def default_source_specs(length=500):
    return [
        SourceSpec("laplace", {"loc": 0.0, "scale": 1.0}, length),
        SourceSpec("uniform", {"low": -np.sqrt(3.0), "high": np.sqrt(3.0)}, length),
        SourceSpec("bimodal_gmm", {"separation": 1.5, "scale": 0.4}, length),
    ]


@dataclass
class MixingMap:
    kind: str
    matrix: np.ndarray | None = None
    mlp: MlpParams | None = None
    seed: int = 0

    @property
    def m(self):
        return self.matrix.shape[0] if self.kind == "linear" else self.mlp.out_dim

    @property
    def n(self):
        return self.matrix.shape[1] if self.kind == "linear" else self.mlp.in_dim

    def to_dict(self):
        out = {"kind": self.kind, "seed": self.seed}
        if self.kind == "linear":
            out["matrix"] = self.matrix.tolist()
        else:
            out["layers"] = [{"weight": w.tolist(), "bias": b.tolist()} for w, b in self.mlp.layers]
            out["hidden_activation"] = self.mlp.hidden_activation
        return out

    @classmethod
    def from_dict(cls, d):
        if d["kind"] == "linear":
            return cls("linear", matrix=np.asarray(d["matrix"], dtype=np.float64), seed=d.get("seed", 0))
        layers = [(l["weight"], l["bias"]) for l in d["layers"]]
        return cls("mlp_nonlinear", mlp=MlpParams(layers, d.get("hidden_activation", "tanh")), seed=d.get("seed", 0))


def generate_sources(specs, seed):
    """Stack one row per spec into an [N x L] matrix."""
    if not specs:
        raise ConfigError("at least one source spec is required", field="source_specs")
    lengths = {s.length for s in specs}
    if len(lengths) != 1:
        raise ConfigError(f"source specs disagree on length: {sorted(lengths)}", field="l")
    children = np.random.SeedSequence(seed).spawn(len(specs))
    return np.vstack([s.sample(np.random.Generator(np.random.PCG64(c))) for s, c in zip(specs, children)])


def make_mixing(m, n, kind="linear", seed=0, hidden=16):
    """Random static map R^n -> R^m.

    Linear maps draw entries from U(-1, 1) until the condition number is at
    most 100. The nonlinear map is a small tanh MLP and is not guaranteed
    to be invertible.
    """
    if n < 1:
        raise ConfigError("n must be at least 1", field="n")
    if m < n:
        raise UnderdeterminedError(m, n)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed).spawn(1)[0]))
    if kind == "linear":
        while True:
            a = rng.uniform(-1.0, 1.0, size=(m, n))
            if np.linalg.cond(a) <= MAX_CONDITION:
                return MixingMap("linear", matrix=a, seed=seed)
    if kind == "mlp_nonlinear":
        return MixingMap("mlp_nonlinear", mlp=init_mlp((n, hidden, m), rng), seed=seed)
    raise ConfigError(f"unknown mixing kind {kind!r}", field="mixing_kind")


def mix(mapping: MixingMap, z):
    """Observations X = f(Z), applied column by column."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] != mapping.n:
        raise ShapeError(f"sources {z.shape} do not have {mapping.n} rows")
    if mapping.kind == "linear":
        return mapping.matrix @ z
    return mlp_forward(mapping.mlp, z)[0]
