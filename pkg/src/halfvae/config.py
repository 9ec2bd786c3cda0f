"""Experiment configuration: defaults, validation and hashing."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

from .errors import ConfigError, UnderdeterminedError
from .synth import SOURCE_KINDS, SourceSpec, default_source_specs

MODELS = ("half_vae", "vae_gmm", "vanilla_vae")
MIXING_KINDS = ("linear", "mlp_nonlinear")
ACTIVATIONS = ("tanh", "relu")
U64_MAX = 2**64 - 1


@dataclass
class ExperimentConfig:
    n: int = 3
    m: int = 3
    l: int = 500
    k: int = 3
    model: str = "half_vae"
    lam: float = 0.1
    epochs: int = 3000
    learning_rate: float = 1e-2
    train_samples: int = 8
    eval_samples: int = 1024
    seed: int | None = None
    source_specs: list | None = None
    mixing_kind: str = "linear"
    decoder_hidden: list = field(default_factory=list)
    encoder_hidden: list = field(default_factory=lambda: [32, 32])
    activation: str = "tanh"
    warmup_fraction: float = 0.0
    whiten: bool = True

    def validate(self, need_seed=True) -> "ExperimentConfig":
        for name in ("n", "m", "l", "k", "epochs", "train_samples", "eval_samples"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}", field=name)
        if self.m < self.n:
            raise UnderdeterminedError(self.m, self.n)
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {MODELS}, got {self.model!r}", field="model")
        if self.mixing_kind not in MIXING_KINDS:
            raise ConfigError(f"mixing_kind must be one of {MIXING_KINDS}", field="mixing_kind")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"activation must be one of {ACTIVATIONS}", field="activation")
        _positive_real(self.learning_rate, "learning_rate")
        if not _is_real(self.lam) or self.lam < 0:
            raise ConfigError(f"lambda must be a non-negative number, got {self.lam!r}", field="lambda")
        if not _is_real(self.warmup_fraction) or not 0 <= self.warmup_fraction <= 1:
            raise ConfigError("warmup_fraction must lie in [0, 1]", field="warmup_fraction")
        if not isinstance(self.whiten, bool):
            raise ConfigError("whiten must be true or false", field="whiten")
        for name in ("decoder_hidden", "encoder_hidden"):
            widths = getattr(self, name)
            if not isinstance(widths, (list, tuple)) or any(
                isinstance(w, bool) or not isinstance(w, int) or w < 1 for w in widths
            ):
                raise ConfigError(f"{name} must be a list of positive integers", field=name)
        if self.seed is None:
            if need_seed:
                raise ConfigError("a seed is required: set 'seed' in the config or pass --seed", field="seed")
        elif isinstance(self.seed, bool) or not isinstance(self.seed, int) or not 0 <= self.seed <= U64_MAX:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}", field="seed")
        self.specs()
        return self

    def specs(self):
        if self.source_specs is None:
            if self.n > 3:
                raise ConfigError("only 3 default sources exist; list source_specs for n > 3", field="source_specs")
            return default_source_specs(self.l)[: self.n]
        if not isinstance(self.source_specs, list) or len(self.source_specs) != self.n:
            raise ConfigError(f"source_specs must list exactly n={self.n} entries", field="source_specs")
        out = []
        for i, entry in enumerate(self.source_specs):
            if not isinstance(entry, dict) or entry.get("kind") not in SOURCE_KINDS:
                raise ConfigError(f"source_specs[{i}] needs a kind from {SOURCE_KINDS}", field="source_specs")
            try:
                out.append(SourceSpec(entry["kind"], dict(entry.get("params", {})), self.l))
            except ConfigError as exc:
                raise ConfigError(f"source_specs[{i}]: {exc}", field="source_specs") from None
        return out

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["lambda"] = d.pop("lam")
        d["decoder_hidden"] = list(d["decoder_hidden"])
        d["encoder_hidden"] = list(d["encoder_hidden"])
        return d

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config field {unknown[0]!r}", field=unknown[0])
        return cls(**d)

    def with_seed(self, seed):
        return dataclasses.replace(self, seed=seed)

    def hash(self) -> str:
        """SHA-256 of the canonical JSON form, seed included."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _is_real(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool) and x == x and abs(x) != float("inf")


def _positive_real(x, name):
    if not _is_real(x) or x <= 0:
        raise ConfigError(f"{name} must be a positive number, got {x!r}", field=name)


def load_config(path=None, seed=None, need_seed=True) -> ExperimentConfig:
    """Read a JSON config (or start from defaults); ``seed`` overrides the file."""
    data = {}
    if path is not None:
        from .io import read_json

        data = read_json(path, "config")
    cfg = ExperimentConfig.from_dict(data)
    if seed is not None:
        cfg = cfg.with_seed(seed)
    return cfg.validate(need_seed=need_seed)
