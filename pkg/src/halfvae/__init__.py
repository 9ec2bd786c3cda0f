"""Encoder-free variational autoencoders for independent component analysis."""
from .divergence import KlEstimate, kl_gauss_gmm_mc
from .errors import (
    ConfigError,
    DegenerateInputError,
    DomainError,
    HalfVaeError,
    NumericError,
    PipelineIOError,
    ShapeError,
    SizeLimitError,
    UnderdeterminedError,
)
from .estimators import GmmVAE, HalfVAE, VanillaVAE
from .evaluation import AlignmentResult, align_components, zscore
from .models import half_vae_loss, init_half_vae, init_vae, train, vae_loss

__version__ = "0.1.0"

__all__ = [
    "AlignmentResult",
    "ConfigError",
    "DegenerateInputError",
    "DomainError",
    "GmmVAE",
    "HalfVAE",
    "HalfVaeError",
    "KlEstimate",
    "NumericError",
    "PipelineIOError",
    "ShapeError",
    "SizeLimitError",
    "UnderdeterminedError",
    "VanillaVAE",
    "align_components",
    "half_vae_loss",
    "init_half_vae",
    "init_vae",
    "kl_gauss_gmm_mc",
    "train",
    "vae_loss",
    "zscore",
]
