"""Trans-dimensional random field language models trained with noise-contrastive estimation."""

from ._core import (
    ConfigError,
    Error,
    ExperimentConfig,
    NGramModel,
    NoiseDistribution,
    TokenLevel,
    TrfModel,
    Vocabulary,
    gradcheck,
    posterior_data,
    rescore,
    train_lstm,
    train_ngram,
    train_trf,
    wer,
)

__all__ = [
    "ConfigError",
    "Error",
    "ExperimentConfig",
    "NGramModel",
    "NoiseDistribution",
    "TokenLevel",
    "TrfModel",
    "Vocabulary",
    "gradcheck",
    "posterior_data",
    "rescore",
    "train_lstm",
    "train_ngram",
    "train_trf",
    "wer",
]
