"""Few-shot fine-grained classification with low-rank pairwise bilinear pooling."""

from ._core import (
    ConfigError,
    EpisodeError,
    FormatError,
    IncompatibleError,
    Model,
    NumericError,
    ShapeError,
    bilinear_parameter_count,
    concat_baseline,
    gradcheck,
    load_dataset,
    lowrank_factorized,
    lowrank_full,
    pairwise_outer,
    save_dataset,
    self_bilinear,
    summarize,
    synthetic,
    train,
)

__all__ = [
    "ConfigError",
    "EpisodeError",
    "FormatError",
    "IncompatibleError",
    "Model",
    "NumericError",
    "ShapeError",
    "bilinear_parameter_count",
    "concat_baseline",
    "gradcheck",
    "load_dataset",
    "lowrank_factorized",
    "lowrank_full",
    "pairwise_outer",
    "save_dataset",
    "self_bilinear",
    "summarize",
    "synthetic",
    "train",
]
