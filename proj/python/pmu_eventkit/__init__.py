"""Python surface of pmu-eventkit.

The heavy lifting lives in the compiled `_core` module: synthetic stream
generation, the SVD-ratio detector, low-rank imputation, the 57 pattern
features, and the lightweight classifiers.
"""

from ._core import (
    ContractError,
    IoError,
    Model,
    detect_events,
    feature_names,
    feature_vector,
    generate,
    impute,
    singular_ratio,
    train_classifier,
    window_features,
    xi_statistic,
)

__all__ = [
    "ContractError",
    "IoError",
    "Model",
    "detect_events",
    "feature_names",
    "feature_vector",
    "generate",
    "impute",
    "singular_ratio",
    "train_classifier",
    "window_features",
    "xi_statistic",
]

__version__ = "0.1.0"
