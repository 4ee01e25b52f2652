"""Population z-scoring of per-second features."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .._constants import FEATURES, N_FEATURES
from .._io import write_text
from ..validation import check_feature_matrix

DEGENERATE_STD = 1e-12


@dataclass(frozen=True)
class PopulationStats:
    mean: np.ndarray
    std: np.ndarray
    source: str = "train"
    n: int = 0

    @property
    def degenerate(self) -> np.ndarray:
        return self.std < DEGENERATE_STD

    def to_dict(self) -> dict:
        return {
            "features": list(FEATURES),
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "source": self.source,
            "n": self.n,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PopulationStats":
        if list(d.get("features", FEATURES)) != list(FEATURES):
            raise ValueError("population stats feature order does not match")
        return cls(np.asarray(d["mean"], dtype=float), np.asarray(d["std"], dtype=float), d.get("source", ""), int(d.get("n", 0)))

    def save(self, path) -> None:
        write_text(path, json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "PopulationStats":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def fit_population_stats(series, source: str = "train") -> PopulationStats:
    """Per-feature mean and population std over every training second.

    ``series`` is an iterable of (n_i, 7) arrays or objects with ``values``.
    Sums use ``math.fsum`` so the result does not depend on input order.
    """
    blocks = [np.asarray(getattr(s, "values", s), dtype=float).reshape(-1, N_FEATURES) for s in series]
    blocks = [b for b in blocks if b.shape[0]]
    if not blocks:
        raise ValueError("cannot fit population statistics on an empty training set")
    X = check_feature_matrix(np.concatenate(blocks))
    n = X.shape[0]
    mean = np.array([math.fsum(col) / n for col in X.T])
    std = np.array([math.sqrt(math.fsum((col - m) ** 2) / n) for col, m in zip(X.T, mean)])
    return PopulationStats(mean, std, source, n)


def _check_dims(X: np.ndarray, stats: PopulationStats) -> None:
    if X.shape[-1] != stats.mean.shape[0]:
        raise ValueError(f"feature dimension {X.shape[-1]} does not match stats dimension {stats.mean.shape[0]}")


def normalize(series, stats: PopulationStats) -> np.ndarray:
    """z = (f - mean) / std per feature; degenerate features map to 0."""
    X = np.asarray(getattr(series, "values", series), dtype=float)
    _check_dims(X, stats)
    safe = np.where(stats.degenerate, 1.0, stats.std)
    Z = (X - stats.mean) / safe
    Z[..., stats.degenerate] = 0.0
    return Z


def denormalize(Z, stats: PopulationStats) -> np.ndarray:
    Z = np.asarray(Z, dtype=float)
    _check_dims(Z, stats)
    return np.where(stats.degenerate, stats.mean, Z * stats.std + stats.mean)


class PopulationScaler(TransformerMixin, BaseEstimator):
    """z-score features against population statistics of the training split."""

    def __init__(self, source="train"):
        self.source = source

    def fit(self, X, y=None):
        if isinstance(X, (list, tuple)):
            self.stats_ = fit_population_stats(X, self.source)
        else:
            self.stats_ = fit_population_stats([check_feature_matrix(X)], self.source)
        self.mean_ = self.stats_.mean
        self.scale_ = self.stats_.std
        self.n_features_in_ = N_FEATURES
        return self

    def transform(self, X):
        check_is_fitted(self, "stats_")
        return normalize(X, self.stats_)

    def inverse_transform(self, X):
        check_is_fitted(self, "stats_")
        return denormalize(X, self.stats_)
