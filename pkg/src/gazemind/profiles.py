"""User trait vectors, k-means profile model and personal baselines."""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ._constants import CALIBRATION_TASK, DEFAULT_SEED, FEATURES
from ._io import read_jsonl, write_jsonl
from .gaze.features import FeatureSeries, SampleSummary

logger = logging.getLogger(__name__)

TRAIT_NAMES = ("blink_intensity", "pupil_sensitivity", "pupil_baseline", "gaze_instability")
MIN_TRAIT_SECONDS = 30
PROFILE_NAMES = ("High-Reactor", "Low-Reactor", "Restless")
_BLINK = FEATURES.index("blink_count")
_PUPIL = FEATURES.index("avg_pupil_size")


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class TraitVector:
    blink_intensity: float
    pupil_sensitivity: float
    pupil_baseline: float
    gaze_instability: float

    def as_array(self) -> np.ndarray:
        return np.array([self.blink_intensity, self.pupil_sensitivity, self.pupil_baseline, self.gaze_instability])

    @classmethod
    def from_array(cls, a) -> "TraitVector":
        return cls(*(float(v) for v in a))


def compute_user_traits(series, recordings=None) -> TraitVector:
    """Aggregate one user's seconds and valid samples into a trait vector.

    blink_intensity is the mean blink count per second; pupil sensitivity and
    baseline are the std and mean of valid pupil samples; gaze instability is
    sqrt(var(yaw) + var(pitch)) over valid samples. Sample moments come from
    ``recordings`` when given, otherwise from each series' summary.
    """
    series = [series] if isinstance(series, FeatureSeries) else list(series)
    n_sec = sum(len(s) for s in series)
    if n_sec < MIN_TRAIT_SECONDS:
        raise InsufficientDataError(f"need at least {MIN_TRAIT_SECONDS} seconds of data, got {n_sec}")
    if recordings is not None:
        summaries = [SampleSummary.of(r) for r in recordings]
    else:
        summaries = [s.summary for s in series]
        if any(s is None for s in summaries):
            raise ValueError("feature series lack sample summaries; pass the recordings")
    total = summaries[0]
    for s in summaries[1:]:
        total = total.merge(s)
    if total.pupil.n == 0:
        raise InsufficientDataError("no valid samples")
    blinks = np.concatenate([s.values[:, _BLINK] for s in series])
    return TraitVector(
        blink_intensity=float(blinks.mean()),
        pupil_sensitivity=math.sqrt(total.pupil.var),
        pupil_baseline=total.pupil.mean,
        gaze_instability=math.sqrt(total.yaw.var + total.pitch.var),
    )


def kmeans_plus_plus(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centers = [X[rng.integers(n)]]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers.append(X[idx])
        d2 = np.minimum(d2, ((X - X[idx]) ** 2).sum(axis=1))
    return np.array(centers, dtype=float)


def _assign(X, centroids):
    d2 = ((X[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    labels = d2.argmin(axis=1)
    return labels, float(d2[np.arange(X.shape[0]), labels].sum())


@dataclass
class KMeansResult:
    centroids: np.ndarray
    labels: np.ndarray
    inertia: float
    n_iter: int
    inertia_history: list = field(default_factory=list)


def kmeans(X, k: int, seed: int = DEFAULT_SEED, max_iter: int = 100, tol: float = 1e-6) -> KMeansResult:
    """Lloyd iterations from a k-means++ start.

    Stops when no centroid moves more than ``tol`` or after ``max_iter``
    updates. A cluster that loses all points keeps its previous centroid.
    """
    X = np.asarray(X, dtype=float)
    if not 1 <= k <= X.shape[0]:
        raise ValueError(f"k={k} invalid for {X.shape[0]} points")
    rng = np.random.default_rng(seed)
    centroids = kmeans_plus_plus(X, k, rng)
    labels, inertia = _assign(X, centroids)
    history = [inertia]
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        new = centroids.copy()
        for j in range(k):
            members = X[labels == j]
            if members.shape[0]:
                new[j] = members.mean(axis=0)
        shift = float(np.sqrt(((new - centroids) ** 2).sum(axis=1)).max())
        centroids = new
        labels, inertia = _assign(X, centroids)
        history.append(inertia)
        if shift <= tol:
            break
    return KMeansResult(centroids, labels, inertia, n_iter, history)


def silhouette(X, labels) -> float:
    """Mean silhouette coefficient (Euclidean); singleton clusters score 0."""
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels)
    uniq = np.unique(labels)
    if uniq.shape[0] < 2:
        raise ValueError("silhouette needs at least two clusters")
    D = np.sqrt(((X[:, None, :] - X[None, :, :]) ** 2).sum(axis=2))
    s = np.zeros(X.shape[0])
    for i in range(X.shape[0]):
        own = labels == labels[i]
        n_own = own.sum()
        if n_own <= 1:
            continue
        a = D[i, own].sum() / (n_own - 1)
        b = min(D[i, labels == c].mean() for c in uniq if c != labels[i])
        denom = max(a, b)
        s[i] = (b - a) / denom if denom > 0 else 0.0
    return float(s.mean())


def name_clusters(centroids_raw: np.ndarray) -> list[str]:
    """Restless = highest blink intensity; of the rest the larger pupil
    baseline is High-Reactor and the other Low-Reactor. Only for k = 3."""
    k = centroids_raw.shape[0]
    if k != 3:
        return [f"Cluster-{i}" for i in range(k)]
    names = [""] * 3
    restless = int(np.argmax(centroids_raw[:, 0]))
    names[restless] = "Restless"
    rest = [i for i in range(3) if i != restless]
    hi, lo = sorted(rest, key=lambda i: (-centroids_raw[i, 2], i))
    names[hi] = "High-Reactor"
    names[lo] = "Low-Reactor"
    return names


@dataclass(frozen=True)
class ProfileModel:
    k: int
    mean: np.ndarray
    std: np.ndarray
    active: np.ndarray
    centroids: np.ndarray
    names: tuple[str, ...]
    seed: int
    silhouettes: dict = field(default_factory=dict)

    def standardize(self, traits) -> np.ndarray:
        T = np.atleast_2d(np.asarray(traits, dtype=float))
        Z = (T - self.mean) / self.std
        Z[:, ~self.active] = 0.0
        return Z

    def destandardize(self, Z) -> np.ndarray:
        return np.asarray(Z, dtype=float) * self.std + self.mean

    def assign_index(self, traits) -> np.ndarray:
        Z = self.standardize(traits)
        d2 = ((Z[:, None, :] - self.centroids[None, :, :]) ** 2).sum(axis=2)
        return d2.argmin(axis=1)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "traits": list(TRAIT_NAMES),
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "active": self.active.tolist(),
            "centroids": self.centroids.tolist(),
            "names": list(self.names),
            "seed": self.seed,
            "silhouettes": {str(k): v for k, v in self.silhouettes.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ProfileModel":
        return cls(
            int(d["k"]),
            np.asarray(d["mean"], dtype=float),
            np.asarray(d["std"], dtype=float),
            np.asarray(d["active"], dtype=bool),
            np.asarray(d["centroids"], dtype=float),
            tuple(d["names"]),
            int(d["seed"]),
            {int(k): float(v) for k, v in d.get("silhouettes", {}).items()},
        )


def fit_profiles(traits, k_range=range(2, 7), seed: int = DEFAULT_SEED, max_iter: int = 100, tol: float = 1e-6) -> ProfileModel:
    """Standardize traits, cluster for each k and keep the best mean silhouette."""
    T = check_array(np.asarray([t.as_array() if isinstance(t, TraitVector) else t for t in traits], dtype=float))
    k_range = sorted(set(int(k) for k in k_range))
    if not k_range or k_range[0] < 1:
        raise ValueError("k_range must contain positive integers")
    if T.shape[0] < k_range[-1] + 1:
        raise InsufficientDataError(f"need at least {k_range[-1] + 1} users for k up to {k_range[-1]}, got {T.shape[0]}")
    mean = T.mean(axis=0)
    std = T.std(axis=0)
    active = std > 1e-12
    if not active.all():
        dropped = [TRAIT_NAMES[i] for i in np.flatnonzero(~active)]
        warnings.warn(f"trait(s) {', '.join(dropped)} have zero spread and are ignored for clustering", stacklevel=2)
    std = np.where(active, std, 1.0)
    Z = (T - mean) / std
    Z[:, ~active] = 0.0

    best = None
    scores = {}
    for k in k_range:
        res = kmeans(Z, k, seed=seed, max_iter=max_iter, tol=tol)
        score = silhouette(Z, res.labels) if k >= 2 and np.unique(res.labels).shape[0] >= 2 else -1.0
        scores[k] = score
        if best is None or score > best[0]:
            best = (score, k, res)
    _, k, res = best
    names = name_clusters(res.centroids * std + mean)
    return ProfileModel(k, mean, std, active, res.centroids, tuple(names), seed, scores)


def assign_profile(model: ProfileModel, traits) -> str:
    """Name of the nearest centroid in standardized space (ties: lowest index)."""
    if isinstance(traits, TraitVector):
        traits = traits.as_array()
    return model.names[int(model.assign_index(traits)[0])]


def personal_baselines(calibration, labels=None, require_task: str | None = CALIBRATION_TASK) -> dict:
    """Mean pupil size and blink count over calibration seconds.

    ``calibration`` is a FeatureSeries, a list of them, or a raw (n, 7) array.
    """
    if isinstance(calibration, FeatureSeries):
        calibration = [calibration]
    if isinstance(calibration, (list, tuple)) and calibration and isinstance(calibration[0], FeatureSeries):
        if require_task is not None:
            bad = [s.task_id for s in calibration if s.task_id != require_task]
            if bad:
                raise ValueError(f"calibration must come from the {require_task!r} task, got {bad[0]!r}")
        X = np.concatenate([s.values for s in calibration])
    else:
        X = np.asarray(calibration, dtype=float)
    if X.shape[0] == 0:
        raise InsufficientDataError("empty calibration data")
    if labels is not None and np.unique(np.asarray(labels)).shape[0] < 2:
        warnings.warn("calibration covers a single load level; baselines may be biased", stacklevel=2)
    return {"pupil_mean": float(X[:, _PUPIL].mean()), "blink_mean": float(X[:, _BLINK].mean())}


@dataclass(frozen=True)
class UserProfile:
    user_id: str
    name: str
    traits: TraitVector
    baselines: dict

    def to_dict(self) -> dict:
        return {"user": self.user_id, "profile": self.name, "traits": dict(zip(TRAIT_NAMES, self.traits.as_array().tolist())),
                "baselines": dict(self.baselines)}

    @classmethod
    def from_dict(cls, d: dict) -> "UserProfile":
        return cls(str(d["user"]), d["profile"], TraitVector(*(float(d["traits"][n]) for n in TRAIT_NAMES)),
                   {k: float(v) for k, v in d["baselines"].items()})


def save_profile_model(path, model: ProfileModel, users: dict | None = None) -> None:
    """First line: the model; following lines: per-user training assignments."""
    records = [{"kind": "model", **model.to_dict()}]
    for user, name in sorted((users or {}).items()):
        records.append({"kind": "assignment", "user": user, "profile": name})
    write_jsonl(path, records)


def load_profile_model(path) -> tuple[ProfileModel, dict]:
    model, users = None, {}
    for rec in read_jsonl(path):
        if rec.get("kind") == "model":
            model = ProfileModel.from_dict(rec)
        elif rec.get("kind") == "assignment":
            users[str(rec["user"])] = rec["profile"]
    if model is None:
        raise ValueError(f"{path}: no profile model record")
    return model, users


class UserProfiler(ClusterMixin, BaseEstimator):
    """k-means user profiling with silhouette-selected k."""

    def __init__(self, k_range=(2, 3, 4, 5, 6), seed=DEFAULT_SEED, max_iter=100, tol=1e-6):
        self.k_range = k_range
        self.seed = seed
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, y=None):
        self.model_ = fit_profiles(X, self.k_range, self.seed, self.max_iter, self.tol)
        self.labels_ = self.model_.assign_index(np.asarray([t.as_array() if isinstance(t, TraitVector) else t for t in X]))
        self.n_clusters_ = self.model_.k
        self.silhouette_scores_ = dict(self.model_.silhouettes)
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = np.asarray([t.as_array() if isinstance(t, TraitVector) else t for t in X], dtype=float)
        return np.array([self.model_.names[i] for i in self.model_.assign_index(X)])
