"""End-to-end training and evaluation on labeled gaze sessions."""
from __future__ import annotations

import hashlib
import logging
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._constants import CALIBRATION_TASK, DEFAULT_K, DEFAULT_SEED, DEFAULT_WINDOW, EVAL_TASKS, LEVELS
from .datakit.inject import inject_label_noise, inject_missing
from .datakit.split import SplitManifest, split_users
from .eval.metrics import ConfusionMatrix, MetricReport, confusion, format_report, metrics
from .gaze.features import FeatureSeries, featurize
from .gaze.normalize import PopulationStats, fit_population_stats, normalize
from .gaze.table import FeatureTable, windows_ending
from .inference.session import SessionContext, run_session
from .llm import LLMBackend, MockBackend
from .profiles import (InsufficientDataError, ProfileModel, UserProfile, assign_profile, compute_user_traits,
                       fit_profiles, personal_baselines)
from .retrieval import LabeledWindow, RetrievalDB, build_database
from .rules import RuleStore, generate_rule, grouped_stats

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineConfig:
    window: int = DEFAULT_WINDOW
    k: int = DEFAULT_K
    min_sep: float = 0.3
    seed: int = DEFAULT_SEED
    split_ratio: float = 0.7
    use_rules: bool = True
    use_profiles: bool = True
    use_retrieval: bool = True
    metric: str = "descriptor"
    db_stride: int = 1
    k_range: tuple = (2, 3, 4, 5, 6)
    eval_tasks: tuple = EVAL_TASKS
    exclude_same_user: bool = False
    jobs: int = 1

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window T must be >= 1")
        if self.k < 0:
            raise ValueError("retrieval k must be >= 0")
        if self.db_stride < 1:
            raise ValueError("db_stride must be >= 1")


@dataclass
class Dataset:
    """Raw per-second features and per-second labels keyed by (user, task)."""

    series: dict
    labels: dict

    @property
    def users(self) -> list[str]:
        return sorted({u for u, _ in self.series})

    def keys(self, users=None, tasks=None) -> list:
        users = None if users is None else set(users)
        return sorted(k for k in self.series
                      if (users is None or k[0] in users) and (tasks is None or k[1] in tasks))


def _align(series: FeatureSeries, labels) -> tuple[FeatureSeries, list]:
    labels = [LEVELS[int(v)] if not isinstance(v, str) else v for v in labels]
    n = min(len(series), len(labels))
    if n != len(series) or n != len(labels):
        warnings.warn(f"{series.user_id}/{series.task_id}: {len(series)} feature seconds vs {len(labels)} labels; "
                      f"truncating to {n}", stacklevel=3)
        series = series.head(n)
    return series, labels[:n]


def build_dataset(recordings, labels: dict, missing_ratio: float = 0.0, missing_users=None,
                  seed: int = DEFAULT_SEED) -> Dataset:
    """Featurize recordings; optionally drop-and-refill samples of ``missing_users``."""
    missing_users = set(missing_users or ())
    series, labs = {}, {}
    for i, rec in enumerate(sorted(recordings, key=lambda r: (r.user_id, r.task_id))):
        if missing_ratio > 0 and rec.user_id in missing_users:
            rec = inject_missing(rec, missing_ratio, seed=seed + i)
        key = (rec.user_id, rec.task_id)
        if key not in labels:
            raise KeyError(f"no labels for {rec.user_id}/{rec.task_id}")
        s, y = _align(featurize(rec), labels[key])
        series[key], labs[key] = s, y
    return Dataset(series, labs)


def with_label_noise(ds: Dataset, rate: float, seed: int = DEFAULT_SEED) -> Dataset:
    """Same features, labels flipped per session with nested seeded selections."""
    if rate == 0:
        return Dataset(dict(ds.series), {k: list(v) for k, v in ds.labels.items()})
    labs = {k: inject_label_noise(ds.labels[k], rate, seed=seed + i) for i, k in enumerate(sorted(ds.labels))}
    return Dataset(dict(ds.series), labs)


@dataclass
class FittedModel:
    config: PipelineConfig
    stats: PopulationStats
    rules: RuleStore
    profile_model: ProfileModel | None
    train_profiles: dict
    db: RetrievalDB


def _user_series(ds: Dataset, user: str) -> list[FeatureSeries]:
    return [ds.series[k] for k in ds.keys(users=[user])]


def _calibration(ds: Dataset, user: str) -> list[FeatureSeries]:
    key = (user, CALIBRATION_TASK)
    return [ds.series[key]] if key in ds.series else []


def user_profile(model: ProfileModel, ds: Dataset, user: str) -> UserProfile:
    """Profile a user from the calibration session (all sessions if absent)."""
    calib = _calibration(ds, user)
    source = calib if calib and sum(len(s) for s in calib) >= 30 else _user_series(ds, user)
    traits = compute_user_traits(source)
    base = personal_baselines(source, require_task=None)
    return UserProfile(user, assign_profile(model, traits), traits, base)


def labeled_windows(Z: np.ndarray, labels, user: str, task: str, profile: str, T: int, stride: int = 1):
    W = windows_ending(Z, T)
    for i in range(0, W.shape[0], stride):
        end = i + T - 1
        yield LabeledWindow(FeatureTable(np.array(W[i]), end, user, task), labels[end], task, profile, user,
                            f"{task}/{end:06d}")


def fit_stats(ds: Dataset, users) -> PopulationStats:
    keys = ds.keys(users=users)
    if not keys:
        raise ValueError("no training sessions")
    return fit_population_stats([ds.series[k] for k in keys], source="train")


def fit_rules(ds: Dataset, users, stats: PopulationStats, tasks=EVAL_TASKS, min_sep: float = 0.3,
              backend: LLMBackend | None = None) -> RuleStore:
    rules = RuleStore()
    for task in tasks:
        keys = ds.keys(users=users, tasks=(task,))
        if not keys:
            continue
        X = np.concatenate([normalize(ds.series[k], stats) for k in keys])
        y = [lab for k in keys for lab in ds.labels[k]]
        rules[task] = generate_rule(grouped_stats(X, y, task), backend=backend, min_sep=min_sep)
    return rules


def fit_profile_model(ds: Dataset, users, k_range=(2, 3, 4, 5, 6), seed: int = DEFAULT_SEED):
    """Cluster users on traits pooled over all their sessions; returns (model, {user: UserProfile})."""
    users = sorted(set(users))
    traits = [compute_user_traits(_user_series(ds, u)) for u in users]
    model = fit_profiles(traits, k_range, seed=seed)
    names = [model.names[i] for i in model.assign_index(np.array([t.as_array() for t in traits]))]
    profiles = {}
    for u, t, name in zip(users, traits, names):
        calib = _calibration(ds, u) or _user_series(ds, u)
        profiles[u] = UserProfile(u, name, t, personal_baselines(calib, require_task=None))
    return model, profiles


def build_db(ds: Dataset, users, stats: PopulationStats, profile_names: dict, T: int = DEFAULT_WINDOW,
             stride: int = 1, tasks=EVAL_TASKS, split: SplitManifest | None = None) -> RetrievalDB:
    """Every T-second window of the users' task sessions, labelled at its last second."""
    windows = []
    for k in ds.keys(users=users, tasks=tasks):
        if len(ds.series[k]) < T:
            continue
        Z = normalize(ds.series[k], stats)
        windows.extend(labeled_windows(Z, ds.labels[k], k[0], k[1], profile_names[k[0]], T, stride))
    return build_database(windows, split=split)


def fit(ds: Dataset, train_users, cfg: PipelineConfig = PipelineConfig(), rule_backend: LLMBackend | None = None,
        split: SplitManifest | None = None) -> FittedModel:
    train_users = sorted(set(train_users))
    stats = fit_stats(ds, train_users)
    rules = fit_rules(ds, train_users, stats, cfg.eval_tasks, cfg.min_sep, rule_backend)
    model, train_profiles = fit_profile_model(ds, train_users, cfg.k_range, cfg.seed)
    names = {u: p.name for u, p in train_profiles.items()}
    db = build_db(ds, train_users, stats, names, cfg.window, cfg.db_stride, cfg.eval_tasks, split)
    return FittedModel(cfg, stats, rules, model, train_profiles, db)


def predict(fm: FittedModel, ds: Dataset, users, backend: LLMBackend | None = None,
            cfg: PipelineConfig | None = None) -> dict:
    """Run the session loop for every evaluation session of ``users``."""
    cfg = cfg or fm.config
    backend = backend or MockBackend()
    keys = ds.keys(users=users, tasks=cfg.eval_tasks)
    profiles = {}
    if cfg.use_profiles:
        for u in sorted({k[0] for k in keys}):
            try:
                profiles[u] = user_profile(fm.profile_model, ds, u)
            except InsufficientDataError as exc:
                warnings.warn(f"user {u}: {exc}; using the population baseline", stacklevel=2)

    def one(key):
        user, task = key
        ctx = SessionContext(
            backend=backend,
            task_id=task,
            rule=fm.rules.get(task) if cfg.use_rules else None,
            profile=profiles.get(user),
            db=fm.db if cfg.use_retrieval and cfg.k > 0 else None,
            stats=fm.stats,
            user_id=user,
            k=cfg.k,
            metric=cfg.metric,
            exclude_same_user=cfg.exclude_same_user,
        )
        return run_session(normalize(ds.series[key], fm.stats), ctx, cfg.window)

    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(one, keys))
    else:
        results = [one(k) for k in keys]
    return dict(zip(keys, results))


def evaluate(predictions: dict, ds: Dataset) -> tuple[ConfusionMatrix, MetricReport]:
    preds, truth = [], []
    for key in sorted(predictions):
        res = predictions[key]
        preds.extend(res.labels)
        truth.extend(ds.labels[key][: len(res.labels)])
    cm = confusion(preds, truth)
    return cm, metrics(cm)


@dataclass
class ExperimentResult:
    config: PipelineConfig
    split: SplitManifest
    model: FittedModel
    predictions: dict
    confusion: ConfusionMatrix
    report: MetricReport
    seconds: float
    n_calls: int = 0
    mean_latency: float = 0.0

    def summary(self) -> str:
        return format_report(self.report, self.confusion, title="evaluation")

    def digest(self) -> str:
        return hashlib.sha256(self.summary().encode()).hexdigest()[:16]


def run_experiment(ds: Dataset, cfg: PipelineConfig = PipelineConfig(), backend: LLMBackend | None = None,
                   split: SplitManifest | None = None, rule_backend: LLMBackend | None = None) -> ExperimentResult:
    t0 = time.perf_counter()
    split = split or split_users(ds.users, cfg.split_ratio, cfg.seed)
    fm = fit(ds, split.train, cfg, rule_backend=rule_backend, split=split)
    preds = predict(fm, ds, split.test, backend, cfg)
    cm, report = evaluate(preds, ds)
    windows = [w for r in preds.values() for w in r.windows if not w.trailing]
    n_calls = sum(r.n_calls for r in preds.values())
    latency = float(np.mean([w.latency for w in windows])) if windows else 0.0
    return ExperimentResult(cfg, split, fm, preds, cm, report, time.perf_counter() - t0, n_calls, latency)


class GazeMindPipeline(BaseEstimator):
    """Estimator facade: ``fit`` on training users, ``predict`` per-second labels."""

    def __init__(self, window=DEFAULT_WINDOW, k=DEFAULT_K, min_sep=0.3, seed=DEFAULT_SEED, use_rules=True,
                 use_profiles=True, use_retrieval=True, metric="descriptor", backend=None):
        self.window = window
        self.k = k
        self.min_sep = min_sep
        self.seed = seed
        self.use_rules = use_rules
        self.use_profiles = use_profiles
        self.use_retrieval = use_retrieval
        self.metric = metric
        self.backend = backend

    def _config(self) -> PipelineConfig:
        return PipelineConfig(window=self.window, k=self.k, min_sep=self.min_sep, seed=self.seed,
                              use_rules=self.use_rules, use_profiles=self.use_profiles,
                              use_retrieval=self.use_retrieval, metric=self.metric)

    def fit(self, ds: Dataset, users=None):
        users = ds.users if users is None else users
        self.model_ = fit(ds, users, self._config())
        return self

    def predict(self, ds: Dataset, users=None) -> dict:
        check_is_fitted(self, "model_")
        users = ds.users if users is None else users
        res = predict(self.model_, ds, users, self.backend or MockBackend(), self._config())
        return {k: r.labels for k, r in res.items()}

    def score(self, ds: Dataset, users=None) -> float:
        check_is_fitted(self, "model_")
        users = ds.users if users is None else users
        res = predict(self.model_, ds, users, self.backend or MockBackend(), self._config())
        return evaluate(res, ds)[1].accuracy
