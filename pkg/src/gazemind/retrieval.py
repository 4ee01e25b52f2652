"""Descriptor-based retrieval of labeled feature tables."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._constants import FEATURES, LEVELS, N_FEATURES, TASKS
from ._io import read_jsonl, write_jsonl
from .gaze.table import FeatureTable

logger = logging.getLogger(__name__)

DB_FORMAT = "gazemind-retrieval-db"
DB_VERSION = 1
DESCRIPTOR_NAMES = tuple(f"{f}.{s}" for f in FEATURES for s in ("mean", "std", "slope"))


def descriptors(cells: np.ndarray) -> np.ndarray:
    """Vectorised descriptor for a (..., T, K) stack of tables -> (..., 3K).

    Each feature contributes [mean, population std, OLS slope over 0..T-1].
    """
    X = np.asarray(cells, dtype=float)
    T = X.shape[-2]
    mu = X.mean(axis=-2)
    sigma = X.std(axis=-2)
    if T > 1:
        t = np.arange(T, dtype=float) - (T - 1) / 2.0
        beta = np.einsum("t,...tk->...k", t, X - mu[..., None, :]) / float(t @ t)
    else:
        beta = np.zeros_like(mu)
    out = np.stack([mu, sigma, beta], axis=-1)
    return out.reshape(*out.shape[:-2], 3 * X.shape[-1])


def descriptor(table) -> np.ndarray:
    """[mu_1, sigma_1, beta_1, ..., mu_K, sigma_K, beta_K] of one table."""
    cells = table.cells if isinstance(table, FeatureTable) else np.asarray(table, dtype=float)
    if cells.ndim != 2:
        raise ValueError(f"expected a (T, K) table, got shape {cells.shape}")
    return descriptors(cells)


def distance(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"descriptor lengths differ: {a.shape} vs {b.shape}")
    return float(np.sqrt(((a - b) ** 2).sum()))


@dataclass(frozen=True)
class LabeledWindow:
    table: FeatureTable
    label: str
    task_id: str
    profile: str
    user_id: str
    window_id: str


@dataclass(frozen=True)
class RetrievalRecord:
    descriptor: np.ndarray
    table: FeatureTable
    label: str
    task_id: str
    profile: str
    user_id: str
    window_id: str


@dataclass
class RetrievalResult:
    records: list
    distances: np.ndarray
    fallback: bool = False

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]


class RetrievalDB:
    """Immutable columnar store of labeled tables with precomputed descriptors."""

    def __init__(self, cells, labels, tasks, profiles, users, window_ids):
        cells = np.asarray(cells, dtype=float)
        if cells.ndim != 3 or (cells.shape[0] and cells.shape[2] != N_FEATURES):
            raise ValueError(f"cells must have shape (n, T, {N_FEATURES})")
        self.cells = cells
        self.descriptors = descriptors(cells) if cells.shape[0] else np.zeros((0, 3 * N_FEATURES))
        self.flat = cells.reshape(cells.shape[0], cells.shape[1] * cells.shape[2])
        self.labels = tuple(labels)
        self.tasks = tuple(tasks)
        self.profiles = tuple(profiles)
        self.users = tuple(users)
        self.window_ids = tuple(window_ids)
        n = cells.shape[0]
        if not all(len(c) == n for c in (self.labels, self.tasks, self.profiles, self.users, self.window_ids)):
            raise ValueError("record columns have inconsistent lengths")
        buckets: dict = {}
        by_task: dict = {}
        for i, (t, p) in enumerate(zip(self.tasks, self.profiles)):
            buckets.setdefault((t, p), []).append(i)
            by_task.setdefault(t, []).append(i)
        self.index = {k: np.asarray(v, dtype=np.int64) for k, v in buckets.items()}
        self.task_index = {k: np.asarray(v, dtype=np.int64) for k, v in by_task.items()}
        # Contiguous per-bucket descriptor copies so a query scans without gathering rows.
        self._index_desc = {k: self.descriptors[v] for k, v in self.index.items()}
        self._task_desc = {k: self.descriptors[v] for k, v in self.task_index.items()}
        names, codes = np.unique(np.asarray(self.users, dtype=str), return_inverse=True) if n else ([], [])
        self._user_code = {u: i for i, u in enumerate(names)}
        self._user_codes = np.asarray(codes, dtype=np.int64).reshape(-1)
        for arr in (self.cells, self.descriptors, self.flat):
            arr.setflags(write=False)

    def __len__(self) -> int:
        return self.cells.shape[0]

    @property
    def window(self) -> int | None:
        return int(self.cells.shape[1]) if len(self) else None

    def record(self, i: int) -> RetrievalRecord:
        table = FeatureTable(np.array(self.cells[i]), -1, self.users[i], self.tasks[i])
        return RetrievalRecord(self.descriptors[i], table, self.labels[i], self.tasks[i], self.profiles[i], self.users[i], self.window_ids[i])

    def records(self):
        return [self.record(i) for i in range(len(self))]

    def save(self, path) -> None:
        header = {"format": DB_FORMAT, "version": DB_VERSION, "n": len(self), "window": self.window, "features": list(FEATURES)}
        rows = (
            {
                "user": self.users[i],
                "task": self.tasks[i],
                "profile": self.profiles[i],
                "window_id": self.window_ids[i],
                "label": self.labels[i],
                "descriptor": self.descriptors[i].tolist(),
                "cells": self.cells[i].ravel().tolist(),
            }
            for i in range(len(self))
        )
        write_jsonl(path, [header, *rows])

    @classmethod
    def load(cls, path) -> "RetrievalDB":
        recs = list(read_jsonl(path))
        if not recs or recs[0].get("format") != DB_FORMAT:
            raise ValueError(f"{path}: not a retrieval database file")
        header = recs[0]
        if header.get("version") != DB_VERSION:
            raise ValueError(f"{path}: unsupported database version {header.get('version')}")
        body = recs[1:]
        if len(body) != header.get("n", len(body)):
            raise ValueError(f"{path}: header says {header['n']} records, found {len(body)}")
        if not body:
            return cls(np.zeros((0, header.get("window") or 1, N_FEATURES)), [], [], [], [], [])
        T = int(header["window"])
        cells = np.asarray([r["cells"] for r in body], dtype=float).reshape(len(body), T, N_FEATURES)
        db = cls(cells, [r["label"] for r in body], [r["task"] for r in body], [r["profile"] for r in body],
                 [r["user"] for r in body], [r["window_id"] for r in body])
        stored = np.asarray([r["descriptor"] for r in body], dtype=float)
        if not np.allclose(stored, db.descriptors, rtol=0, atol=1e-9):
            raise ValueError(f"{path}: stored descriptors do not match table cells")
        return db


def _test_users(split) -> set:
    if split is None:
        return set()
    test = getattr(split, "test", split)
    return {str(u) for u in test}


def build_database(windows, split=None) -> RetrievalDB:
    """Build the store from labeled training windows.

    Records are ordered by (user_id, window_id); equal keys keep input order.
    When ``split`` (a manifest with ``test`` users, or a set of test user ids)
    is given, any window from a test user is refused.
    """
    windows = list(windows)
    banned = _test_users(split)
    T = None
    for w in windows:
        if not w.task_id or not w.profile or not w.label:
            raise ValueError(f"window {w.user_id}/{w.window_id} is missing a task, profile or label tag")
        if w.label not in LEVELS:
            raise ValueError(f"window {w.user_id}/{w.window_id} has unknown label {w.label!r}")
        if w.task_id not in TASKS:
            raise ValueError(f"window {w.user_id}/{w.window_id} has unknown task {w.task_id!r}")
        if str(w.user_id) in banned:
            raise ValueError(f"refusing to add window from test user {w.user_id!r} to the retrieval database")
        if T is None:
            T = w.table.window
        elif w.table.window != T:
            raise ValueError(f"mixed window lengths in database: {T} and {w.table.window}")
    order = sorted(range(len(windows)), key=lambda i: (str(windows[i].user_id), str(windows[i].window_id)))
    ws = [windows[i] for i in order]
    cells = np.stack([w.table.cells for w in ws]) if ws else np.zeros((0, 1, N_FEATURES))
    return RetrievalDB(cells, [w.label for w in ws], [w.task_id for w in ws], [w.profile for w in ws],
                       [str(w.user_id) for w in ws], [str(w.window_id) for w in ws])


def _top_k(dist: np.ndarray, k: int) -> np.ndarray:
    """Positions of the k smallest distances, ties broken by position."""
    n = dist.shape[0]
    if k < n:
        part = np.argpartition(dist, k - 1)[:k]
        cut = dist[part].max()
        cand = np.flatnonzero(dist <= cut)
    else:
        cand = np.arange(n)
    cand = cand[np.lexsort((cand, dist[cand]))]
    return cand[:k]


def retrieve(db: RetrievalDB, query, task_id: str, profile: str, k: int = 3, *,
             exclude_user: str | None = None, metric: str = "descriptor") -> RetrievalResult:
    """Top-k stored tables nearest to ``query`` within the (task, profile) bucket.

    If the bucket has no eligible record the search widens to every record of
    the task and the result is flagged. ``metric="cosine"`` ranks by cosine
    distance between flattened tables instead of descriptor distance.
    """
    if metric not in ("descriptor", "cosine"):
        raise ValueError(f"unknown metric {metric!r}")
    empty = RetrievalResult([], np.zeros(0), True)
    if k <= 0:
        return RetrievalResult([], np.zeros(0), False)
    if len(db) == 0:
        return empty
    cells = query.cells if isinstance(query, FeatureTable) else np.asarray(query, dtype=float)
    if cells.shape != db.cells.shape[1:]:
        raise ValueError(f"query table shape {cells.shape} does not match database tables {db.cells.shape[1:]}")

    none = np.zeros(0, dtype=np.int64)
    code = db._user_code.get(str(exclude_user), -1) if exclude_user is not None else -1

    def eligible(idx):
        keep = db._user_codes[idx] != code if code >= 0 and idx.size else None
        return (idx if keep is None else idx[keep]), keep

    fallback = False
    key = (task_id, profile)
    idx, keep = eligible(db.index.get(key, none))
    D = db._index_desc.get(key)
    if idx.size == 0:
        fallback = True
        idx, keep = eligible(db.task_index.get(task_id, none))
        D = db._task_desc.get(task_id)
        logger.debug("no records for (%s, %s); widened to task-only (%d)", task_id, profile, idx.size)
    if idx.size == 0:
        return empty

    if metric == "descriptor":
        q = descriptors(cells)
        diff = (D if keep is None else D[keep]) - q
        dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    else:
        q = cells.ravel()
        M = db.flat[idx]
        norms = np.linalg.norm(M, axis=1) * np.linalg.norm(q)
        sim = np.divide(M @ q, norms, out=np.zeros(idx.size), where=norms > 0)
        dist = 1.0 - sim
    top = _top_k(dist, k)
    return RetrievalResult([db.record(int(idx[i])) for i in top], dist[top], fallback)


class CogRAGRetriever(BaseEstimator):
    """Estimator wrapper: ``fit`` builds the store, ``retrieve`` queries it."""

    def __init__(self, k=3, metric="descriptor", exclude_same_user=False):
        self.k = k
        self.metric = metric
        self.exclude_same_user = exclude_same_user

    def fit(self, windows, y=None, split=None):
        self.db_ = build_database(windows, split=split)
        return self

    def retrieve(self, table: FeatureTable, task_id: str, profile: str, user_id: str | None = None) -> RetrievalResult:
        check_is_fitted(self, "db_")
        return retrieve(self.db_, table, task_id, profile, self.k, metric=self.metric,
                        exclude_user=user_id if self.exclude_same_user else None)
