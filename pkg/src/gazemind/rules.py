"""Task-guidance rules: grouped statistics, feature ranking and rule text."""
from __future__ import annotations

import hashlib
import json
import logging
import math
import re
from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._constants import FEATURES, LEVELS
from ._io import read_jsonl, write_jsonl
from .llm import LLMBackend
from .validation import check_feature_matrix, check_labels

logger = logging.getLogger(__name__)

DEFAULT_MIN_SEP = 0.3
FALLBACK_TOP = 3
STAT_NAMES = ("mean", "std", "median", "q25", "q75", "count")

TASK_NAMES = {"reading": "Reading", "gaming": "Gaming", "audio": "Audio N-Back"}


class RuleParseError(ValueError):
    pass


@dataclass(frozen=True)
class GroupedStats:
    """Per level (rows Low/Moderate/High) x per feature statistics.

    Quantiles use linear interpolation between order statistics; std is the
    population std.
    """

    task_id: str
    mean: np.ndarray
    std: np.ndarray
    median: np.ndarray
    q25: np.ndarray
    q75: np.ndarray
    count: np.ndarray

    def to_dict(self) -> dict:
        d = {"task": self.task_id, "features": list(FEATURES), "levels": list(LEVELS)}
        for name in STAT_NAMES:
            d[name] = getattr(self, name).tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GroupedStats":
        return cls(d["task"], *(np.asarray(d[name], dtype=float) for name in STAT_NAMES))

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def to_markdown(self) -> str:
        lines = ["| Feature | Level | mean | std | median | q25 | q75 | n |", "|---|---|---|---|---|---|---|---|"]
        for k, feat in enumerate(FEATURES):
            for lvl, level in enumerate(LEVELS):
                lines.append(
                    f"| {feat} | {level} | {self.mean[lvl, k]:+.3f} | {self.std[lvl, k]:.3f} | "
                    f"{self.median[lvl, k]:+.3f} | {self.q25[lvl, k]:+.3f} | {self.q75[lvl, k]:+.3f} | "
                    f"{int(self.count[lvl, k])} |"
                )
        return "\n".join(lines)


def grouped_stats(X, y, task_id: str) -> GroupedStats:
    """Statistics of each feature within each load level."""
    X = check_feature_matrix(X)
    y = check_labels(y, X.shape[0])
    for lvl, level in enumerate(LEVELS):
        if not np.any(y == lvl):
            raise ValueError(f"no samples labelled {level} for task {task_id!r}")
    groups = [X[y == lvl] for lvl in range(3)]
    return GroupedStats(
        task_id=task_id,
        mean=np.array([g.mean(axis=0) for g in groups]),
        std=np.array([g.std(axis=0) for g in groups]),
        median=np.array([np.median(g, axis=0) for g in groups]),
        q25=np.array([np.quantile(g, 0.25, axis=0) for g in groups]),
        q75=np.array([np.quantile(g, 0.75, axis=0) for g in groups]),
        count=np.array([[g.shape[0]] * len(FEATURES) for g in groups], dtype=float),
    )


def separation_scores(stats: GroupedStats) -> np.ndarray:
    """|mean_high - mean_low| / pooled std of the Low and High groups.

    Zero pooled spread with distinct means scores +inf.
    """
    n_lo, n_hi = stats.count[0], stats.count[2]
    pooled = np.sqrt((n_lo * stats.std[0] ** 2 + n_hi * stats.std[2] ** 2) / (n_lo + n_hi))
    diff = np.abs(stats.mean[2] - stats.mean[0])
    with np.errstate(divide="ignore", invalid="ignore"):
        score = np.where(pooled > 0, diff / np.where(pooled > 0, pooled, 1.0), np.where(diff > 0, np.inf, 0.0))
    return score


def discriminative_rank(stats: GroupedStats, min_sep: float = DEFAULT_MIN_SEP) -> list[tuple[str, float]]:
    """Features scoring at least ``min_sep``, best first; ties keep feature order."""
    score = separation_scores(stats)
    keep = [k for k in range(len(FEATURES)) if score[k] >= min_sep]
    keep.sort(key=lambda k: -score[k])
    return [(FEATURES[k], float(score[k])) for k in keep]


@dataclass(frozen=True)
class RuleEntry:
    feature: str
    rank: int
    direction: str
    cutpoints: tuple[float, float]

    def __post_init__(self):
        if self.feature not in FEATURES:
            raise ValueError(f"unknown feature {self.feature!r}")
        if self.direction not in ("+", "-"):
            raise ValueError(f"direction must be '+' or '-', got {self.direction!r}")
        lo, hi = self.cutpoints
        if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
            raise ValueError(f"cutpoints must be finite and ordered, got {self.cutpoints}")

    def level_of(self, z: float) -> int:
        """Band a window-mean z-score into 0/1/2 (Low/Moderate/High)."""
        lo, hi = self.cutpoints
        if self.direction == "+":
            return 0 if z < lo else (1 if z < hi else 2)
        return 0 if z > hi else (1 if z > lo else 2)

    def to_dict(self) -> dict:
        return {"feature": self.feature, "rank": self.rank, "direction": self.direction, "cutpoints": list(self.cutpoints)}


@dataclass(frozen=True)
class GuidanceRule:
    task_id: str
    entries: tuple[RuleEntry, ...]
    prompt_text: str
    provenance: str = ""
    source: str = "fallback"
    transfer: tuple[str, str] | None = None
    warnings: tuple[str, ...] = field(default=())

    def __post_init__(self):
        ranks = [e.rank for e in self.entries]
        if ranks != list(range(1, len(ranks) + 1)):
            raise ValueError(f"rule ranks must be 1..n in order, got {ranks}")
        if len({e.feature for e in self.entries}) != len(self.entries):
            raise ValueError("rule lists a feature twice")
        if not self.prompt_text.strip():
            raise ValueError("rule prompt text is empty")

    @property
    def features(self) -> list[str]:
        return [e.feature for e in self.entries]

    def to_dict(self) -> dict:
        return {
            "task": self.task_id,
            "entries": [e.to_dict() for e in self.entries],
            "prompt_text": self.prompt_text,
            "provenance": self.provenance,
            "source": self.source,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GuidanceRule":
        entries = tuple(
            RuleEntry(e["feature"], int(e["rank"]), e["direction"], tuple(float(c) for c in e["cutpoints"]))
            for e in d["entries"]
        )
        return cls(d["task"], entries, d["prompt_text"], d.get("provenance", ""), d.get("source", "fallback"))


def _direction_phrase(direction: str) -> str:
    return "higher values indicate higher cognitive load" if direction == "+" else "lower values indicate higher cognitive load"


def render_rule_text(task_id: str, entries) -> str:
    name = TASK_NAMES.get(task_id, task_id)
    lines = [
        f"Task-specific rules for the {name} task, derived from labeled training statistics.",
        "Discriminative features ranked by importance (thresholds apply to the window mean z-score):",
    ]
    for e in entries:
        lo, hi = e.cutpoints
        if e.direction == "+":
            bands = f"Low if z < {lo:+.2f}; Moderate if {lo:+.2f} <= z < {hi:+.2f}; High if z >= {hi:+.2f}"
        else:
            bands = f"Low if z > {hi:+.2f}; Moderate if {lo:+.2f} < z <= {hi:+.2f}; High if z <= {lo:+.2f}"
        lines.append(f"{e.rank}. {e.feature} ({e.direction}): {_direction_phrase(e.direction)}. {bands}.")
    lines.append("Features not listed overlap across load levels for this task; give them little weight.")
    return "\n".join(lines)


def fallback_entries(stats: GroupedStats, ranking) -> list[RuleEntry]:
    """Direction = sign(mean_high - mean_low); cutpoints at adjacent median midpoints."""
    entries = []
    for rank, (feat, _) in enumerate(ranking, start=1):
        k = FEATURES.index(feat)
        direction = "+" if stats.mean[2, k] - stats.mean[0, k] >= 0 else "-"
        med = stats.median[:, k]
        c1 = (med[0] + med[1]) / 2.0
        c2 = (med[1] + med[2]) / 2.0
        entries.append(RuleEntry(feat, rank, direction, (float(min(c1, c2)), float(max(c1, c2)))))
    return entries


def _ranking_with_fallback(stats: GroupedStats, min_sep: float):
    ranking = discriminative_rank(stats, min_sep)
    warnings = []
    if not ranking:
        score = separation_scores(stats)
        order = sorted(range(len(FEATURES)), key=lambda k: -score[k])[:FALLBACK_TOP]
        ranking = [(FEATURES[k], float(score[k])) for k in order]
        msg = f"no feature reaches separation {min_sep} for task {stats.task_id!r}; using top {FALLBACK_TOP} by raw score"
        logger.warning(msg)
        warnings.append(msg)
    return ranking, warnings


RULE_SYSTEM_PROMPT = (
    "You analyse eye-tracking feature statistics grouped by cognitive load level and write "
    "task-specific interpretation rules. Answer with a single JSON object and nothing else."
)


def rule_request_text(stats: GroupedStats, ranking) -> str:
    feats = ", ".join(f for f, _ in ranking)
    return (
        f"Task: {TASK_NAMES.get(stats.task_id, stats.task_id)}\n\n"
        "Per-level statistics of z-scored gaze features:\n"
        f"{stats.to_markdown()}\n\n"
        f"Candidate discriminative features (pre-screened): {feats}\n\n"
        "Return JSON of the form "
        '{"entries": [{"feature": "<name>", "direction": "+" or "-", "cutpoints": [<low/moderate>, <moderate/high>]}]} '
        "with entries ranked from most to least discriminative. Direction '+' means higher values indicate "
        "higher load. Cutpoints are z-score thresholds on the window mean."
    )


@dataclass(frozen=True)
class RuleRequest:
    """Context handed to the backend; the mock answers with the fallback rule."""

    stats: GroupedStats
    ranking: tuple

    def mock_response(self) -> str:
        entries = fallback_entries(self.stats, self.ranking)
        return json.dumps({"entries": [{"feature": e.feature, "direction": e.direction,
                                        "cutpoints": list(e.cutpoints)} for e in entries]})


def parse_rule_response(text: str) -> list[RuleEntry]:
    match = re.search(r"\{.*\}", text, re.DOTALL)
    if not match:
        raise RuleParseError("no JSON object in rule response")
    try:
        data = json.loads(match.group(0))
        raw = data["entries"]
        entries = [
            RuleEntry(str(e["feature"]), rank, str(e["direction"]).replace("−", "-"),
                      tuple(sorted(float(c) for c in e["cutpoints"])))
            for rank, e in enumerate(raw, start=1)
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise RuleParseError(f"malformed rule response: {exc}") from None
    if not entries:
        raise RuleParseError("rule response has no entries")
    if len({e.feature for e in entries}) != len(entries):
        raise RuleParseError("rule response repeats a feature")
    return entries


def generate_rule(stats: GroupedStats, backend: LLMBackend | None = None, min_sep: float = DEFAULT_MIN_SEP) -> GuidanceRule:
    """Build the guidance rule for one task.

    Without a backend the deterministic fallback is used. With a backend the
    statistics are sent for rule writing; an unparseable answer is retried
    once and then replaced by the fallback.
    """
    ranking, warnings = _ranking_with_fallback(stats, min_sep)
    entries = None
    source = "fallback"
    if backend is not None:
        request = RuleRequest(stats, tuple(ranking))
        user = rule_request_text(stats, ranking)
        for attempt in range(2):
            text = backend.complete(RULE_SYSTEM_PROMPT, user, temperature=0.0, context=request)
            try:
                entries = parse_rule_response(text)
                source = getattr(backend, "name", "llm")
                break
            except RuleParseError as exc:
                logger.warning("rule response unusable (attempt %d): %s", attempt + 1, exc)
        if entries is None:
            msg = f"rule generation for {stats.task_id!r} downgraded to the deterministic fallback"
            logger.warning(msg)
            warnings.append(msg)
    if entries is None:
        entries = fallback_entries(stats, ranking)
    return GuidanceRule(
        task_id=stats.task_id,
        entries=tuple(entries),
        prompt_text=render_rule_text(stats.task_id, entries),
        provenance=stats.digest(),
        source=source,
        warnings=tuple(warnings),
    )


class TaskRuleGenerator(BaseEstimator):
    """Fit grouped statistics on labelled z-scored seconds and derive a rule."""

    def __init__(self, task_id="reading", min_sep=DEFAULT_MIN_SEP, backend=None):
        self.task_id = task_id
        self.min_sep = min_sep
        self.backend = backend

    def fit(self, X, y):
        self.stats_ = grouped_stats(X, y, self.task_id)
        self.scores_ = separation_scores(self.stats_)
        self.ranking_ = discriminative_rank(self.stats_, self.min_sep)
        self.rule_ = generate_rule(self.stats_, self.backend, self.min_sep)
        return self

    def predict(self, X):
        """Rank-weighted vote of the rule entries on each row of X."""
        check_is_fitted(self, "rule_")
        X = check_feature_matrix(X)
        return np.array([rule_vote(self.rule_, row)[0] for row in X], dtype=np.int64)


def rule_vote(rule: GuidanceRule, row_means) -> tuple[int, list[RuleEntry]]:
    """Rank-weighted (1/rank) vote of rule entries on per-feature means.

    Ties go to the tied level backed by the best-ranked entry. Returns the
    level and the entries that voted for it.
    """
    scores = [0.0, 0.0, 0.0]
    first_rank = [math.inf] * 3
    votes = []
    for e in rule.entries:
        lvl = e.level_of(float(row_means[FEATURES.index(e.feature)]))
        votes.append((e, lvl))
        scores[lvl] += 1.0 / e.rank
        first_rank[lvl] = min(first_rank[lvl], e.rank)
    best = max(scores)
    tied = [lvl for lvl in range(3) if scores[lvl] == best]
    level = min(tied, key=lambda lvl: first_rank[lvl])
    return level, [e for e, lvl in votes if lvl == level]


class RuleStore(dict):
    """task_id -> GuidanceRule, persisted as one JSON line per task."""

    def save(self, path) -> None:
        write_jsonl(path, (self[t].to_dict() for t in sorted(self)))

    @classmethod
    def load(cls, path) -> "RuleStore":
        store = cls()
        for rec in read_jsonl(path):
            rule = GuidanceRule.from_dict(rec)
            store[rule.task_id] = rule
        return store


def select_rule(store, task_id: str, source_task: str | None = None) -> GuidanceRule:
    """Rule for ``task_id``; with ``source_task`` the rule of that task is
    returned instead, tagged as transferred."""
    key = source_task or task_id
    if key not in store:
        known = ", ".join(sorted(store)) or "none"
        raise KeyError(f"no rule for task {key!r}; known tasks: {known}")
    rule = store[key]
    if source_task is not None and source_task != task_id:
        rule = replace(rule, transfer=(source_task, task_id))
    return rule
