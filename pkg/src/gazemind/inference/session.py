"""Windowed prediction over a session with label back-fill."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .._constants import DEFAULT_WINDOW
from .._io import read_jsonl, write_jsonl
from ..gaze.normalize import PopulationStats
from ..gaze.table import InsufficientHistoryError, build_table
from ..llm import BackendError, LLMBackend, invoke
from ..retrieval import RetrievalDB, retrieve
from ..rules import GuidanceRule
from .mock import PredictionRequest
from .prompts import assemble_prompts, generic_rule
from .response import Prediction, ResponseParseError, parse_response

logger = logging.getLogger(__name__)

ERROR_LABEL = "ERROR"


@dataclass
class SessionContext:
    backend: LLMBackend
    task_id: str
    rule: GuidanceRule | None = None
    profile: object = None
    db: RetrievalDB | None = None
    stats: PopulationStats | None = None
    user_id: str = ""
    k: int = 3
    metric: str = "descriptor"
    exclude_same_user: bool = False


@dataclass(frozen=True)
class WindowPrediction:
    user_id: str
    task_id: str
    window_end: int
    label: str
    reasoning: str
    latency: float
    backend: str
    trailing: bool = False
    fallback: bool = False
    error: str = ""

    def to_dict(self) -> dict:
        return {
            "user": self.user_id, "task": self.task_id, "window_end": self.window_end, "label": self.label,
            "reasoning": self.reasoning, "latency": self.latency, "backend": self.backend,
            "trailing": self.trailing, "fallback": self.fallback, "error": self.error,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WindowPrediction":
        return cls(str(d["user"]), d["task"], int(d["window_end"]), d["label"], d.get("reasoning", ""),
                   float(d.get("latency", 0.0)), d.get("backend", ""), bool(d.get("trailing", False)),
                   bool(d.get("fallback", False)), d.get("error", ""))


@dataclass
class SessionResult:
    windows: list[WindowPrediction]
    labels: list[str]
    n_calls: int = 0
    meta: dict = field(default_factory=dict)


def predict_window(ctx: SessionContext, table) -> tuple[Prediction | None, bool, str]:
    """One model call for one table, re-invoked once if the reply cannot be parsed.

    Returns (prediction or None, retrieval fallback flag, error text).
    """
    rule = ctx.rule if ctx.rule is not None else generic_rule(ctx.task_id)
    refs, fallback = [], False
    if ctx.db is not None:
        profile_name = getattr(ctx.profile, "name", "") or ""
        res = retrieve(ctx.db, table, ctx.task_id, profile_name, ctx.k, metric=ctx.metric,
                       exclude_user=ctx.user_id if ctx.exclude_same_user else None)
        refs, fallback = list(res.records), res.fallback
    prompts = assemble_prompts(ctx.rule, ctx.profile, refs, table, ctx.task_id, table.window, ctx.stats)
    request = PredictionRequest(rule, ctx.profile, tuple(refs), table)
    last = ""
    for attempt in range(2):
        completion = invoke(ctx.backend, prompts.system, prompts.user, context=request)
        try:
            p = parse_response(completion.text)
            return Prediction(p.label, p.reasoning, completion.latency, completion.backend), fallback, ""
        except ResponseParseError as exc:
            last = str(exc)
            logger.warning("unparseable response for %s/%s t=%d (attempt %d): %s",
                           ctx.user_id, ctx.task_id, table.end_second, attempt + 1, exc)
    return None, fallback, last


def run_session(z_series, ctx: SessionContext, T: int = DEFAULT_WINDOW) -> SessionResult:
    """Predict once per T-second window and copy each label onto its seconds.

    Windows end at T-1, 2T-1, ...; seconds after the last full window take
    its label and the trailing record is flagged without a model call.
    """
    Z = np.asarray(getattr(z_series, "values", z_series), dtype=float)
    n = Z.shape[0]
    if n < T:
        raise InsufficientHistoryError(f"recording has {n} s, shorter than the {T}-second window")
    windows, labels = [], []
    n_calls = 0
    for end in range(T - 1, n - (n % T), T):
        table = build_table(Z, end, T, ctx.user_id, ctx.task_id)
        try:
            pred, fallback, err = predict_window(ctx, table)
        except BackendError as exc:
            pred, fallback, err = None, False, str(exc)
        n_calls += 1
        if pred is None:
            windows.append(WindowPrediction(ctx.user_id, ctx.task_id, end, ERROR_LABEL, "", 0.0,
                                            ctx.backend.name, False, fallback, err))
        else:
            windows.append(WindowPrediction(ctx.user_id, ctx.task_id, end, pred.label, pred.reasoning,
                                            pred.latency, pred.backend, False, fallback))
        labels.extend([windows[-1].label] * T)
    if n % T:
        last = windows[-1]
        windows.append(WindowPrediction(ctx.user_id, ctx.task_id, n - 1, last.label, last.reasoning, 0.0,
                                        last.backend, True, last.fallback, last.error))
        labels.extend([last.label] * (n % T))
    return SessionResult(windows, labels, n_calls)


def write_prediction_log(path, windows) -> None:
    write_jsonl(path, [w.to_dict() for w in windows])


def read_prediction_log(path) -> list[WindowPrediction]:
    return [WindowPrediction.from_dict(d) for d in read_jsonl(path)]


def expand_labels(windows, T: int) -> list[str]:
    """Per-second labels reconstructed from window records of one session."""
    out: list[str] = []
    for w in windows:
        start = len(out)
        out.extend([w.label] * (w.window_end + 1 - start))
    return out
