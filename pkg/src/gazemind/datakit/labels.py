"""Self-report aggregation and per-second label interpolation."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

from .._constants import LEVELS
from .._io import atomic_open

LEVEL7 = ("very low", "low", "moderate-low", "moderate", "moderate-high", "high", "very high")
_AGG = {
    "very low": "Low", "low": "Low", "moderate-low": "Low",
    "moderate": "Moderate",
    "moderate-high": "High", "high": "High", "very high": "High",
}
SOURCES = ("reported", "interpolated", "synthetic")
LABEL_COLUMNS = ("user", "task", "second", "level3", "source")
REPORT_COLUMNS = ("user", "task", "timestamp_s", "level7")
SPAN_COLUMNS = ("user", "task", "start_s", "end_s")


def _norm_token(token: str) -> str:
    t = " ".join(str(token).strip().lower().replace("_", " ").split())
    # "moderate low" and "moderate-low" are the same level; "very low" keeps its space.
    for mid in ("moderate low", "moderate high"):
        if t == mid:
            return mid.replace(" ", "-")
    return t


def aggregate_label(level7: str) -> str:
    """Collapse a 7-level report into Low / Moderate / High."""
    key = _norm_token(level7)
    if key not in _AGG:
        raise ValueError(f"unknown load report level {level7!r}; expected one of {', '.join(LEVEL7)}")
    return _AGG[key]


@dataclass(frozen=True)
class LoadReport:
    timestamp: float
    level7: str

    @property
    def level3(self) -> str:
        return aggregate_label(self.level7)


@dataclass(frozen=True)
class LabeledSecond:
    user: str
    task: str
    second: int
    level3: str
    source: str


def _game_kind(kind: str) -> str:
    k = kind.lower()
    if k in ("game", "gaming"):
        return "game"
    if k in ("audio", "reading"):
        return k
    raise ValueError(f"unknown task kind {kind!r}; expected audio, reading or game")


def label_at(second: int, times, labels, kind: str) -> str:
    """Label of one integer second given the sorted report times of its span.

    audio / reading: the first report strictly after ``second`` owns it
    (back-fill); seconds after the last report take its label.
    game: between reports at t1 < t2 the boundary is b = floor(t1 + 0.8 (t2 - t1));
    seconds in [t1, b) take the later report's label, seconds in [b, t2) the
    earlier one's. Seconds before the first report take its label, seconds
    from the last report on take the last label.
    """
    kind = _game_kind(kind)
    if kind != "game":
        for t, lab in zip(times, labels):
            if second < t:
                return lab
        return labels[-1]
    if second < times[0]:
        return labels[0]
    for i in range(len(times) - 1):
        t1, t2 = times[i], times[i + 1]
        if t1 <= second < t2:
            b = math.floor(t1 + 0.8 * (t2 - t1))
            return labels[i + 1] if second < b else labels[i]
    return labels[-1]


def interpolate_labels(reports, spans, kind: str, user: str = "", task: str = "") -> list[LabeledSecond]:
    """Per-second labels over integer task spans [start, end).

    Each report must fall inside a span (``start <= t <= end``); each span
    needs at least one report. Seconds outside every span get no label.
    """
    kind = _game_kind(kind)
    spans = sorted((int(a), int(b)) for a, b in spans)
    for (a0, b0), (a1, _) in zip(spans, spans[1:]):
        if a1 < b0:
            raise ValueError(f"task spans overlap: [{a0}, {b0}) and [{a1}, ...)")
    reports = sorted(reports, key=lambda r: r.timestamp)
    owner = []
    for r in reports:
        hit = [i for i, (a, b) in enumerate(spans) if a <= r.timestamp <= b]
        if not hit:
            raise ValueError(f"report at t={r.timestamp} s ({r.level7}) lies outside every task span")
        owner.append(hit[0])
    out: list[LabeledSecond] = []
    for i, (a, b) in enumerate(spans):
        mine = [r for r, o in zip(reports, owner) if o == i]
        if not mine:
            raise ValueError(f"task span [{a}, {b}) has no load report")
        times = [r.timestamp for r in mine]
        labels = [r.level3 for r in mine]
        reported = {math.floor(t) for t in times}
        for s in range(a, b):
            src = "reported" if s in reported else "interpolated"
            out.append(LabeledSecond(user, task, s, label_at(s, times, labels, kind), src))
    return out


def write_labels_csv(path, rows) -> None:
    with atomic_open(path, newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LABEL_COLUMNS)
        for r in rows:
            w.writerow([r.user, r.task, r.second, r.level3, r.source])


def read_labels_csv(path) -> list[LabeledSecond]:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(LABEL_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {', '.join(sorted(missing))}")
        for lineno, rec in enumerate(reader, start=2):
            if rec["level3"] not in LEVELS:
                raise ValueError(f"{path}:{lineno}: unknown level {rec['level3']!r}")
            rows.append(LabeledSecond(rec["user"], rec["task"], int(rec["second"]), rec["level3"], rec["source"]))
    return rows


def labels_by_session(rows) -> dict:
    """Group label rows into {(user, task): [level3 per second 0..n-1]}."""
    grouped: dict = {}
    for r in rows:
        grouped.setdefault((r.user, r.task), {})[r.second] = r.level3
    out = {}
    for key, secs in grouped.items():
        n = max(secs) + 1
        if len(secs) != n:
            raise ValueError(f"labels for {key[0]}/{key[1]} do not cover seconds 0..{n - 1}")
        out[key] = [secs[s] for s in range(n)]
    return out


def read_reports_csv(path) -> dict:
    out: dict = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for lineno, rec in enumerate(reader, start=2):
            try:
                rep = LoadReport(float(rec["timestamp_s"]), rec["level7"])
                rep.level3
            except (KeyError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            out.setdefault((rec["user"], rec["task"]), []).append(rep)
    return out


def read_spans_csv(path) -> dict:
    out: dict = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, rec in enumerate(csv.DictReader(fh), start=2):
            try:
                out.setdefault((rec["user"], rec["task"]), []).append((int(rec["start_s"]), int(rec["end_s"])))
            except (KeyError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return out
