"""Per-second gaze features computed from I-VT events."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .._constants import FEATURES, N_FEATURES, NS_PER_S
from .._io import read_jsonl, write_jsonl
from .events import EventKind, EventTable, IVTConfig, detect_events
from .recording import GazeRecording

# Per-second quality flags.
NO_FIXATION = 1
NO_SACCADE = 2
NO_PUPIL = 4
MISSING = 8


@dataclass(frozen=True)
class FeatureVector:
    second_index: int
    values: np.ndarray
    flags: int = 0

    def as_dict(self) -> dict:
        return dict(zip(FEATURES, self.values.tolist()))


@dataclass(frozen=True)
class ChannelMoments:
    """Count, mean and sum of squared deviations of one sample channel."""

    n: int = 0
    mean: float = 0.0
    m2: float = 0.0

    @classmethod
    def of(cls, x: np.ndarray) -> "ChannelMoments":
        if x.size == 0:
            return cls()
        mean = float(x.mean())
        return cls(int(x.size), mean, float(((x - mean) ** 2).sum()))

    def merge(self, other: "ChannelMoments") -> "ChannelMoments":
        if other.n == 0:
            return self
        if self.n == 0:
            return other
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * other.n / n
        m2 = self.m2 + other.m2 + delta * delta * self.n * other.n / n
        return ChannelMoments(n, mean, m2)

    @property
    def var(self) -> float:
        return self.m2 / self.n if self.n else 0.0


@dataclass(frozen=True)
class SampleSummary:
    """Valid-sample moments of a recording, enough to rebuild user traits."""

    pupil: ChannelMoments
    yaw: ChannelMoments
    pitch: ChannelMoments

    @classmethod
    def of(cls, rec: GazeRecording) -> "SampleSummary":
        v = rec.valid
        return cls(ChannelMoments.of(rec.pupil[v]), ChannelMoments.of(rec.yaw[v]), ChannelMoments.of(rec.pitch[v]))

    def merge(self, other: "SampleSummary") -> "SampleSummary":
        return SampleSummary(self.pupil.merge(other.pupil), self.yaw.merge(other.yaw), self.pitch.merge(other.pitch))

    def to_dict(self) -> dict:
        return {k: [m.n, m.mean, m.m2] for k, m in (("pupil", self.pupil), ("yaw", self.yaw), ("pitch", self.pitch))}

    @classmethod
    def from_dict(cls, d: dict) -> "SampleSummary":
        return cls(*(ChannelMoments(int(d[k][0]), float(d[k][1]), float(d[k][2])) for k in ("pupil", "yaw", "pitch")))


@dataclass(eq=False)
class FeatureSeries:
    """Per-second raw features of one recording, shape (n_seconds, 7)."""

    user_id: str
    task_id: str
    values: np.ndarray
    flags: np.ndarray
    summary: SampleSummary | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(-1, N_FEATURES)
        self.flags = np.asarray(self.flags, dtype=np.int64).reshape(-1)
        if self.flags.shape[0] != self.values.shape[0]:
            raise ValueError("flags and values disagree on the number of seconds")

    def __len__(self) -> int:
        return int(self.values.shape[0])

    def vector(self, second: int) -> FeatureVector:
        return FeatureVector(second, self.values[second].copy(), int(self.flags[second]))

    def with_values(self, values: np.ndarray) -> "FeatureSeries":
        return FeatureSeries(self.user_id, self.task_id, values, self.flags.copy(), self.summary, dict(self.meta))

    def head(self, n: int) -> "FeatureSeries":
        """The first ``n`` seconds."""
        return FeatureSeries(self.user_id, self.task_id, self.values[:n].copy(), self.flags[:n].copy(), self.summary,
                             dict(self.meta))


def _expand_over_seconds(start: np.ndarray, end: np.ndarray):
    """Split [start, end) intervals at whole-second boundaries.

    Returns (event index, second, clipped duration ns) for every
    event/second intersection.
    """
    first = start // NS_PER_S
    last = (end - 1) // NS_PER_S
    counts = (last - first + 1).astype(np.int64)
    idx = np.repeat(np.arange(start.shape[0]), counts)
    offsets = np.arange(idx.shape[0]) - np.repeat(np.cumsum(counts) - counts, counts)
    sec = first[idx] + offsets
    lo = np.maximum(start[idx], sec * NS_PER_S)
    hi = np.minimum(end[idx], (sec + 1) * NS_PER_S)
    return idx, sec, hi - lo


def _time_in_seconds(start, end, n_sec):
    """Total covered time (ns) of intervals per second."""
    if start.size == 0:
        return np.zeros(n_sec)
    _, sec, clipped = _expand_over_seconds(start, end)
    keep = sec < n_sec
    return np.bincount(sec[keep], weights=clipped[keep], minlength=n_sec)[:n_sec]


def featurize(rec: GazeRecording, events: EventTable | None = None, cfg: IVTConfig | None = None) -> FeatureSeries:
    """Compute the 7 features for every second of a recording.

    Durations are means of event durations clipped to the second (seconds);
    ratios are in-window event time over one second; blink_count counts blinks
    starting in the second; avg_pupil_size averages valid samples. Seconds
    without the relevant events or samples get 0 and a quality flag.
    """
    if events is None:
        events = detect_events(rec, cfg)
    n_sec = rec.duration_seconds
    values = np.zeros((n_sec, N_FEATURES))
    flags = np.zeros(n_sec, dtype=np.int64)
    if n_sec == 0:
        return FeatureSeries(rec.user_id, rec.task_id, values, flags, SampleSummary.of(rec))

    for kind, dur_col, ratio_col, flag in (
        (EventKind.FIXATION, 0, 3, NO_FIXATION),
        (EventKind.SACCADE, 1, 4, NO_SACCADE),
    ):
        sel = events.of_kind(kind)
        count = np.zeros(n_sec)
        if sel.size:
            idx, sec, clipped = _expand_over_seconds(events.start[sel], events.end[sel])
            keep = sec < n_sec
            idx, sec, clipped = idx[keep], sec[keep], clipped[keep]
            count = np.bincount(sec, minlength=n_sec)[:n_sec].astype(float)
            total = np.bincount(sec, weights=clipped, minlength=n_sec)[:n_sec]
            has = count > 0
            values[has, dur_col] = total[has] / count[has] / NS_PER_S
            values[:, ratio_col] = total / NS_PER_S
            if kind is EventKind.SACCADE:
                amp = np.bincount(sec, weights=events.amplitude[sel][idx], minlength=n_sec)[:n_sec]
                values[has, 2] = amp[has] / count[has]
        flags[count == 0] |= flag

    blinks = events.of_kind(EventKind.BLINK)
    if blinks.size:
        bsec = events.start[blinks] // NS_PER_S
        bsec = bsec[bsec < n_sec]
        values[:, 5] = np.bincount(bsec, minlength=n_sec)[:n_sec]

    v = rec.valid
    psec = rec.timestamp[v] // NS_PER_S
    keep = psec < n_sec
    pcount = np.bincount(psec[keep], minlength=n_sec)[:n_sec]
    psum = np.bincount(psec[keep], weights=rec.pupil[v][keep], minlength=n_sec)[:n_sec]
    has = pcount > 0
    values[has, 6] = psum[has] / pcount[has]
    flags[~has] |= NO_PUPIL

    return FeatureSeries(rec.user_id, rec.task_id, values, flags, SampleSummary.of(rec))


def extract_features(rec: GazeRecording, events: EventTable, second: int) -> FeatureVector:
    """Features of a single second (see :func:`featurize`)."""
    n_sec = rec.duration_seconds
    if not 0 <= second < n_sec:
        raise ValueError(f"second {second} outside recording of {n_sec} s")
    return featurize(rec, events).vector(second)


def time_partition(rec: GazeRecording, events: EventTable) -> np.ndarray:
    """Per-second fixation, saccade, blink and gap time in seconds, shape (n, 4)."""
    n_sec = rec.duration_seconds
    out = np.zeros((n_sec, 4))
    for col, kind in enumerate((EventKind.FIXATION, EventKind.SACCADE, EventKind.BLINK)):
        sel = events.of_kind(kind)
        out[:, col] = _time_in_seconds(events.start[sel], events.end[sel], n_sec)
    out[:, 3] = _time_in_seconds(events.gap_start, events.gap_end, n_sec)
    return out / NS_PER_S


class GazeFeatureExtractor(TransformerMixin, BaseEstimator):
    """Turn recordings into per-second feature series.

    Stateless; ``fit`` only validates parameters.
    """

    def __init__(self, velocity_threshold=30.0, blink_min_ms=70.0, blink_max_ms=500.0, min_fixation_ms=0.0):
        self.velocity_threshold = velocity_threshold
        self.blink_min_ms = blink_min_ms
        self.blink_max_ms = blink_max_ms
        self.min_fixation_ms = min_fixation_ms

    def _config(self) -> IVTConfig:
        return IVTConfig(self.velocity_threshold, self.blink_min_ms, self.blink_max_ms, self.min_fixation_ms)

    def fit(self, X=None, y=None):
        self._config()
        return self

    def transform(self, X) -> list[FeatureSeries]:
        recs = [X] if isinstance(X, GazeRecording) else list(X)
        cfg = self._config()
        return [featurize(rec, cfg=cfg) for rec in recs]

    def __sklearn_is_fitted__(self):
        return True


def write_feature_series(path, series_list) -> None:
    """One JSON record per second: user, task, second_index and the 7 features."""

    def records():
        for fs in series_list:
            for s in range(len(fs)):
                rec = {"user": fs.user_id, "task": fs.task_id, "second_index": s, "flags": int(fs.flags[s])}
                rec.update(zip(FEATURES, fs.values[s].tolist()))
                if s == 0 and fs.summary is not None:
                    rec["summary"] = fs.summary.to_dict()
                yield rec

    write_jsonl(path, records())


def read_feature_series(path) -> list[FeatureSeries]:
    grouped: dict[tuple[str, str], list[dict]] = {}
    for rec in read_jsonl(path):
        grouped.setdefault((str(rec["user"]), str(rec["task"])), []).append(rec)
    out = []
    for (user, task), recs in grouped.items():
        recs.sort(key=lambda r: r["second_index"])
        seconds = [r["second_index"] for r in recs]
        if seconds != list(range(len(recs))):
            raise ValueError(f"{path}: seconds of {user}/{task} are not contiguous from 0")
        values = np.array([[r[f] for f in FEATURES] for r in recs], dtype=float)
        flags = np.array([r.get("flags", 0) for r in recs], dtype=np.int64)
        summary = SampleSummary.from_dict(recs[0]["summary"]) if "summary" in recs[0] else None
        out.append(FeatureSeries(user, task, values, flags, summary))
    return out
