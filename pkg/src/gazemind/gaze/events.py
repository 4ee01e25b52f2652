"""Velocity-threshold (I-VT) segmentation into fixations, saccades and blinks."""
from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .recording import GazeRecording

logger = logging.getLogger(__name__)

FIX, SAC, INVALID = 0, 1, 2


class EventKind(str, Enum):
    FIXATION = "fixation"
    SACCADE = "saccade"
    BLINK = "blink"


_KIND_CODES = {EventKind.FIXATION: 0, EventKind.SACCADE: 1, EventKind.BLINK: 2}
_CODE_KINDS = {v: k for k, v in _KIND_CODES.items()}


@dataclass(frozen=True)
class IVTConfig:
    """I-VT parameters.

    velocity_threshold is in deg/s. Invalid-sample runs lasting between
    ``blink_min_ms`` and ``blink_max_ms`` become blinks; other invalid runs
    are gaps. Fixation runs shorter than ``min_fixation_ms`` are relabelled
    as saccade samples (0 disables the merge).
    """

    velocity_threshold: float = 30.0
    blink_min_ms: float = 70.0
    blink_max_ms: float = 500.0
    min_fixation_ms: float = 0.0

    def __post_init__(self):
        if self.velocity_threshold <= 0:
            raise ValueError("velocity_threshold must be positive")
        if not 0 <= self.blink_min_ms <= self.blink_max_ms:
            raise ValueError("blink range must satisfy 0 <= min <= max")
        if self.min_fixation_ms < 0:
            raise ValueError("min_fixation_ms must be >= 0")


@dataclass(frozen=True)
class GazeEvent:
    kind: EventKind
    start: int
    end: int
    amplitude: float | None = None

    @property
    def duration_ns(self) -> int:
        return self.end - self.start


@dataclass(eq=False)
class EventTable(Sequence):
    """Detected events stored as parallel arrays.

    Iterating yields :class:`GazeEvent` objects in start order. Invalid runs
    that did not qualify as blinks are kept separately in ``gap_start`` /
    ``gap_end`` so per-second time accounting stays complete.
    """

    kind: np.ndarray
    start: np.ndarray
    end: np.ndarray
    amplitude: np.ndarray
    gap_start: np.ndarray
    gap_end: np.ndarray
    warnings: list[str] = field(default_factory=list)

    @classmethod
    def empty(cls, warnings=()) -> "EventTable":
        i64 = np.zeros(0, dtype=np.int64)
        return cls(np.zeros(0, dtype=np.int8), i64, i64.copy(), np.zeros(0), i64.copy(), i64.copy(), list(warnings))

    def __len__(self) -> int:
        return int(self.kind.shape[0])

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        kind = _CODE_KINDS[int(self.kind[i])]
        amp = float(self.amplitude[i]) if kind is EventKind.SACCADE else None
        return GazeEvent(kind, int(self.start[i]), int(self.end[i]), amp)

    def of_kind(self, kind: EventKind) -> np.ndarray:
        return np.flatnonzero(self.kind == _KIND_CODES[EventKind(kind)])


def _runs(codes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Start (inclusive) and stop (exclusive) indices of maximal equal-value runs."""
    change = np.flatnonzero(codes[1:] != codes[:-1]) + 1
    starts = np.concatenate(([0], change))
    stops = np.concatenate((change, [codes.shape[0]]))
    return starts, stops


def detect_events(rec: GazeRecording, cfg: IVTConfig | None = None) -> EventTable:
    """Segment a recording into fixation, saccade and blink events.

    Each sample owns the time span up to the next sample (the last sample owns
    one nominal period). A valid sample takes the angular speed of the pair it
    starts; if that pair is unusable it falls back to the pair it ends, and an
    isolated valid sample counts as fixation. Events are maximal runs of
    same-class samples.
    """
    cfg = cfg or IVTConfig()
    n = len(rec)
    if int(rec.valid.sum()) < 2:
        return EventTable.empty(["fewer than 2 valid samples; no events detected"])

    ts = rec.timestamp
    valid = rec.valid
    dt = np.diff(ts)
    pair_valid = valid[:-1] & valid[1:]
    pair_ok = pair_valid & (dt > 0)
    warnings = []
    n_zero = int(np.count_nonzero(pair_valid & (dt == 0)))
    if n_zero:
        warnings.append(f"{n_zero} sample pair(s) with zero time step skipped")
        logger.warning("%s/%s: %d zero-length sample interval(s)", rec.user_id, rec.task_id, n_zero)

    speed = np.full(n - 1, np.nan)
    d_ang = np.hypot(np.diff(rec.yaw)[pair_ok], np.diff(rec.pitch)[pair_ok])
    speed[pair_ok] = d_ang / (dt[pair_ok] * 1e-9)

    v = np.full(n, np.nan)
    v[:-1] = speed
    fill = np.isnan(v[1:])
    v[1:][fill] = speed[fill]
    codes = np.where(v >= cfg.velocity_threshold, SAC, FIX).astype(np.int8)
    codes[~valid] = INVALID

    owned_end = np.empty(n, dtype=np.int64)
    owned_end[:-1] = ts[1:]
    owned_end[-1] = ts[-1] + rec.sample_period_ns

    starts, stops = _runs(codes)
    if cfg.min_fixation_ms > 0:
        run_codes = codes[starts]
        dur = owned_end[stops - 1] - ts[starts]
        short = (run_codes == FIX) & (dur < cfg.min_fixation_ms * 1e6)
        if short.any():
            for a, b in zip(starts[short], stops[short]):
                codes[a:b] = SAC
            starts, stops = _runs(codes)

    run_codes = codes[starts]
    run_start = ts[starts]
    run_end = owned_end[stops - 1]

    inv = run_codes == INVALID
    inv_dur_ms = (run_end - run_start) * 1e-6
    blink = inv & (inv_dur_ms >= cfg.blink_min_ms) & (inv_dur_ms <= cfg.blink_max_ms)
    gap = inv & ~blink

    keep = ~gap
    kind = np.where(blink, 2, run_codes)[keep].astype(np.int8)

    amplitude = np.full(starts.shape[0], np.nan)
    sac = np.flatnonzero(run_codes == SAC)
    if sac.size:
        first = starts[sac]
        last = stops[sac] - 1
        # The final saccade sample's speed came from the pair it starts, so the
        # movement ends at the following sample.
        forward = np.zeros(last.shape[0], dtype=bool)
        inner = last < n - 1
        forward[inner] = pair_ok[last[inner]]
        end_idx = np.where(forward, last + 1, last)
        amplitude[sac] = np.hypot(rec.yaw[end_idx] - rec.yaw[first], rec.pitch[end_idx] - rec.pitch[first])

    return EventTable(
        kind=kind,
        start=run_start[keep],
        end=run_end[keep],
        amplitude=amplitude[keep],
        gap_start=run_start[gap],
        gap_end=run_end[gap],
        warnings=warnings,
    )
