"""Raw gaze recordings and CSV ingestion."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .._constants import DEFAULT_RATE_HZ, NS_PER_S, TASKS
from .._io import atomic_open

CSV_COLUMNS = ("timestamp_ns", "yaw_deg", "pitch_deg", "pupil", "valid")


class GazeParseError(ValueError):
    """A row of a gaze file could not be parsed."""

    def __init__(self, path, lineno: int, message: str):
        self.path = str(path)
        self.lineno = lineno
        super().__init__(f"{path}:{lineno}: {message}")


class EmptyRecordingError(ValueError):
    pass


@dataclass(frozen=True)
class GazeSample:
    timestamp: int
    yaw: float
    pitch: float
    pupil: float
    valid: bool


@dataclass(eq=False)
class GazeRecording:
    """Column-oriented gaze samples for one user performing one task.

    Timestamps are integer nanoseconds since recording start. Samples with
    ``valid == False`` carry no trusted yaw/pitch/pupil values.
    """

    user_id: str
    task_id: str
    timestamp: np.ndarray
    yaw: np.ndarray
    pitch: np.ndarray
    pupil: np.ndarray
    valid: np.ndarray
    nominal_rate: float = DEFAULT_RATE_HZ
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.timestamp = np.asarray(self.timestamp, dtype=np.int64)
        self.yaw = np.asarray(self.yaw, dtype=float)
        self.pitch = np.asarray(self.pitch, dtype=float)
        self.pupil = np.asarray(self.pupil, dtype=float)
        self.valid = np.asarray(self.valid, dtype=bool)
        n = self.timestamp.shape[0]
        for name in ("yaw", "pitch", "pupil", "valid"):
            if getattr(self, name).shape != (n,):
                raise ValueError(f"column {name} has shape {getattr(self, name).shape}, expected ({n},)")
        if self.task_id not in TASKS:
            raise ValueError(f"unknown task {self.task_id!r}; expected one of {', '.join(TASKS)}")

    def __len__(self) -> int:
        return int(self.timestamp.shape[0])

    @property
    def sample_period_ns(self) -> int:
        return int(round(NS_PER_S / self.nominal_rate))

    @property
    def duration_seconds(self) -> int:
        if len(self) == 0:
            return 0
        return int(math.ceil(int(self.timestamp[-1]) / NS_PER_S))

    @property
    def samples(self) -> list[GazeSample]:
        return [
            GazeSample(int(t), float(y), float(p), float(d), bool(v))
            for t, y, p, d, v in zip(self.timestamp, self.yaw, self.pitch, self.pupil, self.valid)
        ]

    @classmethod
    def from_samples(cls, user_id, task_id, samples, nominal_rate=DEFAULT_RATE_HZ) -> "GazeRecording":
        samples = list(samples)
        return cls(
            user_id=user_id,
            task_id=task_id,
            timestamp=[s.timestamp for s in samples],
            yaw=[s.yaw for s in samples],
            pitch=[s.pitch for s in samples],
            pupil=[s.pupil for s in samples],
            valid=[s.valid for s in samples],
            nominal_rate=nominal_rate,
        )

    def copy(self) -> "GazeRecording":
        return GazeRecording(
            self.user_id,
            self.task_id,
            self.timestamp.copy(),
            self.yaw.copy(),
            self.pitch.copy(),
            self.pupil.copy(),
            self.valid.copy(),
            self.nominal_rate,
            dict(self.meta),
        )


def _trusted(yaw: float, pitch: float, pupil: float) -> bool:
    return math.isfinite(yaw) and math.isfinite(pitch) and math.isfinite(pupil) and pupil > 0


def _parse_float(text: str) -> float:
    text = text.strip()
    if text == "":
        return math.nan
    return float(text)


def read_gaze_csv(
    path,
    user_id: str | None = None,
    task_id: str | None = None,
    schema: Mapping[str, str] | None = None,
    nominal_rate: float = DEFAULT_RATE_HZ,
) -> GazeRecording:
    """Read a raw gaze CSV into a :class:`GazeRecording`.

    ``schema`` maps the canonical column names (``timestamp_ns``, ``yaw_deg``,
    ``pitch_deg``, ``pupil``, ``valid``) to the header names used in the file.
    Rows whose yaw, pitch or pupil are not finite (or pupil <= 0) are kept but
    marked invalid. When ``user_id``/``task_id`` are omitted they are taken
    from a ``<user>_<task>.csv`` file name.
    """
    path = Path(path)
    if user_id is None or task_id is None:
        stem_user, _, stem_task = path.stem.rpartition("_")
        user_id = user_id if user_id is not None else stem_user
        task_id = task_id if task_id is not None else stem_task
    colmap = {c: c for c in CSV_COLUMNS}
    if schema:
        colmap.update(schema)

    ts, yaw, pitch, pupil, valid = [], [], [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise EmptyRecordingError(f"{path}: empty file")
        header = [h.strip() for h in header]
        missing = [colmap[c] for c in CSV_COLUMNS if colmap[c] not in header]
        if missing:
            raise GazeParseError(path, 1, f"missing required column(s): {', '.join(missing)}")
        idx = [header.index(colmap[c]) for c in CSV_COLUMNS]
        width = len(header)
        prev_t = None
        for row in reader:
            lineno = reader.line_num
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != width:
                raise GazeParseError(path, lineno, f"expected {width} fields, found {len(row)}")
            try:
                t = int(row[idx[0]])
                y = _parse_float(row[idx[1]])
                p = _parse_float(row[idx[2]])
                d = _parse_float(row[idx[3]])
                flag = row[idx[4]].strip()
            except ValueError as exc:
                raise GazeParseError(path, lineno, str(exc)) from None
            if flag not in ("0", "1"):
                raise GazeParseError(path, lineno, f"valid must be 0 or 1, found {flag!r}")
            if prev_t is not None and t < prev_t:
                raise GazeParseError(path, lineno, f"timestamp {t} is earlier than the previous row ({prev_t})")
            prev_t = t
            ts.append(t)
            yaw.append(y)
            pitch.append(p)
            pupil.append(d)
            valid.append(flag == "1" and _trusted(y, p, d))
    if not ts:
        raise EmptyRecordingError(f"{path}: no samples")
    return GazeRecording(user_id, task_id, ts, yaw, pitch, pupil, valid, nominal_rate)


def write_gaze_csv(path, rec: GazeRecording) -> None:
    with atomic_open(path, newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for t, y, p, d, v in zip(rec.timestamp.tolist(), rec.yaw.tolist(), rec.pitch.tolist(),
                                 rec.pupil.tolist(), rec.valid.tolist()):
            if v:
                writer.writerow((t, repr(y), repr(p), repr(d), 1))
            else:
                writer.writerow((t, "nan", "nan", "nan", 0))
