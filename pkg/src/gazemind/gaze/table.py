"""Fixed-length temporal feature tables and their markdown form."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .._constants import DEFAULT_WINDOW, FEATURES, N_FEATURES


class InsufficientHistoryError(ValueError):
    pass


@dataclass(eq=False)
class FeatureTable:
    """T x K z-scores ending at ``end_second``; ``cells[j]`` is second end-T+1+j."""

    cells: np.ndarray
    end_second: int
    user_id: str = ""
    task_id: str = ""
    missing: np.ndarray = field(default=None)

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=float)
        if self.cells.ndim != 2 or self.cells.shape[1] != N_FEATURES or self.cells.shape[0] < 1:
            raise ValueError(f"feature table must have shape (T, {N_FEATURES}), got {self.cells.shape}")
        if self.missing is None:
            self.missing = np.zeros(self.cells.shape[0], dtype=bool)

    @property
    def window(self) -> int:
        return int(self.cells.shape[0])

    @property
    def seconds(self) -> range:
        return range(self.end_second - self.window + 1, self.end_second + 1)

    def row(self, feature: str) -> np.ndarray:
        return self.cells[:, FEATURES.index(feature)]

    def row_means(self) -> np.ndarray:
        return self.cells.mean(axis=0)

    def replace_cells(self, cells) -> "FeatureTable":
        return FeatureTable(np.array(cells, dtype=float), self.end_second, self.user_id, self.task_id, self.missing.copy())

    def to_dict(self) -> dict:
        return {
            "user": self.user_id,
            "task": self.task_id,
            "end_second": self.end_second,
            "window": self.window,
            "cells": self.cells.ravel().tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureTable":
        cells = np.asarray(d["cells"], dtype=float).reshape(int(d["window"]), N_FEATURES)
        return cls(cells, int(d["end_second"]), str(d.get("user", "")), str(d.get("task", "")))


def build_table(z_series, end_second: int, T: int = DEFAULT_WINDOW, user_id: str = "", task_id: str = "") -> FeatureTable:
    """Collect the T seconds ending at ``end_second`` from an (n, 7) z-score series.

    Seconds past the end of the series are zero-filled and flagged missing.
    """
    Z = np.asarray(getattr(z_series, "values", z_series), dtype=float).reshape(-1, N_FEATURES)
    if T < 1:
        raise ValueError("window length T must be >= 1")
    if end_second < T - 1:
        raise InsufficientHistoryError(f"end_second {end_second} leaves fewer than T={T} seconds of history")
    start = end_second - T + 1
    cells = np.zeros((T, N_FEATURES))
    avail = max(0, min(end_second + 1, Z.shape[0]) - start)
    cells[:avail] = Z[start:start + avail]
    missing = np.zeros(T, dtype=bool)
    missing[avail:] = True
    return FeatureTable(cells, end_second, user_id, task_id, missing)


def windows_ending(Z: np.ndarray, T: int) -> np.ndarray:
    """All complete T-second windows of a series as an (n-T+1, T, 7) view."""
    Z = np.ascontiguousarray(Z, dtype=float)
    if Z.shape[0] < T:
        return np.zeros((0, T, N_FEATURES))
    return np.lib.stride_tricks.sliding_window_view(Z, T, axis=0).transpose(0, 2, 1)


def _fmt(v: float) -> str:
    r = round(float(v), 2)
    if r == 0:
        r = 0.0
    return f"{r:+.2f}"


def render_markdown(table: FeatureTable) -> str:
    """Render rows = features, columns = t-(T-1) ... t, cells as signed two-decimal numbers."""
    T = table.window
    cols = [f"t-{T - 1 - j}" for j in range(T - 1)] + ["t"]
    lines = [
        "| Feature | " + " | ".join(cols) + " |",
        "|---|" + "---|" * T,
    ]
    for k, name in enumerate(FEATURES):
        lines.append(f"| {name} | " + " | ".join(_fmt(v) for v in table.cells[:, k]) + " |")
    return "\n".join(lines)


def parse_markdown(text: str) -> np.ndarray:
    """Inverse of :func:`render_markdown`: the (T, 7) cell values."""
    rows = [ln.strip() for ln in text.strip().splitlines() if ln.strip().startswith("|")]
    body = rows[2:]
    names = [r.strip("|").split("|")[0].strip() for r in body]
    if tuple(names) != FEATURES:
        raise ValueError(f"unexpected feature rows {names}")
    values = [[float(c) for c in r.strip("|").split("|")[1:]] for r in body]
    return np.asarray(values, dtype=float).T
