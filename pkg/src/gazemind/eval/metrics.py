"""Confusion matrices, macro metrics and per-user accuracy distributions."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .._constants import LEVELS
from .._io import atomic_open


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows are true levels, columns predicted levels; ``errors[i]`` counts
    unparseable predictions for true level i."""

    counts: np.ndarray
    errors: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum() + self.errors.sum())

    def as_array(self) -> np.ndarray:
        """3 x 4 array with the error column last."""
        return np.column_stack([self.counts, self.errors])

    def to_markdown(self) -> str:
        lines = ["| true \\ pred | " + " | ".join(LEVELS) + " | error |", "|---|---|---|---|---|"]
        for i, name in enumerate(LEVELS):
            lines.append(f"| {name} | " + " | ".join(str(int(v)) for v in self.as_array()[i]) + " |")
        return "\n".join(lines)


def _code(v) -> int:
    """0/1/2 for a level, -1 for anything else (an error record)."""
    if v is None:
        return -1
    if isinstance(v, str):
        for i, name in enumerate(LEVELS):
            if v.strip().lower() == name.lower():
                return i
        return -1
    v = int(v)
    return v if v in (0, 1, 2) else -1


def confusion(predictions, labels) -> ConfusionMatrix:
    predictions = list(predictions)
    labels = list(labels)
    if len(predictions) != len(labels):
        raise ValueError(f"{len(predictions)} predictions but {len(labels)} labels")
    counts = np.zeros((3, 3), dtype=np.int64)
    errors = np.zeros(3, dtype=np.int64)
    for p, y in zip(predictions, labels):
        t = _code(y)
        if t < 0:
            raise ValueError(f"unknown true label {y!r}")
        c = _code(p)
        if c < 0:
            errors[t] += 1
        else:
            counts[t, c] += 1
    return ConfusionMatrix(counts, errors)


@dataclass(frozen=True)
class MetricReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    per_class: dict
    n: int
    n_errors: int = 0

    def to_dict(self) -> dict:
        return {"accuracy": self.accuracy, "precision": self.precision, "recall": self.recall, "f1": self.f1,
                "n": self.n, "n_errors": self.n_errors, "per_class": self.per_class}

    def row(self) -> dict:
        return {"accuracy": f"{self.accuracy:.6f}", "precision": f"{self.precision:.6f}",
                "recall": f"{self.recall:.6f}", "f1": f"{self.f1:.6f}", "n": str(self.n), "errors": str(self.n_errors)}


def _ratio(a: float, b: float) -> float:
    return a / b if b else 0.0


def metrics(cm: ConfusionMatrix) -> MetricReport:
    """Accuracy plus macro precision / recall / F1 (0/0 counts as 0)."""
    total = cm.total
    if total == 0:
        raise ValueError("cannot compute metrics on an empty confusion matrix")
    C = cm.counts.astype(float)
    per = {}
    ps, rs, fs = [], [], []
    for i, name in enumerate(LEVELS):
        tp = C[i, i]
        p = _ratio(tp, C[:, i].sum())
        r = _ratio(tp, C[i].sum() + cm.errors[i])
        f = _ratio(2 * p * r, p + r)
        per[name] = {"precision": p, "recall": r, "f1": f, "support": int(C[i].sum() + cm.errors[i])}
        ps.append(p)
        rs.append(r)
        fs.append(f)
    return MetricReport(float(np.trace(C)) / total, sum(ps) / 3, sum(rs) / 3, sum(fs) / 3, per, total,
                        int(cm.errors.sum()))


def format_report(report: MetricReport, cm: ConfusionMatrix | None = None, title: str = "") -> str:
    """Human-readable summary with fixed precision, stable across runs."""
    lines = [title] if title else []
    lines += [
        f"n = {report.n} (unparseable: {report.n_errors})",
        f"accuracy  = {report.accuracy:.4f}",
        f"precision = {report.precision:.4f} (macro)",
        f"recall    = {report.recall:.4f} (macro)",
        f"f1        = {report.f1:.4f} (macro)",
    ]
    for name in LEVELS:
        pc = report.per_class[name]
        lines.append(f"  {name:<8} P={pc['precision']:.4f} R={pc['recall']:.4f} F1={pc['f1']:.4f} support={pc['support']}")
    if cm is not None:
        lines += ["", cm.to_markdown()]
    return "\n".join(lines) + "\n"


def write_metric_rows(path, rows: list[dict]) -> None:
    """CSV of metric rows; column order follows the first row."""
    with atomic_open(path, newline="") as fh:
        if not rows:
            return
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def per_user_accuracy(predictions: dict, labels: dict) -> dict:
    """Accuracy per user from {(user, task): per-second labels} dicts."""
    hits: dict = {}
    for key, pred in predictions.items():
        truth = labels[key]
        if len(pred) != len(truth):
            raise ValueError(f"{key}: {len(pred)} predictions for {len(truth)} labelled seconds")
        h, n = hits.get(key[0], (0, 0))
        hits[key[0]] = (h + sum(_code(p) == _code(y) for p, y in zip(pred, truth)), n + len(truth))
    if not hits:
        raise ValueError("empty prediction log")
    return {u: h / n for u, (h, n) in sorted(hits.items())}


def accuracy_cdf(acc: dict) -> list[tuple[float, float]]:
    """Empirical CDF steps: (accuracy, fraction of users at or below it)."""
    vals = np.sort(np.fromiter(acc.values(), dtype=float))
    n = vals.shape[0]
    out = []
    for i, v in enumerate(vals):
        if i + 1 < n and vals[i + 1] == v:
            continue
        out.append((float(v), (i + 1) / n))
    return out


def write_per_user(path_users, path_cdf, acc: dict) -> None:
    with atomic_open(path_users, newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["user", "accuracy"])
        for u, a in acc.items():
            w.writerow([u, f"{a:.6f}"])
    with atomic_open(path_cdf, newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["accuracy", "cum_fraction"])
        for a, f in accuracy_cdf(acc):
            w.writerow([f"{a:.6f}", f"{f:.6f}"])
