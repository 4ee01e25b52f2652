"""Feature-sign perturbations and explanation scoring."""
from __future__ import annotations

import csv
import re
from dataclasses import dataclass

import numpy as np

from .._constants import FEATURES, feature_index
from .._io import atomic_open
from ..gaze.table import FeatureTable

UP_WORDS = ("increase", "rising", "higher", "elevated")
DOWN_WORDS = ("decrease", "falling", "lower", "suppressed")
HEURISTIC_VERSION = 1


def perturb_feature(table: FeatureTable, feature: str) -> FeatureTable:
    """Negate one feature's z-scores at every time step."""
    k = feature_index(feature)
    cells = table.cells.copy()
    cells[:, k] = -cells[:, k]
    return table.replace_cells(cells)


def _words(text: str) -> set:
    return set(re.findall(r"[a-z_]+", text.lower()))


def names_feature(text: str, feature: str) -> bool:
    return feature in _words(text)


def direction_consistent(text: str, feature: str, new_mean: float) -> bool:
    """Explanation names the feature and a direction word matching its new sign."""
    if not names_feature(text, feature) or new_mean == 0:
        return False
    words = _words(text)
    wanted = UP_WORDS if new_mean > 0 else DOWN_WORDS
    return any(w in words for w in wanted)


@dataclass(frozen=True)
class CounterfactualRow:
    task_id: str
    feature: str
    rank: int
    n: int
    n_flipped: int
    flip_rate: float
    direction_correct: float
    attribution_correct: float

    def to_dict(self) -> dict:
        return {
            "task": self.task_id, "feature": self.feature, "rank": self.rank, "n": self.n, "flipped": self.n_flipped,
            "flip_rate": f"{self.flip_rate:.2f}", "direction_correct": f"{self.direction_correct:.2f}",
            "attribution_correct": f"{self.attribution_correct:.2f}",
        }


@dataclass
class CounterfactualReport:
    rows: list[CounterfactualRow]
    flips: dict

    def save_csv(self, path) -> None:
        with atomic_open(path, newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["task", "feature", "rank", "n", "flipped", "flip_rate", "direction_correct", "attribution_correct"])
            for r in self.rows:
                d = r.to_dict()
                w.writerow([d[c] for c in ("task", "feature", "rank", "n", "flipped", "flip_rate",
                                           "direction_correct", "attribution_correct")])


def counterfactual_run(samples, features, predict, task_id: str = "") -> CounterfactualReport:
    """Perturb each ranked feature in turn and re-predict every sample.

    ``samples`` are feature tables; ``predict(table)`` returns an object with
    ``label`` and ``reasoning``. Rates are percentages; direction and
    attribution are scored over flipped samples only.
    """
    samples = list(samples)
    base = [predict(t) for t in samples]
    rows, flips = [], {}
    for rank, feature in enumerate(features, 1):
        k = feature_index(feature)
        flipped = dir_ok = attr_ok = 0
        mask = []
        for table, b in zip(samples, base):
            pt = perturb_feature(table, feature)
            p = predict(pt)
            changed = p.label != b.label
            mask.append(changed)
            if changed:
                flipped += 1
                attr_ok += names_feature(p.reasoning, feature)
                dir_ok += direction_consistent(p.reasoning, feature, float(pt.cells[:, k].mean()))
        n = len(samples)
        flips[feature] = np.array(mask, dtype=bool)
        rows.append(CounterfactualRow(
            task_id, feature, rank, n, flipped,
            100.0 * flipped / n if n else 0.0,
            100.0 * dir_ok / flipped if flipped else 0.0,
            100.0 * attr_ok / flipped if flipped else 0.0,
        ))
    return CounterfactualReport(rows, flips)


__all__ = ["CounterfactualReport", "CounterfactualRow", "DOWN_WORDS", "FEATURES", "UP_WORDS", "counterfactual_run",
           "direction_consistent", "names_feature", "perturb_feature"]
