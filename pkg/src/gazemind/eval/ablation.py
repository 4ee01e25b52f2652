"""Grid runner over window lengths and module toggles."""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace

from ..pipeline import Dataset, PipelineConfig, run_experiment
from .metrics import write_metric_rows

logger = logging.getLogger(__name__)

MODULE_CELLS = (
    ("full", {}),
    ("no_rules", {"use_rules": False}),
    ("no_profiles", {"use_profiles": False}),
    ("no_retrieval", {"use_retrieval": False}),
    ("features_only", {"use_rules": False, "use_profiles": False, "use_retrieval": False}),
)


def ablation_grid(windows=None, modules: bool = False) -> list[tuple[str, dict]]:
    cells = []
    for T in windows or ():
        cells.append((f"T={int(T)}", {"window": int(T)}))
    if modules:
        cells.extend(MODULE_CELLS)
    if not cells:
        raise ValueError("ablation grid is empty")
    return cells


@dataclass(frozen=True)
class AblationRow:
    cell: str
    overrides: dict
    accuracy: float | None
    precision: float | None
    recall: float | None
    f1: float | None
    n: int
    wall_seconds: float
    mean_latency: float
    error: str = ""

    def to_dict(self, timing: bool = True) -> dict:
        f = lambda v: "" if v is None else f"{v:.6f}"  # noqa: E731
        d = {"cell": self.cell, "accuracy": f(self.accuracy), "precision": f(self.precision),
             "recall": f(self.recall), "f1": f(self.f1), "n": str(self.n)}
        if timing:
            d["wall_seconds"] = f"{self.wall_seconds:.3f}"
            d["mean_latency"] = f"{self.mean_latency:.6f}"
        d["error"] = self.error
        return d


def run_ablations(ds: Dataset, cells, base: PipelineConfig = PipelineConfig(), backend=None, split=None) -> list[AblationRow]:
    """Run the pipeline once per cell; a failing cell is recorded and the grid continues."""
    cells = list(cells)
    if not cells:
        raise ValueError("ablation grid is empty")
    rows = []
    for name, overrides in cells:
        try:
            cfg = replace(base, **overrides)
            res = run_experiment(ds, cfg, backend=backend, split=split)
            r = res.report
            rows.append(AblationRow(name, dict(overrides), r.accuracy, r.precision, r.recall, r.f1, r.n,
                                    res.seconds, res.mean_latency))
        except Exception as exc:  # noqa: BLE001 - one bad cell must not stop the grid
            logger.warning("ablation cell %s failed: %s", name, exc)
            rows.append(AblationRow(name, dict(overrides), None, None, None, None, 0, 0.0, 0.0,
                                    f"{type(exc).__name__}: {exc}"))
    return rows


def write_ablation_csv(path, rows, timing: bool = True) -> None:
    write_metric_rows(path, [r.to_dict(timing) for r in rows])
