"""Labels, splits, synthetic cohorts and robustness injectors."""
from .inject import inject_label_noise, inject_missing
from .labels import (LEVEL7, LabeledSecond, LoadReport, aggregate_label, interpolate_labels, label_at,
                     labels_by_session, read_labels_csv, read_reports_csv, read_spans_csv, write_labels_csv)
from .split import SplitManifest, split_users
from .synth import ARCHETYPES, Archetype, SynthCohort, SynthConfig, UserParams, schedule, synth_generate

__all__ = [
    "ARCHETYPES", "Archetype", "LEVEL7", "LabeledSecond", "LoadReport", "SplitManifest", "SynthCohort",
    "SynthConfig", "UserParams", "aggregate_label", "inject_label_noise", "inject_missing", "interpolate_labels",
    "label_at", "labels_by_session", "read_labels_csv", "read_reports_csv", "read_spans_csv", "schedule",
    "split_users", "synth_generate", "write_labels_csv",
]
