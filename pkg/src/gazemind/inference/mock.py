"""Deterministic stand-in for the model.

Arbitration follows the prompt's priority order: validated references over
calibrated rules over raw features.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .._constants import FEATURES, LEVELS
from ..gaze.table import FeatureTable
from ..rules import GuidanceRule, rule_vote


@dataclass(frozen=True)
class MockDecision:
    label: str
    provisional: str
    deciding: tuple
    validated: tuple[int, ...]
    excluded: tuple[int, ...]
    override: bool


def _sign(x: float) -> int:
    return int(np.sign(x))


def _word(z: float) -> str:
    return "elevated" if z > 0 else ("lower" if z < 0 else "at baseline")


def arbitrate(rule: GuidanceRule, refs, table: FeatureTable) -> MockDecision:
    if rule is None or not rule.entries:
        raise ValueError("mock prediction needs a rule with at least one entry")
    means = table.row_means()
    level, deciding = rule_vote(rule, means)
    provisional = LEVELS[level]
    top = FEATURES.index(rule.entries[0].feature)
    qsign = _sign(means[top])
    validated, excluded = [], []
    for i, r in enumerate(refs or []):
        cells = r.table.cells if isinstance(r.table, FeatureTable) else np.asarray(r.table)
        if _sign(cells[:, top].mean()) == qsign:
            validated.append(i)
        else:
            excluded.append(i)
    label, override = provisional, False
    if len(validated) >= 2:
        counts = Counter(refs[i].label for i in validated)
        best = max(counts.values())
        if best >= 2:
            # Ties between labels go to the label of the nearest validated reference.
            winners = [refs[i].label for i in validated if counts[refs[i].label] == best]
            label = winners[0]
            override = label != provisional
    return MockDecision(label, provisional, tuple(deciding), tuple(validated), tuple(excluded), override)


def render_mock_text(rule: GuidanceRule, refs, table: FeatureTable, decision: MockDecision) -> str:
    means = table.row_means()
    parts = []
    feats = ", ".join(f"{e.feature} {_word(means[FEATURES.index(e.feature)])} "
                      f"({means[FEATURES.index(e.feature)]:+.2f})" for e in decision.deciding)
    parts.append(f"Task rules point to {decision.provisional} load: {feats}.")
    if decision.excluded:
        names = ", ".join(f"#{i + 1} ({refs[i].label})" for i in decision.excluded)
        parts.append(f"Excluded reference(s) {names}: {rule.entries[0].feature} pattern conflicts with the session.")
    if decision.override:
        names = ", ".join(f"#{i + 1}" for i in decision.validated if refs[i].label == decision.label)
        parts.append(f"Validated reference(s) {names} labeled {decision.label} override the rule estimate.")
    elif decision.validated:
        parts.append("Validated references do not contradict the rule estimate.")
    else:
        parts.append("No validated references; keeping the calibrated rule estimate.")
    return f"Cognitive Load: {decision.label}\nReasoning: " + " ".join(parts)


def mock_predict(rule: GuidanceRule, profile, refs, table: FeatureTable) -> str:
    """Model-shaped text from rule vote, reference validation and override."""
    refs = list(refs or [])
    return render_mock_text(rule, refs, table, arbitrate(rule, refs, table))


@dataclass(frozen=True)
class PredictionRequest:
    """Structured context passed alongside the prompts to the mock backend."""

    rule: GuidanceRule
    profile: object
    refs: tuple = field(default=())
    table: FeatureTable = None

    def mock_response(self) -> str:
        return mock_predict(self.rule, self.profile, list(self.refs), self.table)
