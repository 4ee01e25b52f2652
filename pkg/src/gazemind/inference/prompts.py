"""Prompt templates and assembly."""
from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

from .._constants import FEATURES
from ..gaze.normalize import PopulationStats
from ..gaze.table import FeatureTable, render_markdown
from ..rules import TASK_NAMES, GuidanceRule, RuleEntry

_SLOT = re.compile(r"\{([a-z_]+)\}")
NO_REFERENCES = "No reference examples available."
USER_SLOTS = ("task_name", "time_window", "task_guidance", "user_profile_traits", "rag_context", "feature_table")

GENERIC_GUIDANCE = (
    "No task-specific rules are available. Use the generic feature definitions:\n"
    "larger pupils and fewer blinks usually accompany higher cognitive load."
)
POPULATION_PROFILE = (
    "No user-specific profile or calibration is available.\n"
    "Interpret every z-score against the population baseline (0.0)."
)

_PROFILE_NOTES = {
    "High-Reactor": "Large resting pupil and strong pupil response to demand; small pupil changes matter less.",
    "Low-Reactor": "Muted pupil response to demand; even modest pupil increases can signal higher load.",
    "Restless": "Frequent blinking and unstable gaze at rest; blink and saccade surges are partly habitual.",
}


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    text = resources.files(__package__).joinpath("templates", f"{name}.txt").read_text(encoding="utf-8")
    return text[:-1] if text.endswith("\n") else text


def _fill(template: str, values: dict) -> str:
    # Single pass, so braces inside filled values are left alone.
    return _SLOT.sub(lambda m: str(values[m.group(1)]) if m.group(1) in values else m.group(0), template)


@dataclass(frozen=True)
class PromptPair:
    system: str
    user: str


def generic_rule(task_id: str) -> GuidanceRule:
    """Stand-in rule used when task-specific rules are switched off."""
    entries = (
        RuleEntry("avg_pupil_size", 1, "+", (-0.5, 0.5)),
        RuleEntry("blink_count", 2, "-", (-0.5, 0.5)),
    )
    return GuidanceRule(task_id, entries, GENERIC_GUIDANCE, provenance="generic", source="generic")


def render_profile_text(profile, stats: PopulationStats | None = None) -> str:
    """Profile type, trait notes and personal baselines expressed as z-scores."""
    if profile is None:
        return POPULATION_PROFILE
    lines = [f"Profile type: {profile.name}"]
    note = _PROFILE_NOTES.get(profile.name)
    if note:
        lines.append(f"Traits: {note}")
    t = profile.traits
    lines.append(
        f"Trait values: blink intensity {t.blink_intensity:.2f}/s, pupil sensitivity {t.pupil_sensitivity:.2f}, "
        f"pupil baseline {t.pupil_baseline:.2f}, gaze instability {t.gaze_instability:.2f} deg"
    )
    b = profile.baselines
    if stats is not None and b:
        pi, bi = FEATURES.index("avg_pupil_size"), FEATURES.index("blink_count")
        zp = 0.0 if stats.degenerate[pi] else (b["pupil_mean"] - stats.mean[pi]) / stats.std[pi]
        zb = 0.0 if stats.degenerate[bi] else (b["blink_mean"] - stats.mean[bi]) / stats.std[bi]
        lines.append(f"Calibration baselines (z): avg_pupil_size {zp:+.2f}, blink_count {zb:+.2f}")
        lines.append(
            "Calibration: read avg_pupil_size and blink_count relative to these personal baselines "
            "rather than relative to 0.0."
        )
    elif b:
        lines.append(f"Calibration baselines (raw): pupil {b['pupil_mean']:.2f}, blinks {b['blink_mean']:.2f}/s")
    return "\n".join(lines)


def render_rag_context(refs) -> str:
    refs = list(refs or [])
    if not refs:
        return NO_REFERENCES
    blocks = []
    for i, r in enumerate(refs, 1):
        table = r.table if isinstance(r.table, FeatureTable) else FeatureTable(r.table, -1)
        blocks.append(f"Reference Example {i}:\n{render_markdown(table)}\nLabel: {r.label}")
    return "\n\n".join(blocks)


def assemble_prompts(rule: GuidanceRule | None, profile, refs, table: FeatureTable, task_id: str,
                     T: int | None = None, stats: PopulationStats | None = None) -> PromptPair:
    """Fill the system and user templates. Pure: same inputs give the same bytes."""
    T = int(T if T is not None else table.window)
    if table.window != T:
        raise ValueError(f"table has {table.window} columns but window is {T}")
    guidance = rule.prompt_text if rule is not None else GENERIC_GUIDANCE
    values = {
        "task_name": TASK_NAMES.get(task_id, task_id),
        "time_window": T,
        "task_guidance": guidance,
        "user_profile_traits": render_profile_text(profile, stats),
        "rag_context": render_rag_context(refs),
        "feature_table": render_markdown(table),
    }
    return PromptPair(_fill(load_template("system"), {"time_window": T}), _fill(load_template("user"), values))


__all__ = [
    "NO_REFERENCES", "PromptPair", "assemble_prompts", "generic_rule", "load_template",
    "render_profile_text", "render_rag_context", "USER_SLOTS",
]
