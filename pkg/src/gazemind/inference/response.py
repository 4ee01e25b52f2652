"""Parsing model output into predictions."""
from __future__ import annotations

import re
from dataclasses import dataclass

from .._constants import LEVELS

_LOAD_LINE = re.compile(r"^[\s*_#>`\-\[(]*cognitive\s+load\s*[*_]*\s*:\s*(.*)$", re.IGNORECASE)
_REASON = re.compile(r"reasoning\s*[*_]*\s*:\s*", re.IGNORECASE)


class ResponseParseError(ValueError):
    pass


@dataclass(frozen=True)
class Prediction:
    label: str
    reasoning: str
    latency: float = 0.0
    backend: str = ""


def parse_response(text: str) -> Prediction:
    """Read the first ``Cognitive Load:`` line and the text after ``Reasoning:``.

    Case, brackets and light markdown around the label are tolerated; any label
    word other than Low, Moderate or High is a parse failure.
    """
    lines = (text or "").splitlines()
    for i, line in enumerate(lines):
        m = _LOAD_LINE.match(line)
        if not m:
            continue
        words = re.findall(r"[A-Za-z]+", m.group(1))
        if not words:
            raise ResponseParseError(f"no label after 'Cognitive Load:' in {line!r}")
        word = words[0].capitalize()
        if word not in LEVELS:
            raise ResponseParseError(f"unknown load label {words[0]!r}")
        rest = "\n".join(lines[i + 1:])
        rm = _REASON.search(rest)
        reasoning = rest[rm.end():].strip() if rm else rest.strip()
        return Prediction(word, reasoning)
    raise ResponseParseError("no 'Cognitive Load:' line in response")
