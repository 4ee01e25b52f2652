from collections import Counter

import numpy as np
import pytest

from gazemind._constants import FEATURES, LEVELS, NS_PER_S
from gazemind.datakit.synth import SynthConfig, synth_generate
from gazemind.gaze.recording import GazeRecording
from gazemind.pipeline import build_dataset


def make_recording(yaw, pitch=None, pupil=300.0, valid=None, rate=90.0, user="u1", task="reading"):
    """Recording sampled at exactly ``rate`` Hz from per-sample arrays."""
    yaw = np.asarray(yaw, dtype=float)
    n = yaw.shape[0]
    pitch = np.zeros(n) if pitch is None else np.asarray(pitch, dtype=float)
    pupil = np.broadcast_to(np.asarray(pupil, dtype=float), (n,)).copy()
    valid = np.ones(n, dtype=bool) if valid is None else np.asarray(valid, dtype=bool)
    yaw = np.where(valid, yaw, np.nan)
    pitch = np.where(valid, pitch, np.nan)
    pupil = np.where(valid, pupil, np.nan)
    ts = np.round(np.arange(n) * (NS_PER_S / rate)).astype(np.int64)
    return GazeRecording(user, task, ts, yaw, pitch, pupil, valid, rate)


@pytest.fixture(scope="session")
def small_cohort():
    return synth_generate(SynthConfig(n_users=12, duration_s=180, noise_scale=0.25, seed=11))


@pytest.fixture(scope="session")
def small_dataset(small_cohort):
    return build_dataset(small_cohort.recordings, small_cohort.labels)


def arbitration_oracle(rule, refs, cells):
    """Direct evaluation of the arbitration steps, written independently of the package."""
    means = cells.mean(axis=0)
    score = [0.0, 0.0, 0.0]
    for e in rule.entries:
        z = means[FEATURES.index(e.feature)]
        lo, hi = e.cutpoints
        if e.direction == "+":
            lvl = 0 if z < lo else (1 if z < hi else 2)
        else:
            lvl = 0 if z > hi else (1 if z > lo else 2)
        score[lvl] += 1.0 / e.rank
    best = max(score)
    provisional = LEVELS[score.index(best)] if score.count(best) == 1 else None
    if provisional is None:
        # tie: the best-ranked entry whose level is among the tied maxima decides
        tied = {i for i in range(3) if score[i] == best}
        for e in rule.entries:
            z = means[FEATURES.index(e.feature)]
            lo, hi = e.cutpoints
            lvl = (0 if z < lo else (1 if z < hi else 2)) if e.direction == "+" else (0 if z > hi else (1 if z > lo else 2))
            if lvl in tied:
                provisional = LEVELS[lvl]
                break
    top = FEATURES.index(rule.entries[0].feature)
    q = np.sign(means[top])
    valid = [r for r in refs if np.sign(r.table.cells[:, top].mean()) == q]
    if len(valid) >= 2:
        counts = Counter(r.label for r in valid)
        n = max(counts.values())
        if n >= 2:
            return next(r.label for r in valid if counts[r.label] == n)
    return provisional
