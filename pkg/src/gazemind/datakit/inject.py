"""Label-noise and missing-sample injectors for robustness sweeps."""
from __future__ import annotations

import numpy as np

from .._constants import LEVELS, level_index
from ..gaze.recording import GazeRecording


def inject_label_noise(labels, rate: float, seed: int = 0):
    """Flip exactly round(rate * n) labels to an adjacent level.

    Low and High become Moderate; Moderate becomes Low or High with equal
    odds. The flip order and Moderate coin are drawn once per seed, so the
    flipped set at a lower rate is a subset of the set at a higher rate.
    """
    if not 0 <= rate <= 1:
        raise ValueError(f"noise rate must be in [0, 1], got {rate}")
    as_str = len(labels) > 0 and isinstance(labels[0], str)
    codes = np.array([level_index(v) for v in labels], dtype=int)
    n = codes.shape[0]
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    coin = rng.random(n) < 0.5
    k = int(round(rate * n))
    idx = order[:k]
    out = codes.copy()
    out[idx] = np.where(codes[idx] == 1, np.where(coin[idx], 0, 2), 1)
    if as_str:
        return [LEVELS[c] for c in out]
    return out


def inject_missing(rec: GazeRecording, ratio: float, seed: int = 0) -> GazeRecording:
    """Drop round(ratio * n) valid samples and refill them by linear interpolation.

    Filled samples are marked valid; invalid (blink) samples are never chosen.
    """
    if not 0 <= ratio < 1:
        raise ValueError(f"missing ratio must be in [0, 1), got {ratio}")
    out = rec.copy()
    valid_idx = np.flatnonzero(rec.valid)
    n_drop = min(int(round(ratio * len(rec))), max(valid_idx.shape[0] - 2, 0))
    out.meta["missing_filled"] = n_drop
    if n_drop == 0:
        return out
    rng = np.random.default_rng(seed)
    drop = np.sort(rng.choice(valid_idx, n_drop, replace=False))
    keep = np.setdiff1d(valid_idx, drop, assume_unique=True)
    t = rec.timestamp.astype(float)
    for name in ("yaw", "pitch", "pupil"):
        col = getattr(out, name)
        col[drop] = np.interp(t[drop], t[keep], getattr(rec, name)[keep])
    out.valid[drop] = True
    return out
