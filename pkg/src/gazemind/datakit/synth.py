"""Synthetic 90 Hz gaze cohorts with known per-second load labels.

Each user is drawn from one of three archetypes whose baselines sit near the
reported profile centroids. Per second, the scheduled load level shifts the
pupil, fixation length, saccade length/amplitude and blink rate in the
direction typical for the task. ``noise_scale`` multiplies every stochastic
term, so a scale of 0 produces exactly the target behaviour.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .._constants import DEFAULT_RATE_HZ, DEFAULT_SEED, LEVELS, NS_PER_S, TASKS
from .._io import write_text
from ..gaze.recording import GazeRecording, write_gaze_csv
from .labels import LabeledSecond, write_labels_csv


@dataclass(frozen=True)
class Archetype:
    name: str
    pupil_baseline: float
    pupil_gain: float
    blink_rate: float
    dispersion: float
    fixation_samples: float = 24.0

    def __post_init__(self):
        for k in ("pupil_baseline", "pupil_gain", "blink_rate", "dispersion", "fixation_samples"):
            if not getattr(self, k) > 0:
                raise ValueError(f"archetype {self.name}: {k} must be positive")


ARCHETYPES = (
    Archetype("High-Reactor", 388.62, 117.0, 1.00, 8.00),
    Archetype("Low-Reactor", 300.00, 54.0, 0.85, 6.88),
    Archetype("Restless", 198.87, 70.0, 2.04, 11.43, fixation_samples=18.0),
)

AUDIO_BLOCKS = (1, 2, 3, 2, 1, 2, 3, 2, 1)
_CYCLE = (0, 1, 2, 1)

# Direction of each behavioural shift per unit of load (level - 1).
# fix: relative fixation length, sac: saccade samples, amp: relative amplitude,
# blink: relative blink rate, pupil: sign of the pupil gain.
TASK_EFFECTS = {
    "reading": {"fix": 0.25, "sac": -1, "amp": 0.0, "blink": -0.2, "pupil": 1.0},
    "gaming": {"fix": -0.25, "sac": 0, "amp": -0.25, "blink": -0.2, "pupil": 1.0},
    "audio": {"fix": 0.15, "sac": 0, "amp": 0.0, "blink": -0.2, "pupil": 1.0},
}

SACCADE_SAMPLES = 4
BLINK_SAMPLES = 9
AMPLITUDE = 4.0
MIN_AMPLITUDE = 2.5


@dataclass(frozen=True)
class SynthConfig:
    n_users: int = 30
    tasks: tuple[str, ...] = TASKS
    duration_s: int = 300
    block_s: int = 60
    audio_block_s: int = 30
    archetype_mix: tuple[float, float, float] = (1.0, 1.0, 1.0)
    noise_scale: float = 0.25
    seed: int = DEFAULT_SEED
    rate_hz: float = DEFAULT_RATE_HZ

    def __post_init__(self):
        if self.n_users < 1:
            raise ValueError("n_users must be >= 1")
        if self.noise_scale < 0:
            raise ValueError("noise_scale must be >= 0")
        if any(t not in TASKS for t in self.tasks):
            raise ValueError(f"unknown task in {self.tasks}")
        if len(self.archetype_mix) != len(ARCHETYPES) or min(self.archetype_mix) < 0 or sum(self.archetype_mix) <= 0:
            raise ValueError("archetype_mix needs three non-negative weights")
        if self.rate_hz != int(self.rate_hz):
            raise ValueError("rate_hz must be a whole number of samples per second")
        if self.duration_s < 3 * self.block_s and any(t != "audio" for t in self.tasks):
            raise ValueError("duration_s must cover at least three blocks so every level occurs")


@dataclass(frozen=True)
class UserParams:
    user_id: str
    archetype: str
    pupil_baseline: float
    pupil_gain: float
    blink_rate: float
    dispersion: float
    fixation_samples: float
    amplitude: float


@dataclass
class SessionTruth:
    """Per-second generator targets, used to check feature extraction."""

    levels: np.ndarray
    pupil: np.ndarray
    fix_samples: np.ndarray
    sac_samples: np.ndarray
    amplitude: np.ndarray
    blink_rate: np.ndarray


@dataclass
class SynthCohort:
    config: SynthConfig
    users: list[UserParams]
    recordings: list[GazeRecording]
    labels: dict = field(default_factory=dict)
    truth: dict = field(default_factory=dict)

    @property
    def archetypes(self) -> dict:
        return {u.user_id: u.archetype for u in self.users}

    def label_rows(self) -> list[LabeledSecond]:
        rows = []
        for (user, task), levels in sorted(self.labels.items()):
            rows.extend(LabeledSecond(user, task, s, LEVELS[int(c)], "synthetic") for s, c in enumerate(levels))
        return rows

    def save(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for rec in self.recordings:
            write_gaze_csv(out / f"{rec.user_id}_{rec.task_id}.csv", rec)
        write_labels_csv(out / "labels.csv", self.label_rows())
        meta = {"config": asdict(self.config), "users": [asdict(u) for u in self.users]}
        write_text(out / "cohort.json", json.dumps(meta, indent=2, sort_keys=True) + "\n")


def schedule(task: str, cfg: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    """Per-second load codes (0/1/2).

    Audio runs fixed 1-2-3-2-1-... back blocks; the other tasks step through
    Low-Moderate-High-Moderate blocks from a random starting phase.
    """
    if task == "audio":
        blocks = [n - 1 for n in AUDIO_BLOCKS]
        return np.repeat(np.array(blocks, dtype=np.int8), cfg.audio_block_s)
    n_blocks = math.ceil(cfg.duration_s / cfg.block_s)
    # Only phases whose blocks reach every level, so short sessions still cover Low and High.
    phases = [p for p in range(len(_CYCLE))
              if {_CYCLE[(p + i) % len(_CYCLE)] for i in range(n_blocks)} == {0, 1, 2}]
    start = phases[int(rng.integers(len(phases)))]
    blocks = [_CYCLE[(start + i) % len(_CYCLE)] for i in range(n_blocks)]
    return np.repeat(np.array(blocks, dtype=np.int8), cfg.block_s)[: cfg.duration_s]


def _assign_archetypes(cfg: SynthConfig, rng) -> list[int]:
    w = np.asarray(cfg.archetype_mix, dtype=float)
    raw = w / w.sum() * cfg.n_users
    counts = np.floor(raw).astype(int)
    for i in np.argsort(-(raw - counts), kind="stable")[: cfg.n_users - counts.sum()]:
        counts[i] += 1
    codes = np.repeat(np.arange(len(ARCHETYPES)), counts)
    return [int(c) for c in rng.permutation(codes)]


def _draw_user(user_id: str, arch: Archetype, ns: float, rng) -> UserParams:
    z = rng.standard_normal(6)
    return UserParams(
        user_id,
        arch.name,
        arch.pupil_baseline * (1 + 0.08 * ns * z[0]),
        arch.pupil_gain * max(0.2, 1 + 0.15 * ns * z[1]),
        arch.blink_rate * max(0.2, 1 + 0.10 * ns * z[2]),
        arch.dispersion * max(0.2, 1 + 0.10 * ns * z[3]),
        arch.fixation_samples * max(0.5, 1 + 0.10 * ns * z[4]),
        AMPLITUDE * max(0.7, 1 + 0.08 * ns * z[5]),
    )


def session_targets(user: UserParams, task: str, levels: np.ndarray) -> SessionTruth:
    eff = TASK_EFFECTS[task]
    c = levels.astype(float) - 1.0
    return SessionTruth(
        levels=levels.astype(np.int8),
        pupil=user.pupil_baseline + eff["pupil"] * user.pupil_gain * c,
        fix_samples=user.fixation_samples * (1 + eff["fix"] * c),
        sac_samples=(SACCADE_SAMPLES + eff["sac"] * c).astype(int),
        amplitude=np.maximum(MIN_AMPLITUDE, user.amplitude * (1 + eff["amp"] * c)),
        blink_rate=user.blink_rate * (1 + eff["blink"] * c),
    )


def simulate_session(user: UserParams, task: str, truth: SessionTruth, ns: float, rng, rate: int) -> GazeRecording:
    """Emit fixation / saccade / blink segments that realise ``truth`` per second."""
    n_sec = truth.levels.shape[0]
    N = n_sec * rate
    yaw = np.full(N, np.nan)
    pitch = np.full(N, np.nan)
    valid = np.zeros(N, dtype=bool)
    # Slow circular drift advances only during fixations, so saccade
    # amplitudes stay exact while overall dispersion tracks the user trait.
    radius = math.sqrt(max(user.dispersion**2 - 0.5 * user.amplitude**2, 1.0))
    omega = 2 * math.pi / (25.0 * rate)
    walk = np.zeros(2)
    fix_count = 0
    acc = 0.0
    pos = 0
    while pos < N:
        s = pos // rate
        L = int(round(truth.fix_samples[s] + ns * 4.0 * rng.standard_normal()))
        L = max(L, 6)
        m = int(truth.sac_samples[s])
        amp = max(MIN_AMPLITUDE, truth.amplitude[s] + ns * 0.8 * rng.standard_normal())
        n = min(L, N - pos)
        k = fix_count + np.arange(n)
        jitter = ns * 0.05 * rng.standard_normal((2, n))
        yaw[pos:pos + n] = walk[0] + radius * np.cos(omega * k) + jitter[0]
        pitch[pos:pos + n] = walk[1] + radius * np.sin(omega * k) + jitter[1]
        valid[pos:pos + n] = True
        fix_count += n
        pos += n
        if pos >= N:
            break
        theta = math.atan2(-walk[1], -walk[0]) + rng.uniform(-2.0, 2.0)
        step = amp * np.array([math.cos(theta), math.sin(theta)])
        m_eff = min(m, N - pos)
        frac = np.arange(1, m_eff + 1) / m
        dx, dy = radius * math.cos(omega * fix_count), radius * math.sin(omega * fix_count)
        yaw[pos:pos + m_eff] = walk[0] + dx + step[0] * frac
        pitch[pos:pos + m_eff] = walk[1] + dy + step[1] * frac
        valid[pos:pos + m_eff] = True
        walk = walk + step
        pos += m_eff
        acc += truth.blink_rate[min(s, n_sec - 1)] * (L + m) / rate * max(0.0, 1 + ns * 0.3 * rng.standard_normal())
        if acc >= 1.0 and pos < N:
            acc -= 1.0
            nb = max(7, int(round(BLINK_SAMPLES + ns * 2.0 * rng.standard_normal())))
            pos += min(nb, N - pos)
    sec = np.arange(N) // rate
    pupil = truth.pupil[sec] + ns * 25.0 * rng.standard_normal(n_sec)[sec] + ns * 8.0 * rng.standard_normal(N)
    pupil = np.maximum(pupil, 1.0)
    pupil[~valid] = np.nan
    ts = np.round(np.arange(N) * (NS_PER_S / rate)).astype(np.int64)
    return GazeRecording(user.user_id, task, ts, yaw, pitch, pupil, valid, float(rate), {"archetype": user.archetype})


def synth_generate(cfg: SynthConfig | None = None) -> SynthCohort:
    """Generate a cohort. Byte-reproducible for a fixed config."""
    cfg = cfg or SynthConfig()
    root = np.random.default_rng(cfg.seed)
    arch_codes = _assign_archetypes(cfg, root)
    width = max(2, len(str(cfg.n_users)))
    users, recordings, labels, truth = [], [], {}, {}
    for i in range(cfg.n_users):
        user_id = f"u{i + 1:0{width}d}"
        urng = np.random.default_rng([cfg.seed, i])
        params = _draw_user(user_id, ARCHETYPES[arch_codes[i]], cfg.noise_scale, urng)
        users.append(params)
        for task in cfg.tasks:
            srng = np.random.default_rng([cfg.seed, i, TASKS.index(task)])
            levels = schedule(task, cfg, srng)
            tr = session_targets(params, task, levels)
            recordings.append(simulate_session(params, task, tr, cfg.noise_scale, srng, int(cfg.rate_hz)))
            labels[(user_id, task)] = levels
            truth[(user_id, task)] = tr
    return SynthCohort(cfg, users, recordings, labels, truth)


def load_cohort_meta(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
