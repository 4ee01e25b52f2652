"""Names and defaults shared across the pipeline."""

FEATURES = (
    "fix_dur",
    "sac_dur",
    "sac_amp",
    "fix_ratio",
    "sac_ratio",
    "blink_count",
    "avg_pupil_size",
)
N_FEATURES = len(FEATURES)

LEVELS = ("Low", "Moderate", "High")
TASKS = ("reading", "gaming", "audio")
EVAL_TASKS = ("reading", "gaming")
CALIBRATION_TASK = "audio"

NS_PER_S = 1_000_000_000
DEFAULT_RATE_HZ = 90.0
DEFAULT_WINDOW = 5
DEFAULT_K = 3
DEFAULT_SEED = 42


def feature_index(name: str) -> int:
    try:
        return FEATURES.index(name)
    except ValueError:
        raise ValueError(f"unknown feature {name!r}; expected one of {', '.join(FEATURES)}") from None


def level_index(label) -> int:
    """Map a level name (any case) or integer code to 0/1/2."""
    if isinstance(label, str):
        for i, name in enumerate(LEVELS):
            if label.strip().lower() == name.lower():
                return i
        raise ValueError(f"unknown load level {label!r}")
    code = int(label)
    if code not in (0, 1, 2):
        raise ValueError(f"unknown load level code {label!r}")
    return code
