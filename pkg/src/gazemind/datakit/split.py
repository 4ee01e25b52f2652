"""Cross-user train/test splits."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .._constants import DEFAULT_SEED
from .._io import write_text


@dataclass(frozen=True)
class SplitManifest:
    train: tuple[str, ...]
    test: tuple[str, ...]

    def save(self, path) -> None:
        lines = ["# train", *self.train, "# test", *self.test]
        write_text(path, "\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "SplitManifest":
        groups = {"train": [], "test": []}
        current = None
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    current = line.lstrip("#").strip().lower()
                    if current not in groups:
                        raise ValueError(f"{path}:{lineno}: unknown split section {current!r}")
                    continue
                if current is None:
                    raise ValueError(f"{path}:{lineno}: user id before any '# train' / '# test' header")
                groups[current].append(line)
        overlap = set(groups["train"]) & set(groups["test"])
        if overlap:
            raise ValueError(f"{path}: users in both splits: {', '.join(sorted(overlap))}")
        return cls(tuple(groups["train"]), tuple(groups["test"]))


def split_users(users, ratio: float = 0.7, seed: int = DEFAULT_SEED) -> SplitManifest:
    """Seeded shuffle of the sorted user ids; round(ratio * n) go to train."""
    if not 0 < ratio < 1:
        raise ValueError(f"split ratio must be in (0, 1), got {ratio}")
    users = sorted({str(u) for u in users})
    n = len(users)
    n_train = int(round(ratio * n))
    if n >= 2:
        n_train = min(max(n_train, 1), n - 1)
    perm = np.random.default_rng(seed).permutation(n)
    train = sorted(users[i] for i in perm[:n_train])
    test = sorted(users[i] for i in perm[n_train:])
    return SplitManifest(tuple(train), tuple(test))
