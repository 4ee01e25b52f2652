"""Input checks shared by the estimators."""
from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array

from ._constants import FEATURES, N_FEATURES, level_index


def check_feature_matrix(X, *, allow_empty: bool = False) -> np.ndarray:
    """Return ``X`` as a float (n, 7) array, rejecting NaN/inf."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1 and X.shape[0] == N_FEATURES:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != N_FEATURES:
        raise ValueError(f"expected an (n, {N_FEATURES}) feature matrix, got shape {X.shape}")
    if X.shape[0] == 0:
        if allow_empty:
            return X
        raise ValueError("empty feature matrix")
    return check_array(X, dtype=float)


def check_labels(y, n: int | None = None) -> np.ndarray:
    """Convert level names or codes to an int array of 0/1/2."""
    arr = np.asarray(y)
    if arr.dtype.kind in "iu":
        codes = arr.astype(np.int64)
        bad = codes[(codes < 0) | (codes > 2)]
        if bad.size:
            raise ValueError(f"unknown load level code {bad[0]}")
    else:
        codes = np.array([level_index(v) for v in arr.ravel()], dtype=np.int64)
    if n is not None and codes.shape[0] != n:
        raise ValueError(f"label length {codes.shape[0]} does not match {n} samples")
    return codes


def check_feature_name(name: str) -> str:
    if name not in FEATURES:
        raise ValueError(f"unknown feature {name!r}; expected one of {', '.join(FEATURES)}")
    return name
