"""Input validation helpers shared by the estimators and metric functions."""

from __future__ import annotations

from typing import Optional

import numpy as np

from .schema import LabelSchema, PostLabelSet

BLOCK_SUM_TOL = 1e-6  # float32 targets: vote fractions round-trip within this


def check_beta(beta: float) -> float:
    if not (0.0 <= beta <= 1.0):
        raise ValueError(f"beta must be in [0, 1], got {beta!r}")
    return float(beta)


def check_features(X, n_features: Optional[int] = None) -> np.ndarray:
    """Coerce X to a finite 2-D float32 array, optionally enforcing the feature dim."""
    x = np.asarray(X, dtype=np.float32)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    if x.ndim != 2:
        raise ValueError(f"expected a 2-D feature array, got shape {x.shape}")
    if x.shape[1] == 0:
        raise ValueError("feature array has zero columns")
    if not np.all(np.isfinite(x)):
        raise ValueError("feature array contains non-finite values")
    if n_features is not None and x.shape[1] != n_features:
        raise ValueError(f"expected {n_features} features, got {x.shape[1]}")
    return x


def targets_matrix(Y, schema: LabelSchema, require_valid: bool = True, dtype=np.float32) -> np.ndarray:
    """Stack label sets (or pass through an array) as an (n, total_dim) matrix.

    With ``require_valid`` each block must be nonnegative and either all-zero
    or sum to 1 within float32 tolerance. Training uses the float32 default;
    metric/objective paths pass float64.
    """
    if isinstance(Y, np.ndarray):
        t = np.asarray(Y, dtype=dtype)
        if t.ndim == 1:
            t = t.reshape(1, -1)
    else:
        rows = []
        for item in Y:
            if isinstance(item, PostLabelSet):
                rows.append(item.to_values())
            else:
                rows.append(list(np.asarray(item, dtype=np.float64).reshape(-1)))
        t = np.asarray(rows, dtype=dtype)
        if t.size == 0:
            t = t.reshape(0, schema.total_dim)
    if t.ndim != 2 or t.shape[1] != schema.total_dim:
        raise ValueError(f"expected (n, {schema.total_dim}) targets, got shape {t.shape}")
    if require_valid and t.shape[0] > 0:
        if np.any(t < 0):
            raise ValueError("negative entries in target blocks")
        start = 0
        for block in schema.blocks:
            sums = t[:, start : start + block.size].sum(axis=1, dtype=np.float64)
            bad = ~(np.isclose(sums, 1.0, atol=BLOCK_SUM_TOL) | (sums == 0.0))
            if np.any(bad):
                i = int(np.argmax(bad))
                raise ValueError(
                    f"row {i}: block {block.name!r} sums to {sums[i]!r}, expected 1 or all-zero"
                )
            start += block.size
    return t
