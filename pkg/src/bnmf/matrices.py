"""Masked matrices and factor pairs.

The data model is a real matrix with a binary observation mask: entries with
mask 0 are treated as missing everywhere (likelihood sums, error metrics,
posterior updates).  Factorizations are pairs (W, Z) of nonnegative matrices
whose product approximates the observed entries.

All value objects are immutable: arrays are copied on construction and their
write flags cleared, so a state snapshot can never be mutated behind a
chain's back.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _frozen_f64(values) -> np.ndarray:
    out = np.array(values, dtype=np.float64, order="C", copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class ObservedMatrix:
    """A data matrix together with its observation mask.

    Parameters
    ----------
    values : array_like, shape (M, N)
        Matrix entries.  Only entries with ``mask`` True are meaningful;
        masked-out cells are stored but ignored by every operation.
    mask : array_like, shape (M, N)
        Binary observation indicators, coerced to bool.

    Observed entries must be finite and nonnegative.  An all-False mask is
    legal (it arises as the degenerate test split of a fraction-0 holdout);
    operations that need at least one observation check for themselves.
    """

    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        values = _frozen_f64(self.values)
        mask = np.array(self.mask, dtype=bool, order="C", copy=True)
        mask.flags.writeable = False
        if values.ndim != 2:
            raise ValueError(f"values must be 2-D, got shape {values.shape}")
        if mask.shape != values.shape:
            raise ValueError(
                f"mask shape {mask.shape} does not match values shape {values.shape}"
            )
        seen = values[mask]
        if not np.all(np.isfinite(seen)):
            raise ValueError("observed entries must be finite")
        if seen.size and seen.min() < 0.0:
            raise ValueError("observed entries must be nonnegative")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def n_observed(self) -> int:
        return int(self.mask.sum())

    def observed_values(self) -> np.ndarray:
        """Return the observed entries as a flat array."""
        return self.values[self.mask]


@dataclass(frozen=True)
class FactorPair:
    """Nonnegative factor matrices W (M, K) and Z (K, N)."""

    W: np.ndarray
    Z: np.ndarray

    def __post_init__(self):
        W = _frozen_f64(self.W)
        Z = _frozen_f64(self.Z)
        if W.ndim != 2 or Z.ndim != 2:
            raise ValueError("factors must be 2-D")
        if W.shape[1] != Z.shape[0]:
            raise ValueError(
                f"inner dimensions differ: W is {W.shape}, Z is {Z.shape}"
            )
        for name, arr in (("W", W), ("Z", Z)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} entries must be finite")
            if arr.size and arr.min() < 0.0:
                raise ValueError(f"{name} entries must be nonnegative")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "Z", Z)

    @property
    def rank(self) -> int:
        return self.W.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return (self.W.shape[0], self.Z.shape[1])


def reconstruct(factors: FactorPair) -> np.ndarray:
    """Return the dense product W @ Z."""
    return factors.W @ factors.Z


def masked_sse(data: ObservedMatrix, prediction: np.ndarray) -> float:
    """Sum of squared errors over observed entries only."""
    prediction = np.asarray(prediction, dtype=np.float64)
    if prediction.shape != data.shape:
        raise ValueError(
            f"prediction shape {prediction.shape} does not match data shape {data.shape}"
        )
    if data.n_observed == 0:
        raise ValueError("empty mask: no observed entries to score")
    diff = data.values[data.mask] - prediction[data.mask]
    return float(diff @ diff)


def masked_mse(data: ObservedMatrix, prediction: np.ndarray) -> float:
    """Mean squared error over observed entries only."""
    return masked_sse(data, prediction) / data.n_observed
