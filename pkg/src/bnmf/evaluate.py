"""Holdout evaluation, factor statistics, and noise injection.

Implements the measurement side of the experiment harness: splitting
observed entries into train/test at a given unobserved fraction, scoring a
chain's averaged prediction on held-out cells, summarizing factor sparsity
and magnitude over the trace's snapshot window, perturbing data with scaled
Gaussian noise, and the variance-to-MSE performance ratio.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .gibbs import Trace
from .matrices import ObservedMatrix, masked_mse
from .streams import NOISE_STREAM, SPLIT_STREAM, make_rng


@dataclass(frozen=True)
class SplitSpec:
    """Holdout configuration: fraction of observed entries hidden, and a seed."""

    unobserved_fraction: float
    seed: int

    def __post_init__(self):
        frac = float(self.unobserved_fraction)
        if not math.isfinite(frac) or not 0.0 <= frac < 1.0:
            raise ValueError(
                f"unobserved_fraction must lie in [0, 1), got {frac}"
            )
        object.__setattr__(self, "unobserved_fraction", frac)


def holdout_split(
    data: ObservedMatrix, spec: SplitSpec
) -> tuple[ObservedMatrix, ObservedMatrix]:
    """Partition the observed entries into train and test matrices.

    Exactly ``floor(fraction * n_observed)`` observed cells, chosen uniformly
    without replacement, move to the test mask; the rest stay in the train
    mask.  The two masks are disjoint and union to the original.  Values are
    shared; only the masks differ.
    """
    observed_flat = np.flatnonzero(data.mask.ravel())
    n_test = int(spec.unobserved_fraction * observed_flat.size)
    rng = make_rng(spec.seed, SPLIT_STREAM)
    test_flat = np.zeros(data.values.size, dtype=bool)
    if n_test > 0:
        chosen = rng.choice(observed_flat, size=n_test, replace=False)
        test_flat[chosen] = True
    test_mask = test_flat.reshape(data.shape)
    train_mask = data.mask & ~test_mask
    return (
        ObservedMatrix(data.values, train_mask),
        ObservedMatrix(data.values, test_mask),
    )


def evaluate_prediction(trace: Trace, test: ObservedMatrix) -> float:
    """MSE of the chain's posterior-mean prediction on the test entries."""
    return masked_mse(test, trace.posterior_mean_prediction)


def _snapshot_stat(trace: Trace, stat) -> float:
    if not trace.factor_snapshots:
        raise ValueError("trace has no factor snapshots")
    return float(np.mean([stat(f.W) for _, f in trace.factor_snapshots]))


def factor_sparsity(source, threshold: float = 0.1) -> float:
    """Fraction of W entries strictly below ``threshold``.

    ``source`` may be a matrix or a Trace; for a Trace the fraction is
    averaged over the snapshot window.
    """
    threshold = float(threshold)
    if not math.isfinite(threshold) or threshold <= 0.0:
        raise ValueError(f"threshold must be positive, got {threshold}")
    if isinstance(source, Trace):
        return _snapshot_stat(source, lambda w: np.mean(w < threshold))
    return float(np.mean(np.asarray(source) < threshold))


def factor_mean(source) -> float:
    """Mean W entry; averaged over the snapshot window for a Trace."""
    if isinstance(source, Trace):
        return _snapshot_stat(source, np.mean)
    return float(np.mean(np.asarray(source)))


def add_noise(
    data: ObservedMatrix, noise_to_signal: float, seed: int
) -> ObservedMatrix:
    """Add Gaussian noise scaled to a fraction of the observed variance.

    The noise standard deviation is ``sqrt(ratio * Var(observed))`` with the
    population variance of the observed entries.  Perturbed entries are
    clamped at zero; masked-out cells are untouched.  Ratio 0 returns the
    input unchanged.  At a fixed seed the underlying standard-normal field
    is the same for every ratio, so noise levels are coupled rather than
    independently redrawn.
    """
    ratio = float(noise_to_signal)
    if not math.isfinite(ratio) or ratio < 0.0:
        raise ValueError(f"noise_to_signal must be nonnegative, got {ratio}")
    if ratio == 0.0:
        return data
    sd = math.sqrt(ratio * float(data.observed_values().var()))
    rng = make_rng(seed, NOISE_STREAM)
    field = rng.standard_normal(data.shape)
    values = data.values.copy()
    values[data.mask] = np.maximum(values[data.mask] + sd * field[data.mask], 0.0)
    return ObservedMatrix(values, data.mask)


def variance_to_mse(data_variance: float, test_mse: float) -> float:
    """Ratio of data variance to test MSE; higher means better prediction."""
    data_variance = float(data_variance)
    test_mse = float(test_mse)
    if not (math.isfinite(data_variance) and math.isfinite(test_mse)):
        raise ValueError("variance and MSE must be finite")
    if data_variance < 0.0:
        raise ValueError(f"data variance must be nonnegative, got {data_variance}")
    if test_mse <= 0.0:
        raise ValueError(f"test MSE must be positive, got {test_mse}")
    return data_variance / test_mse
