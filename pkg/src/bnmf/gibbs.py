"""Gibbs sampler over factor entries and the noise variance.

One sweep visits, for each latent index k: every w[m, k] for m = 1..M, then
every z[k, n] for n = 1..N, drawing each coordinate from its truncated-normal
conditional given the freshest values of everything else (updates happen in
place, so later coordinates within a sweep see earlier draws).  After the
factor pass the noise variance is redrawn from its inverse-gamma conditional.

Each conditional recomputes the rank-K prediction for the coordinate's row
or column from scratch, so a sweep costs O(M N K^2) multiply-adds.  The
sweep body is numba-compiled; a full default run on a desk-scale matrix
takes well under a second.

Randomness comes from one counter-based Philox stream per chain, keyed by
the seed.  Kernel-side and Python-side draws share the same generator, so a
chain is one reproducible sequence: same inputs and seed give bit-identical
traces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .conditionals import (
    HyperParams,
    ModelKind,
    _w_cond,
    _z_cond,
    sigma2_conditional_params,
)
from .distributions import (
    InvGammaParams,
    SamplerError,
    _tn_draw,
    sample_inverse_gamma,
)
from .matrices import FactorPair, ObservedMatrix, masked_mse, reconstruct
from .streams import make_rng

SIGMA2_FLOOR = 1e-12


@dataclass(frozen=True)
class ChainState:
    """One Gibbs iteration's full state.

    The generator is shared along the chain: advancing the chain advances
    ``rng`` in place, so only the newest state's ``rng_position`` reflects
    the stream.  (seed, position) fully determine all future draws.
    """

    factors: FactorPair
    sigma2: float
    iteration: int
    rng_seed: int
    rng: np.random.Generator

    def __post_init__(self):
        sigma2 = float(self.sigma2)
        if not math.isfinite(sigma2) or sigma2 <= 0.0:
            raise ValueError(f"sigma2 must be positive and finite, got {sigma2}")
        if self.iteration < 0:
            raise ValueError("iteration must be nonnegative")
        object.__setattr__(self, "sigma2", sigma2)

    @property
    def rng_position(self) -> tuple[int, ...]:
        """Philox counter plus buffer offset; identifies the stream position."""
        state = self.rng.bit_generator.state
        counter = tuple(int(c) for c in state["state"]["counter"])
        return counter + (int(state["buffer_pos"]),)


@dataclass(frozen=True)
class Trace:
    """Per-iteration summaries and post-burn-in aggregates of one chain."""

    train_mse: np.ndarray
    sigma2_history: np.ndarray
    factor_snapshots: tuple[tuple[int, FactorPair], ...]
    posterior_mean_prediction: np.ndarray


@njit(cache=True, nogil=True)
def _sweep_kernel(model, W, Z, sigma2, values, obs, lam_w, lam_z, rng):
    M, K = W.shape
    N = Z.shape[1]
    for k in range(K):
        for m in range(M):
            mu, var, degenerate = _w_cond(model, m, k, W, Z, sigma2, values, obs, lam_w)
            if degenerate:
                W[m, k] = rng.standard_exponential() / lam_w
            else:
                if not (np.isfinite(mu) and np.isfinite(var) and var > 0.0):
                    return 1
                W[m, k] = _tn_draw(mu, var, rng)
        for n in range(N):
            mu, var, degenerate = _z_cond(model, k, n, W, Z, sigma2, values, obs, lam_z)
            if degenerate:
                Z[k, n] = rng.standard_exponential() / lam_z
            else:
                if not (np.isfinite(mu) and np.isfinite(var) and var > 0.0):
                    return 1
                Z[k, n] = _tn_draw(mu, var, rng)
    return 0


def initialize(
    data: ObservedMatrix, k: int, hyper: HyperParams, seed: int
) -> ChainState:
    """Draw a fresh chain state from the priors.

    Factor entries are i.i.d. exponential with the configured rates (W in
    row-major order, then Z), and the noise variance comes from its
    inverse-gamma prior, floored at ``SIGMA2_FLOOR``.
    """
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    if data.n_observed == 0:
        raise ValueError("cannot fit a matrix with no observed entries")
    M, N = data.shape
    rng = make_rng(seed)
    W = rng.standard_exponential((M, k)) / hyper.lambda_w
    Z = rng.standard_exponential((k, N)) / hyper.lambda_z
    prior = InvGammaParams(hyper.alpha_sigma, hyper.beta_sigma)
    sigma2 = max(sample_inverse_gamma(prior, rng), SIGMA2_FLOOR)
    return ChainState(FactorPair(W, Z), sigma2, 0, int(seed), rng)


def sweep(
    state: ChainState, data: ObservedMatrix, model: ModelKind, hyper: HyperParams
) -> ChainState:
    """Advance the chain by one full Gibbs sweep."""
    if state.factors.shape != data.shape:
        raise ValueError(
            f"state shape {state.factors.shape} does not match data shape {data.shape}"
        )
    W = state.factors.W.copy()
    Z = state.factors.Z.copy()
    status = _sweep_kernel(
        int(model), W, Z, state.sigma2, data.values, data.mask,
        hyper.lambda_w, hyper.lambda_z, state.rng,
    )
    if status != 0:
        raise SamplerError(
            f"non-finite conditional parameters at iteration {state.iteration + 1}"
        )
    factors = FactorPair(W, Z)
    post = sigma2_conditional_params(factors, data, hyper)
    sigma2 = max(sample_inverse_gamma(post, state.rng), SIGMA2_FLOOR)
    return ChainState(factors, sigma2, state.iteration + 1, state.rng_seed, state.rng)


def run_chain(
    data: ObservedMatrix,
    k: int,
    model: ModelKind,
    hyper: HyperParams | None = None,
    t: int = 500,
    burn_in: int = 300,
    seed: int = 0,
    snapshot_window: int = 20,
) -> Trace:
    """Run a full chain and collect its trace.

    Parameters
    ----------
    data : ObservedMatrix
        Matrix to factorize; masked-out entries never enter any update.
    k : int
        Latent dimension.
    model : ModelKind
        Which factor prior to use.
    hyper : HyperParams, optional
        Prior rates; defaults match the model defaults.
    t, burn_in : int
        Total sweeps and how many initial sweeps to discard when averaging
        predictions.
    seed : int
        Chain seed; same inputs and seed reproduce the trace bit for bit.
    snapshot_window : int
        How many final iterations keep full factor snapshots.

    Returns
    -------
    Trace
        Per-iteration training MSE and noise variance, factor snapshots of
        the last ``snapshot_window`` iterations, and the mean reconstruction
        over all post-burn-in iterations.
    """
    if hyper is None:
        hyper = HyperParams()
    if t < 1:
        raise ValueError(f"t must be at least 1, got {t}")
    if not 0 <= burn_in < t:
        raise ValueError(f"burn_in must lie in [0, t), got {burn_in} with t={t}")
    if not 1 <= snapshot_window <= t:
        raise ValueError(
            f"snapshot_window must lie in [1, t], got {snapshot_window} with t={t}"
        )
    state = initialize(data, k, hyper, seed)
    train_mse = np.empty(t)
    sigma2_history = np.empty(t)
    prediction_sum = np.zeros(data.shape)
    snapshots: list[tuple[int, FactorPair]] = []
    for it in range(1, t + 1):
        state = sweep(state, data, model, hyper)
        prediction = reconstruct(state.factors)
        train_mse[it - 1] = masked_mse(data, prediction)
        sigma2_history[it - 1] = state.sigma2
        if it > burn_in:
            prediction_sum += prediction
        if it > t - snapshot_window:
            snapshots.append((it, state.factors))
    posterior_mean = prediction_sum / (t - burn_in)
    posterior_mean.flags.writeable = False
    train_mse.flags.writeable = False
    sigma2_history.flags.writeable = False
    return Trace(train_mse, sigma2_history, tuple(snapshots), posterior_mean)
