"""Conditional posterior parameters for the factor and noise updates.

Each model places a different prior on the factor matrices but shares the
same Gaussian likelihood over observed entries.  For a single coordinate
w[m, k] (resp. z[k, n]) with everything else fixed, the conditional density
is a normal truncated to [0, inf) whose parent mean and variance follow by
completing the square.  Writing, for the w-side,

    s = sum over observed j of z[k, j]**2
    r = sum over observed j of z[k, j] * (a[m, j] - sum_{i != k} w[m, i] z[i, j])

the five models give

    gee     var = sigma2 / s              mean = (-lam + r/sigma2) * var
    gl12    var = sigma2 / (s + sigma2*lam)   mean = (-lam * sum_{j != k} w[m, j] + r/sigma2) * var
    gl22    var = sigma2 / (s + sigma2*lam)   mean = (r/sigma2) * var
    glinf   var = sigma2 / s              mean = (-lam * is_max + r/sigma2) * var
    gl2inf  var = sigma2 / (s + sigma2*lam)   mean = (-lam * is_max + r/sigma2) * var

where ``is_max`` is 1 exactly when the coordinate is its row's (column's for
the z-side) running maximum, ties resolved to the lowest index.  The z-side
is symmetric with sums over observed rows and its own rate lam.

All sums run over observed entries only.  When s = 0 (no observed data
touches the coordinate, or the interacting factor slice is all zero) the
gee and glinf variances are undefined; callers fall back to the exponential
prior.  The noise variance keeps an inverse-gamma conditional with shape
n_observed/2 + alpha and scale (masked SSE)/2 + beta.

The per-coordinate kernels here are the single source of truth: the public
parameter functions and the Gibbs sweep call the same compiled code.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from numba import njit

from .distributions import InvGammaParams, TruncNormParams
from .matrices import FactorPair, ObservedMatrix, masked_sse, reconstruct


class ModelKind(enum.IntEnum):
    """The five factor priors, in canonical reporting order."""

    GEE = 0
    GL12 = 1
    GL22 = 2
    GLINF = 3
    GL2INF = 4

    @classmethod
    def from_name(cls, name: str) -> "ModelKind":
        try:
            return cls[name.strip().upper()]
        except KeyError:
            valid = ", ".join(m.label for m in cls)
            raise ValueError(f"unknown model {name!r}; expected one of: {valid}") from None

    @property
    def label(self) -> str:
        return self.name.lower()


@dataclass(frozen=True)
class HyperParams:
    """Prior rates for the factors and the inverse-gamma noise prior."""

    lambda_w: float = 0.1
    lambda_z: float = 0.1
    alpha_sigma: float = 1.0
    beta_sigma: float = 1.0

    def __post_init__(self):
        for name in ("lambda_w", "lambda_z", "alpha_sigma", "beta_sigma"):
            value = float(getattr(self, name))
            if not math.isfinite(value) or value <= 0.0:
                raise ValueError(f"{name} must be positive and finite, got {value}")
            object.__setattr__(self, name, value)


class DegenerateConditional(Exception):
    """No data weight at this coordinate: the truncated-normal form is improper.

    Raised only for models whose conditional variance is sigma2/s when s = 0.
    The proper fallback is a draw from the exponential prior.
    """


@njit(cache=True, nogil=True)
def _row_max_is_k(W, m, k):
    # Lowest index attaining the row maximum counts as the maximum.
    best = 0
    best_val = W[m, 0]
    for j in range(1, W.shape[1]):
        if W[m, j] > best_val:
            best_val = W[m, j]
            best = j
    return best == k


@njit(cache=True, nogil=True)
def _col_max_is_k(Z, k, n):
    best = 0
    best_val = Z[0, n]
    for j in range(1, Z.shape[0]):
        if Z[j, n] > best_val:
            best_val = Z[j, n]
            best = j
    return best == k


@njit(cache=True, nogil=True)
def _w_cond(model, m, k, W, Z, sigma2, values, obs, lam):
    K = W.shape[1]
    N = Z.shape[1]
    s = 0.0
    r = 0.0
    for j in range(N):
        if obs[m, j]:
            zkj = Z[k, j]
            if zkj != 0.0:
                pred = 0.0
                for i in range(K):
                    pred += W[m, i] * Z[i, j]
                r += zkj * (values[m, j] - pred + W[m, k] * zkj)
                s += zkj * zkj
    if model == 0:
        shift = -lam
        denom = s
    elif model == 1:
        rest = 0.0
        for j in range(K):
            if j != k:
                rest += W[m, j]
        shift = -lam * rest
        denom = s + sigma2 * lam
    elif model == 2:
        shift = 0.0
        denom = s + sigma2 * lam
    elif model == 3:
        shift = -lam if _row_max_is_k(W, m, k) else 0.0
        denom = s
    else:
        shift = -lam if _row_max_is_k(W, m, k) else 0.0
        denom = s + sigma2 * lam
    if denom == 0.0:
        return 0.0, 0.0, True
    var = sigma2 / denom
    mu = (shift + r / sigma2) * var
    return mu, var, False


@njit(cache=True, nogil=True)
def _z_cond(model, k, n, W, Z, sigma2, values, obs, lam):
    M, K = W.shape
    s = 0.0
    r = 0.0
    for i in range(M):
        if obs[i, n]:
            wik = W[i, k]
            if wik != 0.0:
                pred = 0.0
                for j in range(K):
                    pred += W[i, j] * Z[j, n]
                r += wik * (values[i, n] - pred + wik * Z[k, n])
                s += wik * wik
    if model == 0:
        shift = -lam
        denom = s
    elif model == 1:
        rest = 0.0
        for j in range(K):
            if j != k:
                rest += Z[j, n]
        shift = -lam * rest
        denom = s + sigma2 * lam
    elif model == 2:
        shift = 0.0
        denom = s + sigma2 * lam
    elif model == 3:
        shift = -lam if _col_max_is_k(Z, k, n) else 0.0
        denom = s
    else:
        shift = -lam if _col_max_is_k(Z, k, n) else 0.0
        denom = s + sigma2 * lam
    if denom == 0.0:
        return 0.0, 0.0, True
    var = sigma2 / denom
    mu = (shift + r / sigma2) * var
    return mu, var, False


def _check_common(factors: FactorPair, sigma2: float, data: ObservedMatrix) -> float:
    sigma2 = float(sigma2)
    if not math.isfinite(sigma2) or sigma2 <= 0.0:
        raise ValueError(f"sigma2 must be positive and finite, got {sigma2}")
    if factors.shape != data.shape:
        raise ValueError(
            f"factor product shape {factors.shape} does not match data shape {data.shape}"
        )
    return sigma2


def w_conditional_params(
    model: ModelKind,
    m: int,
    k: int,
    factors: FactorPair,
    sigma2: float,
    data: ObservedMatrix,
    hyper: HyperParams,
) -> TruncNormParams:
    """Parent parameters of the truncated-normal conditional for w[m, k]."""
    sigma2 = _check_common(factors, sigma2, data)
    M, K = factors.W.shape
    if not (0 <= m < M and 0 <= k < K):
        raise IndexError(f"coordinate ({m}, {k}) out of bounds for W of shape {(M, K)}")
    mu, var, degenerate = _w_cond(
        int(model), m, k, factors.W, factors.Z, sigma2,
        data.values, data.mask, hyper.lambda_w,
    )
    if degenerate:
        raise DegenerateConditional(
            f"w[{m},{k}] has zero data weight; conditional reduces to the prior"
        )
    return TruncNormParams(mu, var)


def z_conditional_params(
    model: ModelKind,
    k: int,
    n: int,
    factors: FactorPair,
    sigma2: float,
    data: ObservedMatrix,
    hyper: HyperParams,
) -> TruncNormParams:
    """Parent parameters of the truncated-normal conditional for z[k, n]."""
    sigma2 = _check_common(factors, sigma2, data)
    K, N = factors.Z.shape
    if not (0 <= k < K and 0 <= n < N):
        raise IndexError(f"coordinate ({k}, {n}) out of bounds for Z of shape {(K, N)}")
    mu, var, degenerate = _z_cond(
        int(model), k, n, factors.W, factors.Z, sigma2,
        data.values, data.mask, hyper.lambda_z,
    )
    if degenerate:
        raise DegenerateConditional(
            f"z[{k},{n}] has zero data weight; conditional reduces to the prior"
        )
    return TruncNormParams(mu, var)


def sigma2_conditional_params(
    factors: FactorPair, data: ObservedMatrix, hyper: HyperParams
) -> InvGammaParams:
    """Inverse-gamma conditional for the noise variance.

    Shape grows with the observed count, scale with the masked squared
    reconstruction error; unobserved cells contribute to neither.
    """
    if factors.shape != data.shape:
        raise ValueError(
            f"factor product shape {factors.shape} does not match data shape {data.shape}"
        )
    shape = 0.5 * data.n_observed + hyper.alpha_sigma
    scale = 0.5 * masked_sse(data, reconstruct(factors)) + hyper.beta_sigma
    return InvGammaParams(shape, scale)
