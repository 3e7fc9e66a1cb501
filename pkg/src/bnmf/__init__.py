"""Bayesian nonnegative matrix factorization by Gibbs sampling.

Factorizes a partially observed nonnegative matrix A as W @ Z under a
Gaussian likelihood restricted to observed entries, with a choice of five
nonnegative factor priors (exponential, squared row-sum, squared entries,
row maximum, and squared entries plus row maximum).  Every factor
coordinate has a truncated-normal full conditional and the noise variance
an inverse-gamma one, so posterior inference is plain Gibbs sampling.

The package ships the sampler, evaluation and noise-robustness tooling,
dataset ingestion with preprocessing recipes, and a CLI experiment harness
that writes CSV/JSON reports with figures.
"""

from .conditionals import (
    DegenerateConditional,
    HyperParams,
    ModelKind,
    sigma2_conditional_params,
    w_conditional_params,
    z_conditional_params,
)
from .distributions import (
    InvGammaParams,
    SamplerError,
    TruncNormParams,
    sample_exponential,
    sample_inverse_gamma,
    sample_truncated_normal,
    truncated_normal_mean,
)
from .evaluate import (
    SplitSpec,
    add_noise,
    evaluate_prediction,
    factor_mean,
    factor_sparsity,
    holdout_split,
    variance_to_mse,
)
from .gibbs import ChainState, Trace, initialize, run_chain, sweep
from .ingest import (
    DataFormatError,
    DatasetRecipe,
    RecipeKind,
    load_csv,
    preprocess,
    synth_gee,
    write_csv,
)
from .matrices import FactorPair, ObservedMatrix, masked_mse, masked_sse, reconstruct
from .streams import derive_seed, make_rng

__version__ = "0.1.0"

__all__ = [
    "ChainState",
    "DataFormatError",
    "DatasetRecipe",
    "DegenerateConditional",
    "FactorPair",
    "HyperParams",
    "InvGammaParams",
    "ModelKind",
    "ObservedMatrix",
    "RecipeKind",
    "SamplerError",
    "SplitSpec",
    "Trace",
    "TruncNormParams",
    "add_noise",
    "derive_seed",
    "evaluate_prediction",
    "factor_mean",
    "factor_sparsity",
    "holdout_split",
    "initialize",
    "load_csv",
    "make_rng",
    "masked_mse",
    "masked_sse",
    "preprocess",
    "reconstruct",
    "run_chain",
    "sample_exponential",
    "sample_inverse_gamma",
    "sample_truncated_normal",
    "sigma2_conditional_params",
    "sweep",
    "synth_gee",
    "truncated_normal_mean",
    "w_conditional_params",
    "write_csv",
    "z_conditional_params",
    "__version__",
]
