import numpy as np
import pytest

from bnmf import (
    ModelKind,
    ObservedMatrix,
    SplitSpec,
    add_noise,
    evaluate_prediction,
    factor_mean,
    factor_sparsity,
    holdout_split,
    masked_mse,
    run_chain,
    variance_to_mse,
)
from bnmf.streams import make_rng


def dataset(seed=13, m=20, n=15):
    rng = make_rng(seed)
    values = np.abs(rng.standard_normal((m, n))) + 0.1
    mask = rng.random((m, n)) < 0.9
    mask[0, 0] = True
    return ObservedMatrix(values, mask)


def test_split_partitions_the_observed_mask():
    data = dataset()
    train, test = holdout_split(data, SplitSpec(0.3, seed=4))
    assert not (train.mask & test.mask).any()
    np.testing.assert_array_equal(train.mask | test.mask, data.mask)
    assert test.n_observed == int(0.3 * data.n_observed)
    assert train.n_observed + test.n_observed == data.n_observed
    np.testing.assert_array_equal(train.values, data.values)
    np.testing.assert_array_equal(test.values, data.values)


def test_split_is_seed_deterministic():
    data = dataset()
    t1 = holdout_split(data, SplitSpec(0.4, seed=9))[1]
    t2 = holdout_split(data, SplitSpec(0.4, seed=9))[1]
    t3 = holdout_split(data, SplitSpec(0.4, seed=10))[1]
    np.testing.assert_array_equal(t1.mask, t2.mask)
    assert not np.array_equal(t1.mask, t3.mask)


def test_split_fraction_zero_yields_empty_test():
    data = dataset()
    train, test = holdout_split(data, SplitSpec(0.0, seed=1))
    assert test.n_observed == 0
    np.testing.assert_array_equal(train.mask, data.mask)


def test_split_spec_validation():
    with pytest.raises(ValueError):
        SplitSpec(1.0, seed=0)
    with pytest.raises(ValueError):
        SplitSpec(-0.1, seed=0)
    with pytest.raises(ValueError):
        SplitSpec(np.nan, seed=0)


def test_evaluate_prediction_scores_test_cells_only():
    data = dataset()
    train, test = holdout_split(data, SplitSpec(0.25, seed=2))
    trace = run_chain(train, 2, ModelKind.GEE, t=30, burn_in=10, seed=3)
    got = evaluate_prediction(trace, test)
    assert got == masked_mse(test, trace.posterior_mean_prediction)
    with pytest.raises(ValueError, match="no observed entries"):
        empty = holdout_split(data, SplitSpec(0.0, seed=2))[1]
        evaluate_prediction(trace, empty)


def test_factor_stats_on_plain_matrices():
    w = np.array([[0.05, 2.0], [0.2, 0.01]])
    assert factor_sparsity(w) == pytest.approx(0.5)
    assert factor_sparsity(w, threshold=0.5) == pytest.approx(0.75)
    assert factor_mean(w) == pytest.approx(w.mean())
    with pytest.raises(ValueError):
        factor_sparsity(w, threshold=0.0)


def test_factor_stats_average_over_trace_snapshots():
    data = dataset()
    trace = run_chain(data, 2, ModelKind.GL22, t=25, burn_in=10, seed=6, snapshot_window=4)
    per_snapshot = [np.mean(f.W < 0.1) for _, f in trace.factor_snapshots]
    assert factor_sparsity(trace) == pytest.approx(np.mean(per_snapshot))
    per_mean = [f.W.mean() for _, f in trace.factor_snapshots]
    assert factor_mean(trace) == pytest.approx(np.mean(per_mean))


def big_valued(seed=3):
    rng = make_rng(seed)
    values = rng.standard_normal((40, 40)) * 5.0 + 100.0
    mask = rng.random((40, 40)) < 0.95
    return ObservedMatrix(np.maximum(values, 0.0), mask)


def test_add_noise_ratio_zero_is_identity():
    data = big_valued()
    assert add_noise(data, 0.0, seed=5) is data


def test_add_noise_hits_the_requested_variance():
    data = big_valued()
    base_var = data.observed_values().var()
    noisy = add_noise(data, 0.5, seed=5)
    got_var = (noisy.observed_values() - data.observed_values()).var()
    # injected variance = 0.5 * base variance, up to sampling error
    assert got_var == pytest.approx(0.5 * base_var, rel=0.15)
    np.testing.assert_array_equal(noisy.mask, data.mask)


def test_add_noise_fields_are_coupled_across_ratios():
    # One seed draws one normal field; ratios only rescale it.
    data = big_valued()
    d1 = add_noise(data, 0.1, seed=8).observed_values() - data.observed_values()
    d2 = add_noise(data, 0.4, seed=8).observed_values() - data.observed_values()
    # Deltas come back through (values + sd*z) - values, so low bits of the
    # O(100)-scale entries wash out; compare with an absolute floor.
    np.testing.assert_allclose(d2, 2.0 * d1, rtol=1e-12, atol=1e-10)


def test_add_noise_clamps_at_zero_and_skips_masked_cells():
    values = np.array([[0.01, 5.0], [3.0, 7.0]])
    mask = np.array([[True, True], [False, True]])
    data = ObservedMatrix(values, mask)
    noisy = add_noise(data, 4.0, seed=1)
    assert np.all(noisy.observed_values() >= 0.0)
    assert noisy.values[1, 0] == values[1, 0]


def test_add_noise_validation():
    data = big_valued()
    with pytest.raises(ValueError):
        add_noise(data, -0.5, seed=0)
    with pytest.raises(ValueError):
        add_noise(data, np.inf, seed=0)


def test_variance_to_mse():
    assert variance_to_mse(8.0, 2.0) == pytest.approx(4.0)
    with pytest.raises(ValueError):
        variance_to_mse(8.0, 0.0)
    with pytest.raises(ValueError):
        variance_to_mse(-1.0, 2.0)
    with pytest.raises(ValueError):
        variance_to_mse(np.nan, 2.0)
