"""Command line front end.

Subcommands map onto the experiment protocols: ``fit`` runs a single chain
and reports its trace, ``holdout`` measures held-out prediction error over a
grid of ranks and unobserved fractions, ``sweep`` records convergence curves
over a rank grid, ``noise`` measures robustness to injected noise, and
``synth`` writes a synthetic dataset to disk.

Every command takes ``--out DIR`` and writes CSV tables, PNG figures, and a
``manifest.json`` there.  With ``--deterministic`` the manifest omits wall
times so identical invocations produce byte-identical files.

A chain can diverge to non-finite values when the posterior barely
constrains the factors (many ranks times a high unobserved fraction on a
small matrix; the row-maximum penalty is the usual culprit, since its
non-maximal coordinates feel no shrinkage at all).  ``fit`` fails outright
in that case, but the grid commands record the lost cells as nan, keep the
remaining results, and still exit with the sampler-failure code.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .conditionals import HyperParams, ModelKind
from .distributions import SamplerError
from .evaluate import (
    SplitSpec,
    add_noise,
    evaluate_prediction,
    factor_sparsity,
    holdout_split,
    variance_to_mse,
)
from .gibbs import run_chain
from .ingest import (
    DataFormatError,
    DatasetRecipe,
    RecipeKind,
    load_csv,
    preprocess,
    synth_gee,
    write_csv,
)
from .matrices import ObservedMatrix
from .report import (
    fit_figure,
    histogram_figure,
    holdout_figure,
    noise_figure,
    save_figure,
    sweep_figure,
)
from .streams import CELL_STREAM, derive_seed

# Exit codes.  2 also covers argparse usage errors.
EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_SAMPLER = 4

_CHAIN_TAG = 0
_SPLIT_TAG = 1
_NOISE_TAG = 2


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _nonneg_float(text: str) -> float:
    value = float(text)
    if value < 0.0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative number, got {text}")
    return value


def _int_list(text: str) -> list[int]:
    try:
        values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad integer list {text!r}") from exc
    if not values:
        raise argparse.ArgumentTypeError("empty integer list")
    return values


def _float_list(text: str) -> list[float]:
    try:
        values = [float(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}") from exc
    if not values:
        raise argparse.ArgumentTypeError("empty number list")
    return values


def _model_list(text: str) -> list[ModelKind]:
    names = [part.strip() for part in text.split(",") if part.strip()]
    if not names:
        raise argparse.ArgumentTypeError("empty model list")
    try:
        models = [ModelKind.from_name(name) for name in names]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc
    seen: set[ModelKind] = set()
    unique = [m for m in models if not (m in seen or seen.add(m))]
    return unique


def _frac_key(fraction: float) -> int:
    # Stable integer identity for a fraction, used in seed derivation.
    return round(fraction * 1_000_000)


def _worker_count() -> int:
    raw = os.environ.get("BNMF_THREADS", "")
    if raw:
        try:
            requested = int(raw)
        except ValueError:
            raise ValueError(f"BNMF_THREADS must be an integer, got {raw!r}")
        if requested < 1:
            raise ValueError("BNMF_THREADS must be at least 1")
        return requested
    return min(4, os.cpu_count() or 1)


def _run_cells(jobs):
    """Run callables concurrently; chains drop the GIL inside the kernel."""
    workers = _worker_count()
    if workers == 1 or len(jobs) == 1:
        return [job() for job in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(job) for job in jobs]
        return [f.result() for f in futures]


def _divergence_exit(n_diverged: int, n_cells: int) -> int:
    if n_diverged:
        print(
            f"bnmf: {n_diverged} of {n_cells} chains diverged (non-finite "
            "conditional parameters); their rows are recorded as nan",
            file=sys.stderr,
        )
        return EXIT_SAMPLER
    return EXIT_OK


def _add_common(parser: argparse.ArgumentParser, *, needs_data: bool) -> None:
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--seed", type=int, default=0, help="base seed (default 0)")
    parser.add_argument(
        "--deterministic",
        action="store_true",
        help="omit wall times from the manifest so reruns are byte-identical",
    )
    if needs_data:
        parser.add_argument("--data", required=True, help="CSV file to factorize")
        parser.add_argument(
            "--recipe",
            default="raw",
            choices=[kind.value for kind in RecipeKind],
            help="preprocessing recipe (default raw)",
        )
        parser.add_argument("--missing-token", default="NA", help="token marking missing cells")
        parser.add_argument("--header", action="store_true", help="skip the first CSV row")
        parser.add_argument("--mask", default=None, help="optional 0/1 mask CSV")


def _add_chain_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--t", type=_positive_int, default=500, help="sweeps per chain (default 500)")
    parser.add_argument("--burn-in", type=int, default=300, help="discarded sweeps (default 300)")
    parser.add_argument("--lambda-w", type=_nonneg_float, default=0.1, help="row-factor prior rate")
    parser.add_argument("--lambda-z", type=_nonneg_float, default=0.1, help="column-factor prior rate")
    parser.add_argument("--alpha-sigma", type=_nonneg_float, default=1.0, help="noise prior shape")
    parser.add_argument("--beta-sigma", type=_nonneg_float, default=1.0, help="noise prior scale")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bnmf",
        description="Gibbs-sampled nonnegative matrix factorization",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit one model and report its trace")
    _add_common(p_fit, needs_data=True)
    _add_chain_flags(p_fit)
    p_fit.add_argument("--model", type=ModelKind.from_name, default=ModelKind.GEE, help="model name (default gee)")
    p_fit.add_argument("--k", type=_positive_int, default=10, help="factorization rank (default 10)")
    p_fit.set_defaults(func=cmd_fit)

    p_hold = sub.add_parser("holdout", help="held-out MSE over a rank/fraction grid")
    _add_common(p_hold, needs_data=True)
    _add_chain_flags(p_hold)
    p_hold.add_argument("--models", type=_model_list, default=list(ModelKind), help="comma list (default all five)")
    p_hold.add_argument("--k-grid", type=_int_list, default=[20, 30, 40, 50], help="ranks (default 20,30,40,50)")
    p_hold.add_argument(
        "--fractions", type=_float_list, default=[0.6, 0.7, 0.8], help="unobserved fractions (default 0.6,0.7,0.8)"
    )
    p_hold.add_argument("--repeats", type=_positive_int, default=10, help="repeats per cell (default 10)")
    p_hold.set_defaults(func=cmd_holdout)

    p_sweep = sub.add_parser("sweep", help="training-error convergence over a rank grid")
    _add_common(p_sweep, needs_data=True)
    _add_chain_flags(p_sweep)
    p_sweep.add_argument("--models", type=_model_list, default=list(ModelKind), help="comma list (default all five)")
    p_sweep.add_argument("--k-grid", type=_int_list, default=[10, 20, 30, 40, 50], help="ranks (default 10,...,50)")
    p_sweep.set_defaults(func=cmd_sweep)

    p_noise = sub.add_parser("noise", help="held-out MSE under injected noise")
    _add_common(p_noise, needs_data=True)
    _add_chain_flags(p_noise)
    p_noise.add_argument("--models", type=_model_list, default=list(ModelKind), help="comma list (default all five)")
    p_noise.add_argument("--k", type=_positive_int, default=10, help="factorization rank (default 10)")
    p_noise.add_argument(
        "--noise-ratios",
        type=_float_list,
        default=[0.0, 0.1, 0.2, 0.5, 1.0],
        help="noise-to-signal ratios (default 0,0.1,0.2,0.5,1.0)",
    )
    p_noise.add_argument("--fractions", type=_float_list, default=[0.2], help="unobserved fractions (default 0.2)")
    p_noise.add_argument("--repeats", type=_positive_int, default=5, help="repeats per cell (default 5)")
    p_noise.set_defaults(func=cmd_noise)

    p_synth = sub.add_parser("synth", help="write a synthetic dataset")
    _add_common(p_synth, needs_data=False)
    p_synth.add_argument("--m-rows", type=_positive_int, default=30, help="rows (default 30)")
    p_synth.add_argument("--n-cols", type=_positive_int, default=30, help="columns (default 30)")
    p_synth.add_argument("--k", type=_positive_int, default=5, help="generating rank (default 5)")
    p_synth.add_argument("--lam", type=_nonneg_float, default=0.1, help="factor prior rate (default 0.1)")
    p_synth.add_argument("--noise-var", type=_nonneg_float, default=1.0, help="noise variance (default 1.0)")
    p_synth.add_argument(
        "--observed-fraction", type=float, default=1.0, help="fraction of cells kept observed (default 1.0)"
    )
    p_synth.add_argument("--missing-token", default="NA", help="token written for masked cells")
    p_synth.set_defaults(func=cmd_synth)

    return parser


def _load_dataset(args) -> ObservedMatrix:
    data = load_csv(
        args.data,
        missing_token=args.missing_token,
        header=args.header,
        mask_path=args.mask,
    )
    recipe = DatasetRecipe(kind=RecipeKind(args.recipe))
    return preprocess(data, recipe)


def _hyper(args) -> HyperParams:
    if args.burn_in < 0 or args.burn_in >= args.t:
        raise ValueError(f"--burn-in must lie in [0, --t), got {args.burn_in} with --t {args.t}")
    return HyperParams(
        lambda_w=args.lambda_w,
        lambda_z=args.lambda_z,
        alpha_sigma=args.alpha_sigma,
        beta_sigma=args.beta_sigma,
    )


def _float_cell(value: float) -> str:
    return repr(float(value))


def _write_table(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_float_cell(v) if isinstance(v, float) else v for v in row])


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _manifest(outdir: Path, args, outputs: list[str], started: float) -> None:
    flags = {
        key: value
        for key, value in sorted(vars(args).items())
        if key not in {"func", "command"} and not callable(value)
    }
    for key, value in flags.items():
        if isinstance(value, ModelKind):
            flags[key] = value.label
        elif isinstance(value, list):
            flags[key] = [v.label if isinstance(v, ModelKind) else v for v in value]
    payload = {
        "command": args.command,
        "version": __version__,
        "flags": flags,
        "outputs": sorted(outputs),
    }
    if not args.deterministic:
        payload["wall_time_seconds"] = time.time() - started
        payload["written_at"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    _write_json(outdir / "manifest.json", payload)


def _chain_seed(base: int, model: ModelKind, k: int, fraction: float, rep: int) -> int:
    return derive_seed(base, CELL_STREAM, _CHAIN_TAG, model.value, k, _frac_key(fraction), rep)


def _split_seed(base: int, fraction: float, rep: int) -> int:
    return derive_seed(base, CELL_STREAM, _SPLIT_TAG, _frac_key(fraction), rep)


def _noise_seed(base: int, rep: int) -> int:
    return derive_seed(base, CELL_STREAM, _NOISE_TAG, rep)


def cmd_fit(args) -> int:
    started = time.time()
    data = _load_dataset(args)
    hyper = _hyper(args)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)

    trace = run_chain(
        data,
        args.k,
        args.model,
        hyper,
        t=args.t,
        burn_in=args.burn_in,
        seed=_chain_seed(args.seed, args.model, args.k, 0.0, 0),
        snapshot_window=min(20, args.t),
    )

    iterations = list(range(1, args.t + 1))
    _write_table(
        outdir / "fit.csv",
        ["iteration", "train_mse", "sigma2"],
        [[i, float(m), float(s)] for i, m, s in zip(iterations, trace.train_mse, trace.sigma2_history)],
    )
    write_csv(
        ObservedMatrix(trace.posterior_mean_prediction, np.ones(data.shape, dtype=bool)),
        outdir / "prediction.csv",
        missing_token=args.missing_token,
    )
    summary = {
        "model": args.model.label,
        "k": args.k,
        "final_train_mse": float(trace.train_mse[-1]),
        "posterior_mean_sigma2": float(np.mean(trace.sigma2_history[args.burn_in :])),
        "factor_sparsity": factor_sparsity(trace),
        "n_observed": data.n_observed,
        "shape": list(data.shape),
    }
    _write_json(outdir / "summary.json", summary)
    fig = fit_figure(iterations, trace.train_mse, trace.sigma2_history, f"{args.model.label} fit, K={args.k}")
    save_figure(fig, outdir / "fit.png")
    _manifest(outdir, args, ["fit.csv", "fit.png", "prediction.csv", "summary.json"], started)
    return EXIT_OK


def cmd_holdout(args) -> int:
    started = time.time()
    data = _load_dataset(args)
    hyper = _hyper(args)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)

    cells = [
        (model, k, fraction, rep)
        for model in args.models
        for k in args.k_grid
        for fraction in args.fractions
        for rep in range(args.repeats)
    ]

    def job(model, k, fraction, rep):
        def run():
            train, test = holdout_split(data, SplitSpec(fraction, _split_seed(args.seed, fraction, rep)))
            try:
                trace = run_chain(
                    train,
                    k,
                    model,
                    hyper,
                    t=args.t,
                    burn_in=args.burn_in,
                    seed=_chain_seed(args.seed, model, k, fraction, rep),
                    snapshot_window=min(20, args.t),
                )
            except SamplerError:
                return float("nan")
            return evaluate_prediction(trace, test)

        return run

    results = _run_cells([job(*cell) for cell in cells])

    rows = [
        [model.label, k, float(fraction), rep, float(mse)]
        for (model, k, fraction, rep), mse in zip(cells, results)
    ]
    rows.sort(key=lambda r: (ModelKind.from_name(r[0]).value, r[1], r[2], r[3]))
    _write_table(outdir / "holdout.csv", ["model", "k", "fraction", "repeat", "test_mse"], rows)

    medians: dict[tuple, float] = {}
    for (model, k, fraction, _), mse in zip(cells, results):
        medians.setdefault((model, k, fraction), []).append(mse)
    median_rows = [
        [model.label, k, float(fraction), float(np.median(values))]
        for (model, k, fraction), values in medians.items()
    ]
    median_rows.sort(key=lambda r: (ModelKind.from_name(r[0]).value, r[1], r[2]))
    _write_table(outdir / "holdout_median.csv", ["model", "k", "fraction", "median_test_mse"], median_rows)

    figure_rows = [
        {"model": row[0], "k": row[1], "unobserved_fraction": row[2], "test_mse": row[3]}
        for row in median_rows
    ]
    fig = holdout_figure(figure_rows, "held-out MSE by rank and unobserved fraction")
    save_figure(fig, outdir / "holdout.png")
    _manifest(outdir, args, ["holdout.csv", "holdout_median.csv", "holdout.png"], started)
    return _divergence_exit(sum(1 for mse in results if np.isnan(mse)), len(cells))


def cmd_sweep(args) -> int:
    started = time.time()
    data = _load_dataset(args)
    hyper = _hyper(args)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)

    cells = [(model, k) for model in args.models for k in args.k_grid]

    def job(model, k):
        def run():
            try:
                return run_chain(
                    data,
                    k,
                    model,
                    hyper,
                    t=args.t,
                    burn_in=args.burn_in,
                    seed=_chain_seed(args.seed, model, k, 0.0, 0),
                    snapshot_window=min(20, args.t),
                )
            except SamplerError:
                return None

        return run

    traces = _run_cells([job(*cell) for cell in cells])

    rows = []
    curves = {}
    n_diverged = 0
    for (model, k), trace in zip(cells, traces):
        if trace is None:
            n_diverged += 1
            curve = np.full(args.t, np.nan)
        else:
            curve = trace.train_mse
        curves[(model.label, k)] = curve
        for iteration, mse in enumerate(curve, start=1):
            rows.append([model.label, k, iteration, float(mse)])
    rows.sort(key=lambda r: (ModelKind.from_name(r[0]).value, r[1], r[2]))
    _write_table(outdir / "sweep.csv", ["model", "k", "iteration", "train_mse"], rows)

    fig = sweep_figure(curves, "training MSE by iteration")
    save_figure(fig, outdir / "sweep.png")
    _manifest(outdir, args, ["sweep.csv", "sweep.png"], started)
    return _divergence_exit(n_diverged, len(cells))


def cmd_noise(args) -> int:
    started = time.time()
    data = _load_dataset(args)
    hyper = _hyper(args)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)

    cells = [
        (model, ratio, fraction, rep)
        for model in args.models
        for ratio in args.noise_ratios
        for fraction in args.fractions
        for rep in range(args.repeats)
    ]

    def job(model, ratio, fraction, rep):
        def run():
            # The noise seed ignores the ratio so one rep shares a noise field
            # across the sweep; ratio 0 reproduces the clean holdout cell.
            noisy = add_noise(data, ratio, _noise_seed(args.seed, rep))
            train, test = holdout_split(noisy, SplitSpec(fraction, _split_seed(args.seed, fraction, rep)))
            variance = float(noisy.observed_values().var())
            try:
                trace = run_chain(
                    train,
                    args.k,
                    model,
                    hyper,
                    t=args.t,
                    burn_in=args.burn_in,
                    seed=_chain_seed(args.seed, model, args.k, fraction, rep),
                    snapshot_window=min(20, args.t),
                )
            except SamplerError:
                return variance, float("nan")
            return variance, evaluate_prediction(trace, test)

        return run

    results = _run_cells([job(*cell) for cell in cells])

    def ratio_cell(variance: float, mse: float) -> float:
        return float("nan") if np.isnan(mse) else variance_to_mse(variance, mse)

    rows = [
        [
            model.label,
            float(ratio),
            float(fraction),
            rep,
            float(mse),
            float(variance),
            ratio_cell(variance, mse),
        ]
        for (model, ratio, fraction, rep), (variance, mse) in zip(cells, results)
    ]
    rows.sort(key=lambda r: (ModelKind.from_name(r[0]).value, r[1], r[2], r[3]))
    _write_table(
        outdir / "noise.csv",
        ["model", "noise_ratio", "fraction", "repeat", "test_mse", "data_variance", "variance_to_mse"],
        rows,
    )

    medians: dict[tuple, list] = {}
    for (model, ratio, fraction, _), (variance, mse) in zip(cells, results):
        medians.setdefault((model, ratio, fraction), []).append(ratio_cell(variance, mse))
    median_rows = [
        [model.label, float(ratio), float(fraction), float(np.median(values))]
        for (model, ratio, fraction), values in medians.items()
    ]
    median_rows.sort(key=lambda r: (ModelKind.from_name(r[0]).value, r[1], r[2]))
    _write_table(
        outdir / "noise_median.csv",
        ["model", "noise_ratio", "fraction", "median_variance_to_mse"],
        median_rows,
    )

    figure_rows = [
        {"model": row[0], "noise_ratio": row[1], "variance_to_mse": row[3]}
        for row in median_rows
    ]
    fig = noise_figure(figure_rows, "variance-to-MSE ratio under injected noise")
    save_figure(fig, outdir / "noise.png")
    _manifest(outdir, args, ["noise.csv", "noise_median.csv", "noise.png"], started)
    return _divergence_exit(sum(1 for _, mse in results if np.isnan(mse)), len(cells))


def cmd_synth(args) -> int:
    started = time.time()
    if not 0.0 < args.observed_fraction <= 1.0:
        raise ValueError(f"--observed-fraction must lie in (0, 1], got {args.observed_fraction}")
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)

    data, factors, noise_var = synth_gee(
        args.m_rows,
        args.n_cols,
        args.k,
        lam=args.lam,
        noise_var=args.noise_var,
        observed_fraction=args.observed_fraction,
        seed=args.seed,
    )
    write_csv(data, outdir / "data.csv", missing_token=args.missing_token)
    _write_table(
        outdir / "w.csv",
        [f"w{j}" for j in range(args.k)],
        [[float(v) for v in row] for row in factors.W],
    )
    _write_table(
        outdir / "z.csv",
        [f"n{j}" for j in range(args.n_cols)],
        [[float(v) for v in row] for row in factors.Z],
    )
    summary = {
        "shape": [args.m_rows, args.n_cols],
        "k": args.k,
        "lam": args.lam,
        "noise_var": noise_var,
        "observed_fraction": args.observed_fraction,
        "n_observed": data.n_observed,
        "observed_mean": float(data.observed_values().mean()),
        "observed_variance": float(data.observed_values().var()),
    }
    _write_json(outdir / "summary.json", summary)
    fig = histogram_figure(data.observed_values(), "observed value distribution")
    save_figure(fig, outdir / "histogram.png")
    _manifest(outdir, args, ["data.csv", "histogram.png", "summary.json", "w.csv", "z.csv"], started)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help/--version and 2 for usage errors
        return int(exc.code or 0)
    try:
        return args.func(args)
    except DataFormatError as exc:
        print(f"bnmf: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"bnmf: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"bnmf: file error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SamplerError as exc:
        print(f"bnmf: sampler failure: {exc}", file=sys.stderr)
        return EXIT_SAMPLER


def entry() -> None:
    sys.exit(main(sys.argv[1:]))


if __name__ == "__main__":
    entry()
