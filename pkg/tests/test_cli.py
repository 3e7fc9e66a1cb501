import json
from pathlib import Path

import numpy as np
import pytest

from bnmf import SamplerError, synth_gee, write_csv
from bnmf.cli import EXIT_CONFIG, EXIT_DATA, EXIT_OK, EXIT_SAMPLER, main


@pytest.fixture(scope="module")
def data_csv(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli_data")
    data, _, _ = synth_gee(12, 10, 3, lam=0.5, noise_var=0.5, observed_fraction=0.9, seed=5)
    path = root / "data.csv"
    write_csv(data, path)
    return str(path)


def run_cli(*argv):
    return main(list(argv))


def read_tree(root):
    return {p.name: p.read_bytes() for p in sorted(Path(root).iterdir())}


def chain_flags(t="40", burn="10"):
    return ["--t", t, "--burn-in", burn]


def test_fit_writes_report_bundle(data_csv, tmp_path):
    out = tmp_path / "fit"
    code = run_cli("fit", "--data", data_csv, "--model", "gl22", "--k", "3",
                   *chain_flags(), "--seed", "1", "--out", str(out), "--deterministic")
    assert code == EXIT_OK
    assert {p.name for p in out.iterdir()} == {
        "fit.csv", "fit.png", "prediction.csv", "summary.json", "manifest.json"
    }
    summary = json.loads((out / "summary.json").read_text())
    assert summary["model"] == "gl22"
    assert summary["k"] == 3
    assert summary["final_train_mse"] > 0.0
    assert summary["posterior_mean_sigma2"] > 0.0
    lines = (out / "fit.csv").read_text().splitlines()
    assert lines[0] == "iteration,train_mse,sigma2"
    assert len(lines) == 41
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "fit"
    assert "wall_time_seconds" not in manifest
    assert manifest["flags"]["model"] == "gl22"


def test_fit_manifest_records_wall_time_without_deterministic(data_csv, tmp_path):
    out = tmp_path / "fit"
    assert run_cli("fit", "--data", data_csv, "--k", "2", *chain_flags("20", "5"),
                   "--out", str(out)) == EXIT_OK
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["wall_time_seconds"] > 0.0
    assert "written_at" in manifest


def test_holdout_grid_layout(data_csv, tmp_path):
    out = tmp_path / "hold"
    code = run_cli("holdout", "--data", data_csv, "--models", "gee,gl22",
                   "--k-grid", "2,3", "--fractions", "0.2,0.3", "--repeats", "2",
                   *chain_flags(), "--seed", "3", "--out", str(out), "--deterministic")
    assert code == EXIT_OK
    lines = (out / "holdout.csv").read_text().splitlines()
    assert lines[0] == "model,k,fraction,repeat,test_mse"
    assert len(lines) == 1 + 2 * 2 * 2 * 2
    # rows come out sorted by model order, then k, fraction, repeat
    first = lines[1].split(",")
    assert first[:4] == ["gee", "2", "0.2", "0"]
    med = (out / "holdout_median.csv").read_text().splitlines()
    assert len(med) == 1 + 2 * 2 * 2
    assert (out / "holdout.png").stat().st_size > 0


def test_sweep_emits_full_curves(data_csv, tmp_path):
    out = tmp_path / "sweep"
    code = run_cli("sweep", "--data", data_csv, "--models", "glinf", "--k-grid", "2,4",
                   *chain_flags("30", "10"), "--out", str(out), "--deterministic")
    assert code == EXIT_OK
    lines = (out / "sweep.csv").read_text().splitlines()
    assert lines[0] == "model,k,iteration,train_mse"
    assert len(lines) == 1 + 2 * 30
    mse = [float(line.split(",")[3]) for line in lines[1:31]]
    assert mse[-1] < mse[0]


def test_noise_ratio_zero_reproduces_holdout(data_csv, tmp_path):
    hold = tmp_path / "hold"
    noise = tmp_path / "noise"
    common = [*chain_flags(), "--seed", "3", "--deterministic", "--data", data_csv]
    assert run_cli("holdout", "--models", "gee", "--k-grid", "3", "--fractions", "0.2",
                   "--repeats", "2", "--out", str(hold), *common) == EXIT_OK
    assert run_cli("noise", "--models", "gee", "--k", "3", "--noise-ratios", "0,0.5",
                   "--fractions", "0.2", "--repeats", "2", "--out", str(noise), *common) == EXIT_OK
    hold_rows = (hold / "holdout.csv").read_text().splitlines()[1:]
    hold_mse = {tuple(r.split(",")[2:4]): r.split(",")[4] for r in hold_rows}
    noise_rows = (noise / "noise.csv").read_text().splitlines()[1:]
    zero_rows = [r.split(",") for r in noise_rows if float(r.split(",")[1]) == 0.0]
    assert zero_rows, "no ratio-0 rows found"
    for row in zero_rows:
        assert row[4] == hold_mse[(row[2], row[3])]


def test_noise_table_has_variance_columns(data_csv, tmp_path):
    out = tmp_path / "noise"
    assert run_cli("noise", "--data", data_csv, "--models", "gee", "--k", "2",
                   "--noise-ratios", "0,1", "--fractions", "0.2", "--repeats", "1",
                   *chain_flags("20", "5"), "--out", str(out), "--deterministic") == EXIT_OK
    header, *rows = (out / "noise.csv").read_text().splitlines()
    assert header == "model,noise_ratio,fraction,repeat,test_mse,data_variance,variance_to_mse"
    for row in rows:
        cells = row.split(",")
        assert float(cells[6]) == pytest.approx(float(cells[5]) / float(cells[4]), rel=1e-12)


def test_synth_writes_ground_truth_bundle(tmp_path):
    out = tmp_path / "synth"
    code = run_cli("synth", "--m-rows", "14", "--n-cols", "9", "--k", "3",
                   "--lam", "0.5", "--noise-var", "0.25", "--observed-fraction", "0.8",
                   "--seed", "4", "--out", str(out), "--deterministic")
    assert code == EXIT_OK
    assert {p.name for p in out.iterdir()} == {
        "data.csv", "w.csv", "z.csv", "summary.json", "histogram.png", "manifest.json"
    }
    summary = json.loads((out / "summary.json").read_text())
    assert summary["shape"] == [14, 9]
    assert summary["n_observed"] == int(0.8 * 14 * 9)
    data_lines = (out / "data.csv").read_text().splitlines()
    assert len(data_lines) == 14
    assert sum(line.count("NA") for line in data_lines) == 14 * 9 - summary["n_observed"]


@pytest.mark.parametrize("command", ["fit", "holdout", "sweep", "noise", "synth"])
def test_deterministic_reruns_are_byte_identical(command, data_csv, tmp_path):
    out = tmp_path / command
    argv = {
        "fit": ["fit", "--data", data_csv, "--k", "2", *chain_flags("25", "5")],
        "holdout": ["holdout", "--data", data_csv, "--models", "gee,gl12", "--k-grid", "2",
                    "--fractions", "0.25", "--repeats", "2", *chain_flags("25", "5")],
        "sweep": ["sweep", "--data", data_csv, "--models", "gl2inf", "--k-grid", "2",
                  *chain_flags("25", "5")],
        "noise": ["noise", "--data", data_csv, "--models", "glinf", "--k", "2",
                  "--noise-ratios", "0,0.3", "--fractions", "0.25", "--repeats", "1",
                  *chain_flags("25", "5")],
        "synth": ["synth", "--m-rows", "10", "--n-cols", "8", "--k", "2"],
    }[command] + ["--seed", "2", "--out", str(out), "--deterministic"]
    assert run_cli(*argv) == EXIT_OK
    first = read_tree(out)
    assert run_cli(*argv) == EXIT_OK
    assert read_tree(out) == first


def test_results_do_not_depend_on_worker_count(data_csv, tmp_path, monkeypatch):
    argv = ["holdout", "--data", data_csv, "--models", "gee,gl22", "--k-grid", "2,3",
            "--fractions", "0.25", "--repeats", "2", *chain_flags("25", "5"),
            "--seed", "6", "--deterministic"]
    serial = tmp_path / "serial"
    threaded = tmp_path / "threaded"
    monkeypatch.setenv("BNMF_THREADS", "1")
    assert run_cli(*argv, "--out", str(serial)) == EXIT_OK
    monkeypatch.setenv("BNMF_THREADS", "3")
    assert run_cli(*argv, "--out", str(threaded)) == EXIT_OK
    a = {k: v for k, v in read_tree(serial).items() if k != "manifest.json"}
    b = {k: v for k, v in read_tree(threaded).items() if k != "manifest.json"}
    assert a == b


def test_holdout_survives_a_diverging_chain(data_csv, tmp_path):
    # The row-maximum prior reliably blows up on a tiny matrix at K=20 with
    # most cells hidden; the grid keeps the surviving cells and exits 4.
    out = tmp_path / "hold"
    code = run_cli("holdout", "--data", data_csv, "--models", "gee,glinf",
                   "--k-grid", "20", "--fractions", "0.8", "--repeats", "1",
                   *chain_flags("120", "100"), "--seed", "0", "--out", str(out),
                   "--deterministic")
    assert code == EXIT_SAMPLER
    assert {p.name for p in out.iterdir()} == {
        "holdout.csv", "holdout_median.csv", "holdout.png", "manifest.json"
    }
    by_model = {}
    for line in (out / "holdout.csv").read_text().splitlines()[1:]:
        parts = line.split(",")
        by_model[parts[0]] = parts[4]
    assert by_model["glinf"] == "nan"
    assert float(by_model["gee"]) > 0.0
    med = {line.split(",")[0]: line.split(",")[3]
           for line in (out / "holdout_median.csv").read_text().splitlines()[1:]}
    assert med["glinf"] == "nan"
    assert float(med["gee"]) > 0.0


def test_noise_survives_a_diverging_chain(data_csv, tmp_path):
    out = tmp_path / "noise"
    code = run_cli("noise", "--data", data_csv, "--models", "gee,glinf", "--k", "20",
                   "--noise-ratios", "0", "--fractions", "0.8", "--repeats", "1",
                   *chain_flags("120", "100"), "--seed", "0", "--out", str(out),
                   "--deterministic")
    assert code == EXIT_SAMPLER
    lines = (out / "noise.csv").read_text().splitlines()
    assert lines[0] == "model,noise_ratio,fraction,repeat,test_mse,data_variance,variance_to_mse"
    rows = {line.split(",")[0]: line.split(",") for line in lines[1:]}
    assert rows["glinf"][4] == "nan"
    assert rows["glinf"][6] == "nan"
    assert float(rows["glinf"][5]) > 0.0
    assert float(rows["gee"][4]) > 0.0


def test_exit_codes(data_csv, tmp_path, monkeypatch):
    out = str(tmp_path / "x")
    assert run_cli("fit", "--data", data_csv, "--k", "0", "--out", out) == EXIT_CONFIG
    assert run_cli("fit", "--data", data_csv, "--model", "nope", "--k", "2", "--out", out) == EXIT_CONFIG
    assert run_cli("fit", "--data", data_csv, "--k", "2", "--t", "10", "--burn-in", "10",
                   "--out", out) == EXIT_CONFIG
    assert run_cli("fit", "--data", str(tmp_path / "missing.csv"), "--k", "2", "--out", out) == EXIT_DATA
    bad = tmp_path / "bad.csv"
    bad.write_text("1,spam\n")
    assert run_cli("fit", "--data", str(bad), "--k", "2", "--out", out) == EXIT_DATA

    def explode(*a, **k):
        raise SamplerError("synthetic failure")

    monkeypatch.setattr("bnmf.cli.run_chain", explode)
    assert run_cli("fit", "--data", data_csv, "--k", "2", *chain_flags("10", "2"),
                   "--out", out) == EXIT_SAMPLER


def test_version_and_help_exit_zero(capsys):
    assert run_cli("--version") == 0
    assert run_cli("--help") == 0
    capsys.readouterr()
