import csv
import json

import pytest

from backscatter_loc.cli import main


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"g_tau": 256, "g_theta": 16, "n_symbols": 8, "bench_calls": 1}))
    return str(path)


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_simulate_estimate_localize(tmp_path, small_config, capsys):
    out = str(tmp_path / "run")
    assert main(["simulate", "--config", small_config, "--trials", "1", "--out", out]) == 0
    dataset = tmp_path / "run" / "dataset_0000.json"
    assert dataset.exists()

    assert main(["estimate", dataset.as_posix(), "--config", small_config, "--out", out, "--methods", "fft2d,srae"]) == 0
    rows = read_rows(tmp_path / "run" / "measurements.csv")
    assert len(rows) == 2 * 25 * 4
    assert {r["method"] for r in rows} == {"fft2d", "srae"}

    meas = (tmp_path / "run" / "measurements.csv").as_posix()
    assert main(["localize", dataset.as_posix(), meas, "--config", small_config, "--out", out, "--methods", "irls:srae"]) == 0
    pos = read_rows(tmp_path / "run" / "positions.csv")
    assert len(pos) == 25 and {p["method"] for p in pos} == {"irls:srae"}
    assert "wrote" in capsys.readouterr().out


def test_e2e_and_cdf(tmp_path, small_config):
    out = tmp_path / "e2e"
    argv = ["e2e", "--config", small_config, "--trials", "2", "--seed", "5", "--out", str(out), "--methods", "fft2d,irls:fft2d"]
    assert main(argv) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["n_trials"] == 2
    assert {"fft2d", "irls:fft2d"} <= set(summary["methods"])

    assert main(["cdf", str(out / "records.csv"), "--out", str(tmp_path / "cdf")]) == 0
    assert (tmp_path / "cdf" / "cdf_range_err_m.csv").exists()
    assert (tmp_path / "cdf" / "cdf_pos_err_m.csv").exists()


def test_bench(tmp_path, small_config, capsys):
    assert main(["bench", "--config", small_config, "--out", str(tmp_path), "--methods", "srae,cir_first_peak"]) == 0
    doc = json.loads((tmp_path / "bench.json").read_text())
    assert {"srae", "cir_first_peak", "irls", "ml_grid", "ml_gradient"} == set(doc["runtimes"])
    assert "median" in capsys.readouterr().out


def test_unknown_config_key_fails(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"n_trails": 1}))
    with pytest.raises(ValueError):
        main(["e2e", "--config", str(path)])
