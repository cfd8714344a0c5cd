import json
import os
import subprocess
import sys

import numpy as np
import pytest

from consensus_lab.cli import main
from consensus_lab.errors import ValidationError
from consensus_lab.experiments import load_config, make_config, parse_influence, validate, worker_count
from consensus_lab.io import read_csv


def test_build_and_manifest(tmp_path, capsys):
    out = tmp_path / "b"
    assert main(["build", "--family", "path", "--n", "3,4", "--output-dir", str(out)]) == 0
    printed = capsys.readouterr().out.split()
    assert "Path1D_3_laplacian.csv" in printed
    _, L = read_csv(out / "Path1D_3_laplacian.csv")
    np.testing.assert_array_equal(L, [[1, -1, 0], [-1, 2, -1], [0, -1, 1]])
    desc = json.loads((out / "Path1D_4_descriptor.json").read_text())
    assert desc == {"family": "Path1D", "n_agents": 4, "params": {}, "scaled": False}
    man = json.loads((out / "manifest.json").read_text())
    assert man["config"]["n_list"] == [3, 4] and "output_dir" not in man["config"]
    assert {"consensus_lab", "numpy", "scipy"} <= set(man["version"])
    assert "timings" not in man
    assert json.loads((out / "timings.json").read_text())
    import hashlib
    for item in man["outputs"]:
        assert hashlib.sha256((out / item["path"]).read_bytes()).hexdigest() == item["sha256"]


def test_spectrum_and_gap_study(tmp_path):
    out = tmp_path / "s"
    assert main(["spectrum", "--family", "dense_periodic", "--r", "1/2", "--n", "4",
                 "--output-dir", str(out), "--no-plot"]) == 0
    _, ev = read_csv(out / "DensePeriodic_4_r0.5_eigenvalues.csv")
    np.testing.assert_allclose(ev[:, 1], [0, 2, 3, 3], atol=1e-13)
    assert not list(out.glob("*.svg"))
    assert main(["gap-study", "--family", "fractional", "--alpha", "0.5", "--scaled",
                 "--n", "8,16", "--output-dir", str(out)]) == 0
    header, rows = read_csv(out / "Fractional_gap_study.csv")
    assert header[:2] == ["n", "min_gap"] and rows.shape[0] == 2
    assert (out / "Fractional_gap_study.svg").read_text().startswith("<svg")


def test_simulate_and_control(tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--family", "path", "--n", "2", "--T", "1", "--dt", "0.001",
                 "--x0", "sign", "--output-dir", str(out)]) == 0
    _, traj = read_csv(out / "Path1D_2_trajectory.csv")
    # sign profile for two agents is (0, 1)
    assert traj[-1, 1] == pytest.approx(0.5 - 0.5 * np.exp(-2.0), abs=1e-10)
    assert main(["control-cost", "--family", "path", "--n", "4,6", "--T", "1",
                 "--output-dir", str(out)]) == 0
    header, rows = read_csv(out / "Path1D_cost_fixed.csv")
    assert header[2] == "log10_cost_proxy" and rows[1, 2] > rows[0, 2]


def test_limit_experiments(tmp_path):
    out = tmp_path / "lim"
    assert main(["graph-limit", "--family", "dense_periodic", "--r", "0.25", "--n", "16,32",
                 "--output-dir", str(out)]) == 0
    _, d = read_csv(out / "DensePeriodic_graph_limit.csv")
    assert d[1, 1] < d[0, 1]
    assert main(["mean-field", "--influence", "rational:1", "--n", "8,16", "--T", "0.5",
                 "--output-dir", str(out)]) == 0
    assert main(["subordination", "--influence", "constant:1", "--profile", "linear",
                 "--n", "32", "--T", "0.2", "--dt", "0.02", "--output-dir", str(out)]) == 0
    header, r = read_csv(out / "subordination_m32.csv")
    assert header == ["t", "residual_1", "residual_2", "residual_3"]
    assert r[:, 1].max() <= 1e-8


def test_exit_codes(tmp_path, capsys):
    assert main(["spectrum", "--family", "dense_periodic", "--r", "0.6", "--n", "10",
                 "--output-dir", str(tmp_path)]) == 2
    assert "r > 1/2" in capsys.readouterr().err
    assert main(["spectrum", "--family", "torus", "--output-dir", str(tmp_path)]) == 2
    assert main(["simulate", "--x0", "random", "--output-dir", str(tmp_path)]) == 2
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    assert main(["build", "--n", "3", "--output-dir", str(blocker / "x")]) == 4
    assert main(["preset", "fig99", "--output-dir", str(tmp_path)]) == 2
    # numerical failure: the step cap cannot reach the horizon
    assert main(["simulate", "--family", "path", "--n", "512", "--scaled", "--T", "10",
                 "--dt", "1e-7", "--output-dir", str(tmp_path)]) == 3


def test_validate_subcommand(capsys):
    assert main(["validate", "spectrum", "--family", "dense_periodic", "--r", "0.6",
                 "--n", "10"]) == 2
    assert "r > 1/2" in capsys.readouterr().out
    assert main(["validate", "simulate", "--family", "path", "--n", "100", "--scaled",
                 "--dt", "0.01"]) == 2
    assert "suggested dt <=" in capsys.readouterr().out
    assert main(["validate", "spectrum", "--family", "path", "--n", "10"]) == 0
    assert main(["validate", "warp"]) == 2


def test_validate_collects_everything():
    cfg = make_config(experiment="control-cost", family="dense_periodic", r=0.1,
                      n_list=(5, 4, 80), T=-1, time_policy="sometimes")
    msgs = validate(cfg)
    assert any("ascending" in m for m in msgs)
    assert any("T must be positive" in m for m in msgs)
    assert any("n <= 64" in m for m in msgs)
    assert any("time_policy" in m for m in msgs)
    assert any("[r n] = 0" in m for m in msgs)
    assert validate(make_config(experiment="subordination", n_list=(16,), test_polys=(0,)))


def test_config_file_and_overrides(tmp_path):
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text("experiment = spectrum\nfamily = fractional\nalpha = 3/4\n"
                        "n_list = 8, 16  # sizes\nscaled = yes\n")
    cfg = load_config(cfg_file, n_list="32")
    assert cfg.alpha == 0.75 and cfg.scaled is True and cfg.n_list == (32,)
    with pytest.raises(ValidationError):
        make_config(colour="red")
    with pytest.raises(ValidationError):
        make_config(T="soon")
    out = tmp_path / "o"
    assert main(["spectrum", "--config", str(cfg_file), "--output-dir", str(out)]) == 0
    assert (out / "Fractional_16_alpha0.75_c_alpha1_scaled_eigenvalues.csv").exists()


def test_influence_parsing():
    assert parse_influence("rational:0.5").param == 0.5
    assert parse_influence("indicator:2").radius == 2.0
    assert parse_influence("constant").value == 1.0
    with pytest.raises(ValidationError):
        parse_influence("gaussian:1")


def test_thread_count(monkeypatch):
    monkeypatch.setenv("CONSENSUS_LAB_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("CONSENSUS_LAB_THREADS", "0")
    with pytest.raises(ValidationError):
        worker_count()
    monkeypatch.delenv("CONSENSUS_LAB_THREADS")
    assert 1 <= worker_count() <= 4


def test_thread_count_does_not_change_outputs(tmp_path, monkeypatch):
    digests = []
    for threads in ("1", "4"):
        monkeypatch.setenv("CONSENSUS_LAB_THREADS", threads)
        out = tmp_path / threads
        assert main(["spectrum", "--family", "path", "--n", "5,9,17,33",
                     "--output-dir", str(out)]) == 0
        digests.append((out / "manifest.json").read_bytes())
    assert digests[0] == digests[1]


def test_console_entry_point(tmp_path):
    env = dict(os.environ, CONSENSUS_LAB_THREADS="2")
    res = subprocess.run([sys.executable, "-m", "consensus_lab", "build", "--n", "2",
                          "--output-dir", str(tmp_path)], capture_output=True, text=True, env=env)
    assert res.returncode == 0, res.stderr
    assert "Path1D_2_laplacian.csv" in res.stdout
    res = subprocess.run([sys.executable, "-m", "consensus_lab", "build", "--n", "1",
                          "--output-dir", str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == 2 and "n >= 2" in res.stderr


def test_cost_presets(tmp_path):
    assert main(["preset", "scaled-time", "--output-dir", str(tmp_path / "s")]) == 0
    header, rows = read_csv(tmp_path / "s" / "scaled_time_Path1D_cost_scaled.csv")
    np.testing.assert_array_equal(rows[:, 1], [1, 4, 9])
    assert main(["preset", "fixed-time", "--output-dir", str(tmp_path / "f")]) == 0
    _, rows = read_csv(tmp_path / "f" / "fixed_time_Path1D_cost_fixed.csv")
    assert np.all(np.diff(rows[:, 2]) > 0)
    man = json.loads((tmp_path / "f" / "manifest.json").read_text())
    assert man["config"]["preset"] == "fixed-time"


def test_fig5_preset(tmp_path):
    assert main(["preset", "fig5", "--output-dir", str(tmp_path)]) == 0
    for name in ("fig5_Path1D_100_eigenvalues.csv", "fig5_Path1D_100_scaled_eigenvalues.csv"):
        _, ev = read_csv(tmp_path / name)
        assert ev.shape == (100, 2) and ev[0, 1] == 0.0
