import json

import numpy as np
import pytest

from tensorwheel import ingest, load_checkpoint, oracle_entry
from tensorwheel.cli import main


def run(argv):
    return main([str(a) for a in argv])


@pytest.fixture
def synth_file(tmp_path):
    """Planted dataset written in COO form, plus its truth checkpoint."""
    obs = tmp_path / "obs.txt"
    truth = tmp_path / "truth.txt"
    code = run(["synth", "--dims", "8,8,6", "--ranks", "2,2,2,2,2,2",
                "--density", "0.4", "--seed", "3",
                "--output", obs, "--truth", truth])
    assert code == 0
    return obs, truth


def train_args(obs, report, **over):
    base = {
        "--input": obs, "--ranks": "2,2,2,2,2,2", "--eta": 0.1, "--lambda": 0,
        "--split": "8,1,1".replace(",", ":"), "--seed": 0, "--reps": 1,
        "--epochs": 30, "--report": report,
    }
    base.update(over)
    argv = ["train", "--no-normalize"]
    for key, val in base.items():
        argv += [key, val]
    return argv


# --------------------------------------------------------------- ingest

def test_ingest_check_ok(tmp_path, capsys):
    path = tmp_path / "d.txt"
    path.write_text("0 1 2 3.5\n1 0 0 1.25\n")
    assert run(["ingest-check", "--input", path]) == 0
    out = capsys.readouterr().out
    assert "2 entries" in out


def test_ingest_check_missing_file(tmp_path, capsys):
    assert run(["ingest-check", "--input", tmp_path / "absent.txt"]) == 1
    assert "error:" in capsys.readouterr().err


def test_ingest_check_reports_parse_error(tmp_path, capsys):
    path = tmp_path / "d.txt"
    path.write_text("0 1 2 3.5\nbroken\n")
    assert run(["ingest-check", "--input", path]) == 1
    assert "line 2" in capsys.readouterr().err


# ---------------------------------------------------------------- split

def test_split_command_writes_parts(tmp_path):
    path = tmp_path / "d.txt"
    lines = [f"{i} {j} 0 {1.0 + i + 4 * j}" for i in range(4) for j in range(5)]
    path.write_text("\n".join(lines) + "\n")
    prefix = tmp_path / "part"
    assert run(["split", "--input", path, "--split", "1:2:7", "--seed", 5,
                "--output-prefix", prefix]) == 0
    parts = [ingest(f"{prefix}.{name}.txt") for name in ("train", "valid", "test")]
    assert [len(p) for p in parts] == [2, 4, 14]
    keys = set()
    for p in parts:
        keys |= {(e.i, e.j, e.k) for e in p.entries}
    assert len(keys) == 20


# ---------------------------------------------------------------- synth

def test_synth_outputs_are_consistent(synth_file):
    obs_path, truth_path = synth_file
    observed = ingest(obs_path)
    truth = load_checkpoint(truth_path)
    assert observed.dims == truth.dims == (8, 8, 6)
    assert len(observed) == int(np.ceil(0.4 * 8 * 8 * 6))
    for e in observed.entries[:10]:
        assert abs(e.value - oracle_entry(truth, e.i, e.j, e.k)) < 1e-12


# ---------------------------------------------------------------- train

def test_train_single_repetition_report(synth_file, tmp_path):
    obs, _ = synth_file
    report_path = tmp_path / "report.json"
    assert run(train_args(obs, report_path)) == 0
    report = json.loads(report_path.read_text())
    assert report["command"] == "train"
    assert len(report["repetitions"]) == 1
    rep = report["repetitions"][0]
    assert rep["seed"] == 0
    assert len(rep["loss_history"]) == rep["epochs_run"]
    assert report["mean_rmse"] == rep["rmse"]
    assert report["config"]["normalize"] is False
    assert report["config"]["hyperparams"]["eta"] == 0.1


def test_train_mean_matches_repetitions(synth_file, tmp_path):
    obs, _ = synth_file
    report_path = tmp_path / "report.json"
    assert run(train_args(obs, report_path, **{"--reps": 3, "--epochs": 15})) == 0
    report = json.loads(report_path.read_text())
    reps = report["repetitions"]
    assert [r["seed"] for r in reps] == [0, 1, 2]
    assert report["mean_rmse"] == pytest.approx(np.mean([r["rmse"] for r in reps]), rel=1e-15)
    assert report["mean_mae"] == pytest.approx(np.mean([r["mae"] for r in reps]), rel=1e-15)


def test_train_report_bytes_deterministic(synth_file, tmp_path):
    obs, _ = synth_file
    first = tmp_path / "r1.json"
    second = tmp_path / "r2.json"
    assert run(train_args(obs, first, **{"--epochs": 12})) == 0
    assert run(train_args(obs, second, **{"--epochs": 12})) == 0
    assert first.read_bytes() == second.read_bytes()


def test_train_missing_input_no_report(tmp_path, capsys):
    report_path = tmp_path / "report.json"
    code = run(train_args(tmp_path / "absent.txt", report_path, **{"--epochs": 5}))
    assert code == 1
    assert not report_path.exists()
    assert "error:" in capsys.readouterr().err


def test_train_writes_checkpoints_scoreable_by_evaluate(synth_file, tmp_path, capsys):
    obs, _ = synth_file
    report_path = tmp_path / "report.json"
    ckpt_prefix = tmp_path / "model"
    assert run(train_args(obs, report_path, **{"--checkpoint": ckpt_prefix,
                                               "--epochs": 40})) == 0
    ckpt = f"{ckpt_prefix}.rep0.txt"
    assert run(["evaluate", "--input", obs, "--checkpoint", ckpt]) == 0
    out = capsys.readouterr().out
    assert "rmse" in out


def test_train_normalizes_by_default(tmp_path):
    # raw weights >= 0 pass through log1p before splitting/training
    path = tmp_path / "d.txt"
    rng = np.random.default_rng(0)
    lines = [f"{i} {j} {k} {rng.uniform(0, 5):.6f}"
             for i in range(5) for j in range(5) for k in range(3)]
    path.write_text("\n".join(lines) + "\n")
    report_path = tmp_path / "report.json"
    assert run(["train", "--input", path, "--ranks", "2,2,2,1,1,1",
                "--eta", "0.1", "--lambda", "0", "--epochs", "10",
                "--split", "6:2:2", "--reps", "1", "--report", report_path]) == 0
    report = json.loads(report_path.read_text())
    assert report["config"]["normalize"] is True


# --------------------------------------------------------------- ablate

def test_ablate_arms_share_initialization(synth_file, tmp_path):
    obs, _ = synth_file
    report_path = tmp_path / "ablate.json"
    assert run(["ablate", "--input", obs, "--no-normalize",
                "--ranks", "2,2,2,2,2,2", "--eta", "0.1", "--lambda", "0",
                "--cd", "0.001", "--epochs", "25", "--split", "8:1:1",
                "--seed", "0", "--reps", "2", "--report", report_path]) == 0
    report = json.loads(report_path.read_text())
    assert len(report["repetitions"]) == 2
    for rep in report["repetitions"]:
        assert len(rep["init_checkpoint_sha256"]) == 64
        assert rep["pid"]["epochs_run"] >= 1
        assert rep["plain"]["epochs_run"] >= 1


def test_ablate_reduction_gains_make_arms_identical(synth_file, tmp_path):
    obs, _ = synth_file
    report_path = tmp_path / "ablate.json"
    assert run(["ablate", "--input", obs, "--no-normalize",
                "--ranks", "2,2,2,2,2,2", "--eta", "0.1", "--lambda", "0",
                "--cp", "1", "--ci", "0", "--cd", "0", "--epochs", "20",
                "--split", "8:1:1", "--seed", "1", "--report", report_path]) == 0
    report = json.loads(report_path.read_text())
    rep = report["repetitions"][0]
    assert rep["pid"] == rep["plain"]


# ----------------------------------------------------------------- grid

def test_grid_single_point(synth_file, tmp_path):
    obs, _ = synth_file
    report_path = tmp_path / "grid.json"
    assert run(["grid", "--input", obs, "--no-normalize",
                "--ranks", "2,2,2,2,2,2", "--etas", "0.05", "--lambdas", "0.001",
                "--epochs", "15", "--split", "8:1:1", "--report", report_path]) == 0
    report = json.loads(report_path.read_text())
    assert len(report["cells"]) == 1
    assert report["winner"]["eta"] == 0.05
    assert report["winner"]["lambda"] == 0.001


def test_grid_divergent_cell_is_isolated(synth_file, tmp_path):
    obs, _ = synth_file
    report_path = tmp_path / "grid.json"
    assert run(["grid", "--input", obs, "--no-normalize",
                "--ranks", "2,2,2,2,2,2", "--etas", "5000,0.05",
                "--lambdas", "0", "--epochs", "15", "--split", "8:1:1",
                "--report", report_path]) == 0
    report = json.loads(report_path.read_text())
    by_eta = {c["eta"]: c for c in report["cells"]}
    assert by_eta[5000.0]["diverged"] is True
    assert by_eta[0.05]["diverged"] is False
    assert report["winner"]["eta"] == 0.05


def test_grid_winner_minimizes_validation_rmse(synth_file, tmp_path):
    obs, _ = synth_file
    report_path = tmp_path / "grid.json"
    assert run(["grid", "--input", obs, "--no-normalize",
                "--ranks", "2,2,2,2,2,2", "--etas", "0.1,0.03",
                "--lambdas", "0,0.01", "--epochs", "20", "--split", "8:1:1",
                "--report", report_path]) == 0
    report = json.loads(report_path.read_text())
    viable = [c for c in report["cells"] if not c["diverged"]]
    assert report["winner"]["valid_rmse"] == min(c["valid_rmse"] for c in viable)


def test_grid_empty_is_parameter_error(synth_file, tmp_path, capsys):
    obs, _ = synth_file
    code = run(["grid", "--input", obs, "--no-normalize", "--etas", "",
                "--lambdas", "0.01", "--report", tmp_path / "grid.json"])
    assert code == 1
    assert "error:" in capsys.readouterr().err


def test_train_raw_domain_metrics(tmp_path):
    path = tmp_path / "d.txt"
    rng = np.random.default_rng(1)
    lines = [f"{i} {j} {k} {rng.uniform(0, 5):.6f}"
             for i in range(5) for j in range(5) for k in range(3)]
    path.write_text("\n".join(lines) + "\n")
    log_report = tmp_path / "log.json"
    raw_report = tmp_path / "raw.json"
    base = ["train", "--input", path, "--ranks", "2,2,2,1,1,1", "--eta", "0.1",
            "--lambda", "0", "--epochs", "15", "--split", "6:2:2", "--reps", "1"]
    assert run(base + ["--report", log_report]) == 0
    assert run(base + ["--raw-domain-metrics", "--report", raw_report]) == 0
    log_rmse = json.loads(log_report.read_text())["mean_rmse"]
    raw_rmse = json.loads(raw_report.read_text())["mean_rmse"]
    assert raw_rmse != pytest.approx(log_rmse, rel=1e-6)


def test_train_rejects_zero_reps(synth_file, tmp_path, capsys):
    obs, _ = synth_file
    code = run(train_args(obs, tmp_path / "r.json", **{"--reps": 0}))
    assert code == 1
    assert "reps" in capsys.readouterr().err


# ----------------------------------------------------- input protection

def test_commands_do_not_mutate_input(synth_file, tmp_path):
    obs, _ = synth_file
    original = obs.read_bytes()
    run(train_args(obs, tmp_path / "r.json", **{"--epochs": 5}))
    assert obs.read_bytes() == original
