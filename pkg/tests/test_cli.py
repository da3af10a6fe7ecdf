import json
import os

import numpy as np
import pytest

from orthomerge import arith, cli, io


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    s = d / "suite"
    assert run("gen", "--tasks", 2, "--input-dim", 10, "--feat-per-task", 4, "--overlap", 0,
               "--samples", 100, "--seed", 1, "--out", s) == 0
    assert run("init", "--suite", s, "--hidden", 5, "--seed", 1, "--out", d / "theta0.json") == 0
    for t in (0, 1):
        assert run("train", "--theta0", d / "theta0.json", "--task", s / f"task{t}_train.json",
                   "--val", s / f"task{t}_val.json", "--epochs", 10, "--lr", 0.01,
                   "--seed", t, "--out", d / f"t{t}.json") == 0
    return d


def test_gen_disjoint_and_deterministic(work, tmp_path):
    a = io.load_dataset(work / "suite" / "task0_train.json")
    b = io.load_dataset(work / "suite" / "task1_train.json")
    assert not set(a.feature_set) & set(b.feature_set)
    assert run("gen", "--tasks", 2, "--input-dim", 10, "--feat-per-task", 4,
               "--samples", 100, "--seed", 1, "--out", tmp_path / "again") == 0
    for name in os.listdir(work / "suite"):
        if name != "manifest.json":
            assert (work / "suite" / name).read_bytes() == (tmp_path / "again" / name).read_bytes()


def test_gen_infeasible(tmp_path, capsys):
    code = run("gen", "--tasks", 3, "--input-dim", 5, "--feat-per-task", 4, "--out", tmp_path)
    assert code == 1
    assert "InfeasibleSpec" in capsys.readouterr().err


def test_usage_errors(tmp_path):
    with pytest.raises(SystemExit) as info:
        run("frobnicate")
    assert info.value.code == 2
    with pytest.raises(SystemExit) as info:
        run("validate", "nonsense", "--out", tmp_path)
    assert info.value.code == 2
    assert run("init", "--out", tmp_path / "x.json") == 2


def test_missing_file(tmp_path, capsys):
    code = run("eval", "accuracy", "--model", tmp_path / "nope.json", "--data", "x",
               "--out", tmp_path / "o")
    assert code == 1
    assert "nope.json" in capsys.readouterr().err


def test_train_epochs_zero_is_anchor(work):
    s = work / "suite"
    assert run("train", "--theta0", work / "theta0.json", "--task", s / "task0_train.json",
               "--epochs", 0, "--out", work / "zero.json") == 0
    a, b = io.read_json(work / "zero.json"), io.read_json(work / "theta0.json")
    assert a["layers"] == b["layers"]


def test_train_lambda_100_penalty_decreases(work):
    s = work / "suite"
    assert run("train", "--theta0", work / "theta0.json", "--task", s / "task0_train.json",
               "--lambda", 100, "--epochs", 15, "--lr", 0.001, "--out", work / "l100.json") == 0
    lines = (work / "l100.history.csv").read_text().splitlines()
    assert lines[0] == "epoch,task_loss,ortho_loss,val_acc"
    ortho = [float(r.split(",")[2]) for r in lines[1:]]
    assert len(ortho) == 15
    for a, b in zip(ortho, ortho[1:]):
        assert b <= 1.05 * a
    meta = io.read_json(work / "l100.json")["meta"]
    assert meta["lambda"] == 100.0 and meta["task_id"] == "task0"


def test_train_lambda_zero_matches_library(work):
    from orthomerge.finetune import TrainConfig, finetune_task

    theta0 = io.load_checkpoint(work / "theta0.json")
    ds = io.load_dataset(work / "suite" / "task1_train.json")
    val = io.load_dataset(work / "suite" / "task1_val.json")
    theta, _ = finetune_task(theta0, ds, val, train=TrainConfig(10, 0.01, 32, 1))
    saved = io.load_checkpoint(work / "t1.json")
    for n in theta.layers:
        np.testing.assert_array_equal(saved[n], theta[n])


def test_train_divergence_exit_code(work, capsys):
    s = work / "suite"
    code = run("train", "--theta0", work / "theta0.json", "--task", s / "task0_train.json",
               "--lambda", 100, "--lr", 5, "--epochs", 20, "--out", work / "div.json")
    assert code == 3
    assert "numerical failure" in capsys.readouterr().err


def test_merge_alpha_zero_is_anchor(work):
    assert run("merge", "--theta0", work / "theta0.json", "--models", work / "t0.json",
               work / "t1.json", "--alpha", 0, "--out", work / "m0.json") == 0
    a, b = io.read_json(work / "m0.json"), io.read_json(work / "theta0.json")
    assert json.dumps(a["layers"]) == json.dumps(b["layers"])


def test_negate_then_merge_back(work):
    assert run("negate", "--theta0", work / "theta0.json", "--model", work / "t0.json",
               "--alpha", 0.7, "--out", work / "neg.json") == 0
    theta0 = io.load_checkpoint(work / "theta0.json")
    tau = arith.extract(theta0, io.load_checkpoint(work / "t0.json"), "task0")
    io.save_checkpoint(work / "tau0.json", tau)
    assert run("merge", "--theta0", work / "neg.json", "--models", work / "tau0.json",
               "--alpha", 0.7, "--out", work / "back.json") == 0
    back = io.load_checkpoint(work / "back.json")
    for n in theta0.layers:
        np.testing.assert_allclose(back[n], theta0[n], atol=1e-12, rtol=0)


def test_merge_shape_mismatch(work, tmp_path):
    assert run("init", "--input-dim", 10, "--classes", 6, "--hidden", 3,
               "--out", tmp_path / "other.json") == 0
    assert run("merge", "--theta0", tmp_path / "other.json", "--models", work / "t0.json",
               "--out", tmp_path / "bad.json") == 1


def test_sweep_alpha_table(work):
    out = work / "sweep"
    assert run("sweep-alpha", "--theta0", work / "theta0.json", "--models", work / "t0.json",
               work / "t1.json", "--data", work / "suite", "--svg", "--out", out) == 0
    lines = (out / "alpha_table.csv").read_text().splitlines()
    assert len(lines) == 22 and lines[0] == "alpha,mean_acc,task0,task1"
    assert [float(r.split(",")[0]) for r in lines[1:]] == list(arith.ALPHA_GRID)
    summary = io.read_json(out / "summary.json")
    assert summary["alpha"] in arith.ALPHA_GRID
    assert (out / "alpha_table.svg").read_text().startswith("<?xml")


@pytest.mark.parametrize("threshold", ["0.95", "0.9", "0.8"])
def test_sweep_negation(work, threshold):
    out = work / f"neg{threshold}"
    assert run("sweep-alpha", "--theta0", work / "theta0.json", "--models", work / "t0.json",
               work / "t1.json", "--data", work / "suite", "--negate", "task0",
               "--threshold", threshold, "--out", out) == 0
    summary = io.read_json(out / "summary.json")
    rows = (out / "alpha_table.csv").read_text().splitlines()[1:]
    assert len(rows) == 21
    chosen = next(r for r in rows if float(r.split(",")[0]) == summary["alpha"])
    if summary["feasible"]:
        assert float(chosen.split(",")[2]) >= float(threshold) * summary["control_baseline"] - 1e-12


def test_sweep_negation_unknown_task(work, tmp_path):
    assert run("sweep-alpha", "--theta0", work / "theta0.json", "--models", work / "t0.json",
               "--data", work / "suite", "--negate", "task9", "--out", tmp_path) == 2


def test_norm_acc(tmp_path, capsys):
    assert run("eval", "norm-acc", "--merged", "1,1", "--single", "1,1", "--out", tmp_path) == 0
    assert capsys.readouterr().out.strip() == "100.00"
    assert io.read_json(tmp_path / "report.json")["normalized_accuracy"] == 100.0


def test_similarity_single(work, tmp_path):
    assert run("analyze", "similarity", "--theta0", work / "theta0.json", "--models",
               work / "t0.json", "--svg", "--out", tmp_path) == 0
    rep = io.read_json(tmp_path / "report.json")
    assert rep["interference"]["cosine_matrix"] == [[1.0]]
    assert (tmp_path / "similarity.svg").exists()


def test_interference_zero_tau(work, tmp_path):
    assert run("eval", "interference", "--theta0", work / "theta0.json", "--model",
               work / "theta0.json", "--data", work / "suite" / "task1_test.json",
               "--out", tmp_path) == 0
    assert io.read_json(tmp_path / "report.json")["interference"]["mean_abs"] == 0.0


def test_eval_accuracy_gap_ntk_angles(work, tmp_path):
    s = work / "suite"
    assert run("eval", "accuracy", "--model", work / "t0.json", "--data", s / "task0_test.json",
               "--out", tmp_path / "acc") == 0
    acc = io.read_json(tmp_path / "acc" / "report.json")["abs_accuracy"]["task0/test"]
    assert 0.0 <= acc <= 1.0
    assert run("eval", "gap", "--theta0", work / "theta0.json", "--model-t", work / "t0.json",
               "--model-j", work / "t1.json", "--data", s / "task0_test.json",
               "--out", tmp_path / "gap") == 0
    assert run("eval", "ntk", "--theta0", work / "theta0.json", "--data", s / "task0_test.json",
               s / "task1_test.json", "--per-task", 10, "--svg", "--out", tmp_path / "ntk") == 0
    assert (tmp_path / "ntk" / "ntk.csv").read_text().count("\n") == 21
    assert run("eval", "angles", "--model", work / "t0.json", "--theta0", work / "theta0.json",
               "--out", tmp_path / "ang") == 0
    assert run("eval", "angles", "--model", work / "t0.json", "--theta0", work / "theta0.json",
               "--strict", "--out", tmp_path / "ang2") == 1


def test_validate_psd(tmp_path):
    assert run("validate", "psd", "--trials", 10000, "--out", tmp_path) == 0
    rep = json.loads((tmp_path / "psd.json").read_text())
    assert rep["verdict"] == "pass" and rep["statistics"]["violations"] == 0
    assert (tmp_path / "psd.txt").read_text().startswith("psd: PASS")


def test_validate_alignment_from_files(work, tmp_path):
    assert run("validate", "alignment", "--theta0", work / "theta0.json", "--model",
               work / "t0.json", "--data", work / "suite" / "task0_train.json",
               "--out", tmp_path) == 0


@pytest.mark.slow
def test_validate_all(tmp_path):
    assert run("validate", "all", "--svg", "--out", tmp_path) == 0
    for name in cli.VALIDATORS:
        assert json.loads((tmp_path / f"{name}.json").read_text())["verdict"] == "pass"
    assert (tmp_path / "stiefel.svg").exists()
