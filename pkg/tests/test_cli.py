import json
import os

import numpy as np
import pytest

from kanolab.cli import main


def run(args):
    return main(args)


def test_gen_is_idempotent_and_refuses_mismatch(tmp_path):
    out = str(tmp_path)
    args = ["gen", "--benchmark", "G1", "--preset", "ci", "--seed", "3", "--out", out]
    assert run(args) == 0
    data_dir = os.path.join(out, "data")
    files = sorted(os.listdir(data_dir))
    assert files == ["G1_ci_seed3_testA.knd", "G1_ci_seed3_testB.knd", "G1_ci_seed3_train.knd"]
    digests = {f: open(os.path.join(data_dir, f), "rb").read() for f in files}
    # rerun: identical bytes
    assert run(args) == 0
    for f in files:
        assert open(os.path.join(data_dir, f), "rb").read() == digests[f]
    # conflicting manifest refused without --force
    manifest = os.path.join(out, "manifests", "gen_G1_ci_seed3.json")
    blob = json.load(open(manifest))
    blob["seed"] = 99
    json.dump(blob, open(manifest, "w"))
    assert run(args) == 1
    assert run(args + ["--force"]) == 0


def test_gen_quantum_trajectories(tmp_path):
    out = str(tmp_path)
    assert run(["gen", "--benchmark", "DW", "--preset", "ci", "--seed", "1",
                "--out", out]) == 0
    from kanolab.serialize import load_trajectories
    recs = load_trajectories(os.path.join(out, "data", "DW_ci_seed1.knt"))
    assert len(recs) == 4
    assert recs[0].psis.shape[0] == 21  # ci preset: 20 snapshots + initial


def test_train_eval_extract_synthetic_kano(tmp_path):
    out = str(tmp_path)
    base = ["--benchmark", "G1", "--preset", "ci", "--seed", "2", "--out", out]
    assert run(["gen"] + base) == 0
    assert run(["train", "--model", "kano"] + base) == 0
    ckpt = os.path.join(out, "models", "G1_kano_ci_seed2.knc")
    assert os.path.exists(ckpt)
    assert os.path.exists(os.path.join(out, "models", "G1_kano_ci_seed2_metrics.jsonl"))
    assert run(["eval", "--model", "kano"] + base) == 0
    report = json.load(open(os.path.join(out, "reports", "G1_kano_ci_seed2_metrics.json")))
    assert "kano" in report["group_losses"]
    a, b = report["group_losses"]["kano"]
    assert np.isfinite(a) and np.isfinite(b)
    assert run(["extract", "--model", "kano"] + base) == 0
    sym_dir = os.path.join(out, "symbols", "G1_kano_ci_seed2")
    symbols = json.load(open(os.path.join(sym_dir, "symbols.json")))
    assert "x^2*f" in symbols["ground_truth"]
    assert os.path.exists(os.path.join(sym_dir, "symbol.x.csv"))
    assert os.path.exists(os.path.join(sym_dir, "act.u.csv"))


def test_eval_on_untrained_model_reports_finite_losses(tmp_path):
    out = str(tmp_path)
    base = ["--benchmark", "G2", "--preset", "ci", "--seed", "5", "--out", out]
    assert run(["gen"] + base) == 0
    # train with zero epochs is not exposed; instead save an untrained checkpoint
    from kanolab.datagen import build_dataset
    from kanolab.kano import synthetic_kano
    from kanolab.presets import grid_for
    from kanolab.serialize import save_checkpoint

    grid = grid_for("G2", "ci")
    model = synthetic_kano(grid, -10, 10, seed=0)
    os.makedirs(os.path.join(out, "models"), exist_ok=True)
    save_checkpoint(model, os.path.join(out, "models", "G2_kano_ci_seed5.knc"))
    assert run(["eval", "--model", "kano"] + base) == 0
    report = json.load(open(os.path.join(out, "reports", "G2_kano_ci_seed5_metrics.json")))
    a, b = report["group_losses"]["kano"]
    assert np.isfinite(a) and np.isfinite(b) and a > 0.1


def test_extract_refuses_fno(tmp_path):
    out = str(tmp_path)
    base = ["--benchmark", "G1", "--preset", "ci", "--seed", "7", "--out", out]
    assert run(["gen"] + base) == 0
    assert run(["train", "--model", "fno"] + base) == 0
    assert run(["extract", "--model", "fno"] + base) == 1


def test_train_requires_dataset(tmp_path):
    out = str(tmp_path)
    rc = run(["train", "--benchmark", "G1", "--model", "kano", "--preset", "ci",
              "--seed", "0", "--out", out])
    assert rc == 1


def test_model_benchmark_compatibility(tmp_path):
    out = str(tmp_path)
    rc = run(["train", "--benchmark", "G1", "--model", "qkano", "--preset", "ci",
              "--seed", "0", "--out", out])
    assert rc == 1


def test_eval_tail_and_matrix_probes(tmp_path):
    out = str(tmp_path)
    assert run(["eval", "--benchmark", "tail", "--preset", "ci", "--seed", "0",
                "--out", out]) == 0
    summary = json.load(open(os.path.join(out, "reports", "tail_ci_seed0_summary.json")))
    assert abs(summary["nonzero_sum"]["mean"] + 1.0) < 0.3
    assert abs(summary["moment_cancelled"]["mean"] + 2.0) < 0.4
    assert run(["eval", "--benchmark", "matrix", "--preset", "ci", "--seed", "0",
                "--out", out]) == 0
    stats = json.load(open(os.path.join(out, "reports", "matrix_ci_seed0_density.json")))
    assert stats["shift_nonzero_count"] == stats["n"] - 2
    assert stats["toeplitz_density"] == 1.0


def test_quantum_train_eval_roundtrip(tmp_path):
    out = str(tmp_path)
    base = ["--benchmark", "DW", "--preset", "ci", "--seed", "4", "--out", out]
    assert run(["gen"] + base) == 0
    assert run(["train", "--model", "qkano"] + base) == 0
    assert run(["eval", "--model", "qkano"] + base) == 0
    report = json.load(open(os.path.join(out, "reports", "DW_qkano_ci_seed4_metrics.json")))
    curve = report["infidelity"]["qkano"]["value"]
    assert len(curve) == 21
    assert curve[0] == 0.0
    assert all(np.isfinite(v) for v in curve)
