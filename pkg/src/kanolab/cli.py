"""Batch entry point tying generation, training, evaluation, and symbol
extraction into reproducible experiment runs.

Every command writes a manifest with its resolved configuration and content
digests; reruns with the same seed refuse to overwrite mismatching outputs
unless --force is given. Exit codes: 0 ok, 1 user error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

TOOL_VERSION = "0.1.0"


def _configure_threads():
    threads = os.environ.get("KANOLAB_THREADS")
    if threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, threads)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kanolab",
        description="operator-learning laboratory: data generation, training, "
                    "evaluation, and symbolic extraction")
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--benchmark", required=True,
                        choices=["G1", "G2", "G3", "DW", "NLSE", "tail", "matrix"])
    common.add_argument("--model", default=None,
                        choices=["fno", "kano", "kano_symbolic", "qkano", "qkano_symbolic"])
    common.add_argument("--supervision", default="full", choices=["full", "pos", "pos&mom"])
    common.add_argument("--preset", default="desk", choices=["paper", "desk", "ci"])
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", required=True, help="output workspace directory")
    common.add_argument("--force", action="store_true",
                        help="overwrite outputs whose manifests do not match")
    sub.add_parser("gen", parents=[common], help="generate benchmark datasets")
    sub.add_parser("train", parents=[common], help="train a model on generated data")
    sub.add_parser("eval", parents=[common], help="evaluate a checkpoint or run a probe")
    sub.add_parser("extract", parents=[common], help="export edge curves and fitted symbols")
    return parser


def _slug(args, with_model=False) -> str:
    parts = [args.benchmark]
    if with_model and args.model:
        parts.append(args.model)
        if args.model.startswith("qkano") and args.supervision != "full":
            parts.append(args.supervision.replace("&", "-"))
    parts += [args.preset, f"seed{args.seed}"]
    return "_".join(parts)


def _manifest_path(out, name):
    return os.path.join(out, "manifests", name + ".json")


def _write_manifest(out, name, payload):
    os.makedirs(os.path.join(out, "manifests"), exist_ok=True)
    payload = {**payload, "tool_version": TOOL_VERSION}
    with open(_manifest_path(out, name), "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
    return payload


def _check_manifest(out, name, payload, force):
    """True when outputs already exist and match; raises unless --force on mismatch."""
    from .errors import UserError

    path = _manifest_path(out, name)
    if not os.path.exists(path):
        return False
    with open(path) as fh:
        existing = json.load(fh)
    # compare the resolved configuration; result-only keys (digests, hashes)
    # and the tool version are not part of the identity
    if {k: existing.get(k) for k in payload} == payload:
        return True
    if not force:
        raise UserError(f"existing manifest {path} does not match this run; "
                        f"pass --force to overwrite")
    return False


def _data_paths(args):
    base = os.path.join(args.out, "data")
    slug = _slug(args)
    if args.benchmark in ("DW", "NLSE"):
        return {"trajectories": os.path.join(base, slug + ".knt")}
    return {"train": os.path.join(base, slug + "_train.knd"),
            "test_a": os.path.join(base, slug + "_testA.knd"),
            "test_b": os.path.join(base, slug + "_testB.knd")}


def cmd_gen(args) -> int:
    from .datagen import build_dataset
    from .presets import grid_for, preset_for
    from .quantumsim import make_trajectories
    from .serialize import save_dataset, save_trajectories

    p = preset_for(args.benchmark, args.preset)
    grid = grid_for(args.benchmark, args.preset)
    paths = _data_paths(args)
    os.makedirs(os.path.join(args.out, "data"), exist_ok=True)
    if args.benchmark in ("DW", "NLSE"):
        config = {"command": "gen", "benchmark": args.benchmark, "preset": args.preset,
                  "seed": args.seed, "sizes": {"trajectories": p["trajectories"],
                                               "snapshots": p["snapshots"]}}
    else:
        config = {"command": "gen", "benchmark": args.benchmark, "preset": args.preset,
                  "seed": args.seed, "sizes": {"train": p["train"], "test": p["test"]}}
    name = "gen_" + _slug(args)
    if _check_manifest(args.out, name, _stable(config), args.force) \
            and all(os.path.exists(q) for q in paths.values()):
        print(f"gen: outputs for {name} already present, nothing to do")
        return 0
    digests = {}
    if args.benchmark in ("DW", "NLSE"):
        records = make_trajectories(p["trajectories"], args.benchmark, grid,
                                    seed=args.seed, dt=p["dt"],
                                    steps_per_snapshot=p["steps_per_snapshot"],
                                    snapshots=p["snapshots"])
        digests["trajectories"] = save_trajectories(records, paths["trajectories"])
        print(f"gen: {p['trajectories']} trajectories x {p['snapshots'] + 1} snapshots "
              f"-> {paths['trajectories']}")
    else:
        spec = [("train", "A", p["train"], 10 * args.seed + 1),
                ("test_a", "A", p["test"], 10 * args.seed + 2),
                ("test_b", "B", p["test"], 10 * args.seed + 3)]
        for key, group, count, seed in spec:
            ds = build_dataset(args.benchmark, group, count, seed, grid)
            digests[key] = save_dataset(ds, paths[key])
        print(f"gen: {p['train']} train + 2x{p['test']} test pairs -> "
              f"{os.path.join(args.out, 'data')}")
    _write_manifest(args.out, name, {**_stable(config), "digests": digests})
    return 0


def _stable(config: dict) -> dict:
    return json.loads(json.dumps(config, sort_keys=True))


def _require(path, what):
    from .errors import UserError

    if not os.path.exists(path):
        raise UserError(f"{what} not found at {path}; run `kanolab gen` first")


def _build_model(args, p, grid, train_data):
    from .fno import FnoNet
    from .kano import QkanoModel, synthetic_kano

    if args.benchmark in ("DW", "NLSE"):
        if args.model == "fno":
            return FnoNet(grid, width=p["fno_width"], n_layers=p["fno_layers"],
                          activation="gelu", in_channels=2, out_channels=2,
                          seed=args.seed)
        state_dep = args.benchmark == "NLSE"
        return QkanoModel(grid, dt_macro=p["dt"] * p["steps_per_snapshot"],
                          state_dependent=state_dep, use_activation=True,
                          seed=args.seed)
    import numpy as np

    if args.model == "fno":
        return FnoNet(grid, width=p["fno_width"], n_layers=p["fno_layers"],
                      activation="gelu", seed=args.seed,
                      out_gain=float(np.std(train_data.targets)))
    lo = float(train_data.targets.min())
    hi = float(train_data.targets.max())
    return synthetic_kano(grid, lo, hi, seed=args.seed)


def cmd_train(args) -> int:
    from .errors import UserError
    from .presets import grid_for, preset_for
    from .serialize import load_dataset, load_trajectories, save_checkpoint
    from .train import TrainConfig, freeze_and_refine, train_cascade, write_metrics

    if args.model is None:
        raise UserError("train requires --model")
    quantum = args.benchmark in ("DW", "NLSE")
    if quantum and args.model in ("kano", "kano_symbolic"):
        raise UserError(f"model {args.model} applies to synthetic benchmarks only")
    if not quantum and args.model.startswith("qkano"):
        raise UserError(f"model {args.model} applies to quantum benchmarks only")
    p = preset_for(args.benchmark, args.preset)
    grid = grid_for(args.benchmark, args.preset)
    paths = _data_paths(args)
    if quantum:
        _require(paths["trajectories"], "trajectory data")
        data = load_trajectories(paths["trajectories"])
        if data[0].grid != grid:
            raise UserError(f"dataset grid n={data[0].grid.n} does not match "
                            f"preset grid n={grid.n}")
    else:
        _require(paths["train"], "training data")
        data = load_dataset(paths["train"])
        if data.grid != grid:
            raise UserError(f"dataset grid n={data.grid.n} does not match "
                            f"preset grid n={grid.n}")
    model = _build_model(args, p, grid, None if quantum else data)
    config = TrainConfig(supervision=args.supervision, seed=args.seed,
                         rollout_steps=p.get("train_steps", 10),
                         symbolic_freeze=args.model.endswith("symbolic"))
    if args.model == "fno":
        stages = p["fno_stages"]
        if not quantum:
            config = replace(config, batch_size=p["fno_batch"])
    elif quantum:
        stages = p["qkano_stages"]
    else:
        stages = p["kano_stages"]
    history = train_cascade(model, data, config, stages)
    if args.model.endswith("symbolic"):
        model, refine_history = freeze_and_refine(
            model, data, _staged_config(config, p["refine_stages"]))
        history = history + refine_history
    os.makedirs(os.path.join(args.out, "models"), exist_ok=True)
    slug = _slug(args, with_model=True)
    ckpt = os.path.join(args.out, "models", slug + ".knc")
    digest = save_checkpoint(model, ckpt, extra={"config": config.to_json()})
    write_metrics(os.path.join(args.out, "models", slug + "_metrics.jsonl"), history)
    n_params = model.n_parameters()
    print(f"train: {args.model} on {args.benchmark} [{args.preset}] "
          f"{n_params} parameters, final loss {history[-1]['loss']:.3e} -> {ckpt}")
    _write_manifest(args.out, "train_" + slug, {
        "command": "train", "benchmark": args.benchmark, "model": args.model,
        "supervision": args.supervision, "preset": args.preset, "seed": args.seed,
        "stages": [[lr, ep] for lr, ep in stages], "parameters": n_params,
        "final_loss": history[-1]["loss"], "checkpoint_hash": digest})
    return 0


def _staged_config(config, stages):
    # freeze_and_refine takes a single config; fold the cascade into one run
    from dataclasses import replace

    total = sum(ep for _, ep in stages)
    return replace(config, lr=stages[0][0], epochs=total)


def cmd_eval(args) -> int:
    from .errors import UserError
    from .presets import grid_for, preset_for

    if args.benchmark == "tail":
        return _eval_tail(args)
    if args.benchmark == "matrix":
        return _eval_matrix(args)
    if args.model is None:
        raise UserError("eval requires --model for training benchmarks")
    from .eval import MetricsReport, curve_to_csv, infidelity_curve, interpolation_test, loss_test
    from .serialize import load_checkpoint, load_dataset, load_trajectories

    p = preset_for(args.benchmark, args.preset)
    grid = grid_for(args.benchmark, args.preset)
    slug = _slug(args, with_model=True)
    ckpt_path = os.path.join(args.out, "models", slug + ".knc")
    _require(ckpt_path, "checkpoint")
    model, header = load_checkpoint(ckpt_path)
    paths = _data_paths(args)
    os.makedirs(os.path.join(args.out, "reports"), exist_ok=True)
    report = MetricsReport(config_digest=header["arch_hash"])
    if args.benchmark in ("DW", "NLSE"):
        _require(paths["trajectories"], "ground-truth trajectories")
        records = load_trajectories(paths["trajectories"])
        steps, curve = infidelity_curve(model, records, steps=p["snapshots"])
        report.infidelity[args.model] = (steps, curve)
        curve_to_csv(os.path.join(args.out, "reports", slug + "_infidelity.csv"),
                     {"step": list(map(int, steps)), "infidelity": list(map(float, curve))})
        print(f"eval: {slug} infidelity step {steps[-1]} = {curve[-1]:.3e}")
    else:
        _require(paths["test_a"], "group A test data")
        _require(paths["test_b"], "group B test data")
        test_a, test_b = load_dataset(paths["test_a"]), load_dataset(paths["test_b"])
        mean_a, mean_b = loss_test(model, test_a, test_b)
        report.group_losses[args.model] = (mean_a, mean_b)
        ts, ratios = interpolation_test(model, args.benchmark, grid, mean_a,
                                        seed=10 * args.seed + 4,
                                        steps=p["interp_steps"], n_pairs=p["interp_pairs"])
        report.interpolation[args.model] = (ts, ratios)
        curve_to_csv(os.path.join(args.out, "reports", slug + "_interpolation.csv"),
                     {"t": list(map(float, ts)), "loss_ratio": list(map(float, ratios))})
        print(f"eval: {slug} loss A {mean_a:.3e}  B {mean_b:.3e}  "
              f"B/A {mean_b / mean_a:.2f}  interp end/start "
              f"{ratios[-1] / max(ratios[0], 1e-300):.2f}")
    report.write(os.path.join(args.out, "reports", slug + "_metrics.json"))
    return 0


def _eval_tail(args) -> int:
    import numpy as np

    from .eval import curve_to_csv, tail_probe
    from .presets import grid_for, preset_for
    from .spectral import Field, idft_values

    p = preset_for("tail", args.preset)
    grid = grid_for("tail", args.preset)
    rng_master = np.random.default_rng(args.seed)
    rows = {"kind": [], "trial": [], "slope": []}
    slopes = {"nonzero_sum": [], "moment_cancelled": []}
    for trial in range(p["inputs"]):
        for kind in ("nonzero_sum", "moment_cancelled"):
            coeffs = np.zeros(grid.n, dtype=complex)
            idx = grid.modes.indices
            sel = np.abs(idx) <= p["band"]
            coeffs[sel] = rng_master.normal(size=sel.sum()) \
                + 1j * rng_master.normal(size=sel.sum())
            if kind == "moment_cancelled":
                coeffs[idx == 0] -= coeffs[sel].sum()
                boost = 8.0 * np.abs(coeffs).sum()
                coeffs[idx == 1] += boost
                coeffs[idx == -1] -= boost
            else:
                coeffs[idx == 0] += 6.0 * np.abs(coeffs).sum()
            res = tail_probe(Field(grid, idft_values(coeffs, grid)), power=1)
            rows["kind"].append(kind)
            rows["trial"].append(trial)
            rows["slope"].append(res.slope)
            slopes[kind].append(res.slope)
    os.makedirs(os.path.join(args.out, "reports"), exist_ok=True)
    slug = _slug(args)
    curve_to_csv(os.path.join(args.out, "reports", slug + "_slopes.csv"), rows)
    summary = {kind: {"mean": float(np.mean(v)), "min": float(np.min(v)),
                      "max": float(np.max(v))} for kind, v in slopes.items()}
    with open(os.path.join(args.out, "reports", slug + "_summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2)
    print(f"eval: tail slopes nonzero-sum mean {summary['nonzero_sum']['mean']:.3f}, "
          f"moment-cancelled mean {summary['moment_cancelled']['mean']:.3f}")
    return 0


def _eval_matrix(args) -> int:
    from .eval import curve_to_csv, matrix_demo
    from .presets import preset_for

    p = preset_for("matrix", args.preset)
    demo = matrix_demo(p["n"])
    os.makedirs(os.path.join(args.out, "reports"), exist_ok=True)
    slug = _slug(args)
    stats = {"n": p["n"], "shift_nonzero_count": demo.shift_nonzero_count,
             "shift_density": demo.shift_density,
             "toeplitz_density": demo.toeplitz_density}
    with open(os.path.join(args.out, "reports", slug + "_density.json"), "w") as fh:
        json.dump(stats, fh, indent=2)
    curve_to_csv(os.path.join(args.out, "reports", slug + "_toeplitz_row.csv"),
                 {"m": list(range(-p["n"] + 1, p["n"])),
                  "re": [float(demo.toeplitz[max(0, m), max(0, -m)].real)
                         for m in range(-p["n"] + 1, p["n"])],
                  "im": [float(demo.toeplitz[max(0, m), max(0, -m)].imag)
                         for m in range(-p["n"] + 1, p["n"])]})
    print(f"eval: matrix demo n={p['n']} shift density {demo.shift_density:.4f}, "
          f"toeplitz density {demo.toeplitz_density:.4f}")
    return 0


def cmd_extract(args) -> int:
    import numpy as np

    from .errors import UserError
    from .eval import symbolic_compare
    from .fno import FnoNet
    from .kan import edge_curve_to_csv, fit_symbolic, sample_edge
    from .kano import (KanoNet, QkanoModel, extract_operator_terms, extract_phase_terms,
                       ground_truth_operator_terms, ground_truth_phase_terms)
    from .serialize import load_checkpoint

    if args.model is None:
        raise UserError("extract requires --model")
    slug = _slug(args, with_model=True)
    ckpt_path = os.path.join(args.out, "models", slug + ".knc")
    _require(ckpt_path, "checkpoint")
    model, header = load_checkpoint(ckpt_path)
    if isinstance(model, FnoNet):
        raise UserError("an FNO checkpoint is not symbolically extractable")
    out_dir = os.path.join(args.out, "symbols", slug)
    os.makedirs(out_dir, exist_ok=True)
    if isinstance(model, KanoNet):
        items = [(f"symbol.{n}", e) for n, e in model.layers[0].symbol.edge_items()]
        items += [(f"act.{n}", e) for n, e in model.layers[0].activation.edge_items()]
        terms = extract_operator_terms(model)
        truth = ground_truth_operator_terms(args.benchmark)
    else:
        assert isinstance(model, QkanoModel)
        items = model.edge_items()
        terms = extract_phase_terms(model)
        truth = ground_truth_phase_terms(args.benchmark)
    edge_report = {}
    for name, edge in items:
        safe = name.replace("|", "").replace("*", "x")
        edge_curve_to_csv(edge, 201, os.path.join(out_dir, safe + ".csv"))
        fit = fit_symbolic(sample_edge(edge, 201))
        edge_report[name] = fit.to_json()
    diffs, worst = symbolic_compare(terms, truth)
    payload = {"terms": terms, "ground_truth": truth,
               "comparison": {"per_term": diffs, "max_deviation": worst},
               "edge_fits": edge_report}
    with open(os.path.join(out_dir, "symbols.json"), "w") as fh:
        json.dump(payload, fh, indent=2)
    print(f"extract: {slug} max coefficient deviation {worst:.2e} -> {out_dir}")
    return 0


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "eval": cmd_eval, "extract": cmd_extract}


def main(argv=None) -> int:
    _configure_threads()
    args = build_parser().parse_args(argv)
    from .errors import NumericsError, UserError

    try:
        return COMMANDS[args.command](args)
    except UserError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericsError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
