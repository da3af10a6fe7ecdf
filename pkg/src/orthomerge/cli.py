"""
Command-line entry point.

Every command reads and writes plain files, so a pipeline is a sequence of
invocations; each output is accompanied by a run manifest. Exit codes: 0
success, 1 validation or metric failure, 2 usage error, 3 numerical
failure.
"""

import argparse
import os
import sys
import warnings

import numpy as np

from . import arith, io, metrics, net, protocol, synth, theory
from .errors import (DivergenceDetected, NumericalFailure, OrthoMergeError, ZeroVariance)
from .finetune import OrthoConfig, TrainConfig, finetune_task, pretrain_anchor

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _csv_list(text, cast=str):
    return [cast(v) for v in text.split(",") if v.strip() != ""]


def _layers_arg(text):
    return None if text in (None, "all") else tuple(_csv_list(text))


def _config(args):
    skip = {"func", "out"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _manifest_path(out):
    return out + ".manifest.json" if not os.path.isdir(out) else os.path.join(out, "manifest.json")


def _finish(manifest, outputs, path):
    for p in outputs:
        manifest.add_output(p)
    manifest.write(path)


def _load_suite_dir(directory, split, task_ids=None):
    meta = io.read_json(os.path.join(directory, "suite.json"))
    tids = task_ids or meta["task_ids"]
    paths = [os.path.join(directory, io.dataset_filename(t, split)) for t in tids]
    return {t: io.load_dataset(p) for t, p in zip(tids, paths)}, paths


# ---------------------------------------------------------------- gen / init

def cmd_gen(args):
    spec = synth.SynthTaskSpec(args.tasks, args.input_dim, args.feat_per_task, args.overlap,
                               args.classes, args.samples, args.noise, args.seed)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ZeroVariance)
        suite, (mean, scale) = synth.standardize(synth.generate_suite(spec))
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    os.makedirs(args.out, exist_ok=True)
    manifest = io.RunManifest.start(_config(args), seeds=[args.seed])
    outputs = []
    for tid, splits in suite.items():
        for split, ds in splits.items():
            path = os.path.join(args.out, io.dataset_filename(tid, split))
            io.save_dataset(path, ds)
            outputs.append(path)
    info = os.path.join(args.out, "suite.json")
    io.write_json(info, {"spec": spec.to_dict(), "task_ids": list(suite),
                         "standardization": {"mean": mean.tolist(), "scale": scale.tolist()}})
    outputs.append(info)
    _finish(manifest, outputs, os.path.join(args.out, "manifest.json"))
    print(f"wrote {len(outputs) - 1} dataset files to {args.out}")
    return EXIT_OK


def cmd_init(args):
    hidden = _csv_list(args.hidden, int)
    inputs = []
    if args.suite:
        info_path = os.path.join(args.suite, "suite.json")
        info = io.read_json(info_path)
        sspec = synth.SynthTaskSpec(**info["spec"])
        spec = protocol.model_spec_for(sspec, hidden, args.seed)
        inputs.append(info_path)
    else:
        if args.input_dim is None or args.classes is None:
            raise UsageError("init needs --suite or both --input-dim and --classes")
        spec = net.ModelSpec(args.input_dim, tuple(hidden), args.classes, seed=args.seed)
    manifest = io.RunManifest.start(_config(args), seeds=[args.seed], inputs=inputs)
    if args.pretrain_epochs:
        if not args.suite:
            raise UsageError("--pretrain-epochs needs --suite")
        data, paths = _load_suite_dir(args.suite, "train")
        manifest.inputs += [{"path": p, "sha256": io.file_digest(p)} for p in paths]
        theta0 = pretrain_anchor(spec, data, TrainConfig(args.pretrain_epochs, args.pretrain_lr,
                                                         args.batch_size, args.seed))
    else:
        theta0 = net.init_params(spec)
        theta0.meta = {"seed": args.seed, "lambda": 0.0, "task_id": None}
    io.save_checkpoint(args.out, theta0)
    _finish(manifest, [args.out], _manifest_path(args.out))
    print(f"wrote anchor {args.out} ({theta0.num_params} parameters)")
    return EXIT_OK


# ---------------------------------------------------------------- training

def cmd_train(args):
    theta0 = io.load_checkpoint(args.theta0)
    train_ds = io.load_dataset(args.task)
    val_ds = io.load_dataset(args.val) if args.val else None
    mode = "low_rank" if args.mode == "low-rank" else "full"
    ortho = OrthoConfig(args.lam, _layers_arg(args.layers), mode, args.rank, _layers_arg(args.tune))
    cfg = TrainConfig(args.epochs, args.lr, args.batch_size, args.seed)
    inputs = [args.theta0, args.task] + ([args.val] if args.val else [])
    manifest = io.RunManifest.start(_config(args), seeds=[args.seed], inputs=inputs)
    theta, hist = finetune_task(theta0, train_ds, val_ds, ortho, cfg, train_ds.task_id)
    io.save_checkpoint(args.out, theta)
    stem = os.path.splitext(args.out)[0]
    hist_path = stem + ".history.csv"
    io.write_csv(hist_path, ["epoch", "task_loss", "ortho_loss", "val_acc"], hist.rows())
    outputs = [args.out, hist_path]
    if args.svg and hist.epoch:
        from . import plotting

        plotting.training_history(hist, stem + ".history.svg")
        outputs.append(stem + ".history.svg")
    _finish(manifest, outputs, _manifest_path(args.out))
    last = f"task_loss={hist.task_loss[-1]:.4f} ortho_loss={hist.ortho_loss[-1]:.4f}" if hist.epoch else "no epochs"
    print(f"wrote {args.out}: {last}")
    return EXIT_OK


# ---------------------------------------------------------------- arithmetic

def _task_vectors(theta0, paths):
    taus = []
    for p in paths:
        model = io.load_checkpoint(p)
        taus.append(model if isinstance(model, arith.TaskVector) else arith.extract(theta0, model))
    return taus


def cmd_merge(args):
    theta0 = io.load_checkpoint(args.theta0)
    taus = _task_vectors(theta0, args.models)
    alphas = _csv_list(args.alpha, float)
    if len(alphas) == 1:
        alphas = alphas * len(taus)
    manifest = io.RunManifest.start(_config(args), inputs=[args.theta0, *args.models])
    merged = arith.merge(theta0, taus, alphas)
    io.save_checkpoint(args.out, merged)
    _finish(manifest, [args.out], _manifest_path(args.out))
    print(f"wrote merged model {args.out}")
    return EXIT_OK


def cmd_negate(args):
    theta0 = io.load_checkpoint(args.theta0)
    (tau,) = _task_vectors(theta0, [args.model])
    manifest = io.RunManifest.start(_config(args), inputs=[args.theta0, args.model])
    model = arith.negate(theta0, tau, args.alpha)
    io.save_checkpoint(args.out, model)
    _finish(manifest, [args.out], _manifest_path(args.out))
    print(f"wrote negated model {args.out}")
    return EXIT_OK


def cmd_sweep_alpha(args):
    theta0 = io.load_checkpoint(args.theta0)
    taus = _task_vectors(theta0, args.models)
    tids = [t.task_id for t in taus]
    info = io.read_json(os.path.join(args.data, "suite.json"))
    data, paths = _load_suite_dir(args.data, args.split, info["task_ids"])
    os.makedirs(args.out, exist_ok=True)
    manifest = io.RunManifest.start(_config(args), inputs=[args.theta0, *args.models, *paths])

    if args.negate:
        if args.negate not in tids:
            raise UsageError(f"--negate {args.negate} is not among the models' tasks {tids}")
        tau = taus[tids.index(args.negate)]
        controls = [t for t in data if t != args.negate]
        if not controls:
            raise UsageError("negation needs at least one control task in --data")

        def control_acc(params):
            return float(np.mean([metrics.accuracy(params, data[t]) for t in controls]))

        baseline = control_acc(theta0)
        table = []
        for a in arith.ALPHA_GRID:
            model = arith.negate(theta0, tau, a)
            accs = {"target": metrics.accuracy(model, data[args.negate]), "control": control_acc(model)}
            table.append(arith.AlphaRow(float(a), -accs["target"], accs))
        row = arith.select_negation(table, baseline, args.threshold)
        alpha = row.alpha if row is not None else 0.0
        selected = arith.negate(theta0, tau, alpha)
        header = ["alpha", "target_acc", "control_acc"]
        rows = [(r.alpha, r.accuracies["target"], r.accuracies["control"]) for r in table]
        summary = {"mode": "negate", "target": args.negate, "alpha": alpha,
                   "threshold": args.threshold, "control_baseline": baseline,
                   "feasible": row is not None}
    else:
        def evaluate(a):
            model = arith.merge(theta0, taus, a)
            accs = {t: metrics.accuracy(model, data[t]) for t in tids}
            return float(np.mean(list(accs.values()))), accs

        alpha, table = arith.grid_search_alpha(evaluate)
        selected = arith.merge(theta0, taus, alpha)
        header = ["alpha", "mean_acc", *tids]
        rows = [(r.alpha, r.objective, *[r.accuracies[t] for t in tids]) for r in table]
        summary = {"mode": "add", "tasks": tids, "alpha": alpha,
                   "objective": next(r.objective for r in table if r.alpha == alpha)}

    table_path = os.path.join(args.out, "alpha_table.csv")
    io.write_csv(table_path, header, rows)
    model_path = os.path.join(args.out, "selected.json")
    io.save_checkpoint(model_path, selected)
    summary_path = os.path.join(args.out, "summary.json")
    io.write_json(summary_path, summary)
    outputs = [table_path, model_path, summary_path]
    if args.svg:
        from . import plotting

        svg = os.path.join(args.out, "alpha_table.svg")
        plotting.alpha_curve(table, svg, "-target accuracy" if args.negate else "mean accuracy")
        outputs.append(svg)
    _finish(manifest, outputs, os.path.join(args.out, "manifest.json"))
    print(f"selected alpha={summary['alpha']:.2f} ({len(rows)} grid points)")
    return EXIT_OK


# ---------------------------------------------------------------- evaluation

def _write_report(args, report, manifest, extra, svg_jobs=()):
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "report.json")
    io.write_json(path, report.to_dict())
    outputs = [path]
    for name, (header, rows) in extra.items():
        p = os.path.join(args.out, name)
        io.write_csv(p, header, rows)
        outputs.append(p)
    if args.svg:
        for name, draw in svg_jobs:
            p = os.path.join(args.out, name)
            draw(p)
            outputs.append(p)
    _finish(manifest, outputs, os.path.join(args.out, "manifest.json"))


def eval_accuracy(args):
    model = io.load_checkpoint(args.model)
    datasets = [io.load_dataset(p) for p in args.data]
    manifest = io.RunManifest.start(_config(args), inputs=[args.model, *args.data])
    report = metrics.MetricsReport()
    rows = []
    for p, ds in zip(args.data, datasets):
        acc = metrics.accuracy(model, ds)
        report.abs_accuracy[f"{ds.task_id}/{ds.split}"] = acc
        rows.append((ds.task_id, ds.split, acc))
    _write_report(args, report, manifest, {"accuracy.csv": (["task_id", "split", "accuracy"], rows)})
    for tid, split, acc in rows:
        print(f"{tid}/{split}: {acc:.4f}")
    return EXIT_OK


def eval_norm_acc(args):
    inputs = []
    if args.merged_model:
        if not (args.single_models and args.data) or len(args.single_models) != len(args.data):
            raise UsageError("--merged-model needs one --single-models entry per --data file")
        merged_model = io.load_checkpoint(args.merged_model)
        datasets = [io.load_dataset(p) for p in args.data]
        merged = [metrics.accuracy(merged_model, ds) for ds in datasets]
        single = [metrics.accuracy(io.load_checkpoint(p), ds)
                  for p, ds in zip(args.single_models, datasets)]
        inputs = [args.merged_model, *args.single_models, *args.data]
    elif args.merged is not None and args.single is not None:
        merged, single = _csv_list(args.merged, float), _csv_list(args.single, float)
    else:
        raise UsageError("norm-acc needs --merged/--single or --merged-model/--single-models/--data")
    manifest = io.RunManifest.start(_config(args), inputs=inputs)
    value = metrics.normalized_accuracy(merged, single)
    report = metrics.MetricsReport(normalized_accuracy=value)
    report.abs_accuracy = {f"task{i}": m for i, m in enumerate(merged)}
    rows = [(i, m, s) for i, (m, s) in enumerate(zip(merged, single))]
    _write_report(args, report, manifest, {"norm_acc.csv": (["task", "merged", "single"], rows)})
    print(f"{value:.2f}")
    return EXIT_OK


def eval_similarity(args):
    theta0 = io.load_checkpoint(args.theta0)
    taus = _task_vectors(theta0, args.models)
    labels = [t.task_id or f"tau{i}" for i, t in enumerate(taus)]
    manifest = io.RunManifest.start(_config(args), inputs=[args.theta0, *args.models])
    sim = arith.cosine_similarity_matrix(taus)
    report = metrics.MetricsReport(mean_abs_cosine=arith.mean_abs_offdiag(sim))
    report.interference = {"cosine_matrix": sim.tolist(), "labels": labels}
    rows = [(labels[i], *sim[i].tolist()) for i in range(len(labels))]

    def draw(p):
        from . import plotting

        plotting.similarity_heatmap(sim, labels, p)

    _write_report(args, report, manifest, {"similarity.csv": (["task", *labels], rows)},
                  [("similarity.svg", draw)])
    print(f"mean |cos| = {report.mean_abs_cosine:.4f}")
    return EXIT_OK


def eval_angles(args):
    model = io.load_checkpoint(args.model)
    inputs = [args.model]
    if args.theta0:
        theta0 = io.load_checkpoint(args.theta0)
        model = arith.extract(theta0, model)
        inputs.append(args.theta0)
    names = list(_layers_arg(args.layers) or model.layers)
    manifest = io.RunManifest.start(_config(args), inputs=inputs)
    report = metrics.MetricsReport()
    summaries, rows = {}, []
    for name in names:
        s = metrics.angle_histogram(model[name], bins=args.bins, skip_degenerate=not args.strict)
        summaries[name] = s
        report.angle_summaries[name] = {"mean_abs_dev": s.mean_abs_dev, "std": s.std,
                                        "pairs": s.pairs, "skipped_columns": s.skipped_columns,
                                        "counts": s.counts, "edges": s.edges}
        for lo, hi, c in zip(s.edges[:-1], s.edges[1:], s.counts):
            rows.append((name, lo, hi, c))

    def draw(p):
        from . import plotting

        plotting.angle_histograms(summaries, p)

    _write_report(args, report, manifest,
                  {"angles.csv": (["layer", "lo_deg", "hi_deg", "count"], rows)},
                  [("angles.svg", draw)])
    for name, s in summaries.items():
        print(f"{name}: mean |angle-90| = {s.mean_abs_dev:.3f} deg over {s.pairs} pairs")
    return EXIT_OK


def eval_interference(args):
    theta0 = io.load_checkpoint(args.theta0)
    (tau,) = _task_vectors(theta0, [args.model])
    ds = io.load_dataset(args.data)
    manifest = io.RunManifest.start(_config(args), inputs=[args.theta0, args.model, args.data])
    res = metrics.interference(tau, theta0, ds)
    report = metrics.MetricsReport()
    report.interference = {"tau": tau.task_id, "domain": ds.task_id, "mean_abs": res.mean_abs,
                           "mean_cos": res.mean_cos, "skipped": res.skipped}
    _write_report(args, report, manifest, {"interference.csv": (
        ["tau", "domain", "mean_abs", "mean_cos", "skipped"],
        [(tau.task_id, ds.task_id, res.mean_abs, res.mean_cos, res.skipped)])})
    print(f"mean |tau.J| = {res.mean_abs:.6g}, mean |cos| = {res.mean_cos:.6g}")
    return EXIT_OK


def eval_ntk(args):
    theta0 = io.load_checkpoint(args.theta0)
    datasets = [io.load_dataset(p) for p in args.data]
    manifest = io.RunManifest.start(_config(args), inputs=[args.theta0, *args.data])
    ratio, k = metrics.ntk_localization(theta0, datasets, args.per_task)
    report = metrics.MetricsReport(ntk_localization=ratio)
    rows = [tuple(r) for r in k.tolist()]

    def draw(p):
        from . import plotting

        plotting.kernel_heatmap(k, p, "|K| (tasks in input order)")

    _write_report(args, report, manifest,
                  {"ntk.csv": ([f"k{i}" for i in range(k.shape[1])], rows)}, [("ntk.svg", draw)])
    print(f"off-task / on-task mean |K| = {ratio:.4f}")
    return EXIT_OK


def eval_gap(args):
    theta0 = io.load_checkpoint(args.theta0)
    tau_t, tau_j = _task_vectors(theta0, [args.model_t, args.model_j])
    ds = io.load_dataset(args.data)
    manifest = io.RunManifest.start(_config(args),
                                    inputs=[args.theta0, args.model_t, args.model_j, args.data])
    gap = metrics.disentanglement_gap(theta0, tau_t, tau_j, ds)
    scale = metrics.output_scale(arith.merge(theta0, [tau_t]), ds)
    report = metrics.MetricsReport()
    report.interference = {"gap": gap, "output_scale": scale,
                           "relative_gap": gap / scale if scale > 0 else None}
    _write_report(args, report, manifest, {"gap.csv": (["gap", "output_scale"], [(gap, scale)])})
    print(f"gap = {gap:.6g} (output scale {scale:.6g})")
    return EXIT_OK


# ---------------------------------------------------------------- validation

def _seeds(args):
    return tuple(_csv_list(args.seeds, int))


def _validate_one(name, args):
    if name == "norm-bound":
        return theory.validate_norm_bound(args.trials, (8, 4), args.seed)
    if name == "psd":
        return theory.validate_psd_inequality(args.trials, 4, args.seed)
    if name == "stiefel":
        return theory.validate_stiefel_inner(args.trials, (16, 4), args.seed)
    if name == "polar":
        return theory.validate_polar_error_terms((12, 4), seed=args.seed,
                                                 pairs=min(args.trials, 1000))
    if name == "alignment":
        if getattr(args, "theta0", None):
            theta0 = io.load_checkpoint(args.theta0)
            (tau,) = _task_vectors(theta0, [args.model])
            ds = io.load_dataset(args.data)
        else:
            suite, theta0, run = protocol.TFS_EXPERIMENT.train(args.seed)
            tid = next(iter(suite))
            tau, ds = run.taus[tid], suite[tid]["train"]
        return theory.validate_directional_alignment(theta0, tau, ds, seed=args.seed)
    if name == "tfs":
        return theory.validate_tfs_chain(seeds=_seeds(args))
    if name == "angle-control":
        return theory.validate_angle_control(seeds=_seeds(args))
    raise UsageError(f"unknown validator {name}")


VALIDATORS = ("norm-bound", "psd", "stiefel", "polar", "alignment", "tfs", "angle-control")


def cmd_validate(args):
    names = VALIDATORS if args.which == "all" else (args.which,)
    os.makedirs(args.out, exist_ok=True)
    inputs = [p for p in (getattr(args, "theta0", None), getattr(args, "model", None),
                          getattr(args, "data", None)) if p]
    manifest = io.RunManifest.start(_config(args), seeds=[args.seed, *_seeds(args)], inputs=inputs)
    outputs, failed = [], []
    for name in names:
        report = _validate_one(name, args)
        base = os.path.join(args.out, name)
        io.atomic_write(base + ".json", report.to_json() + "\n")
        io.atomic_write(base + ".txt", report.summary() + "\n")
        outputs += [base + ".json", base + ".txt"]
        if args.svg and name == "stiefel":
            from . import plotting

            hist = report.details["histogram"]
            plotting.value_histogram(hist["counts"], hist["edges"], base + ".svg", "Tr(A^T B)")
            outputs.append(base + ".svg")
        print(report.summary())
        if not report.verdict:
            failed.append(name)
    _finish(manifest, outputs, os.path.join(args.out, "manifest.json"))
    if failed:
        print(f"failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser():
    p = argparse.ArgumentParser(prog="orthomerge", description=__doc__.strip().splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a standardized synthetic suite")
    g.add_argument("--tasks", type=int, required=True)
    g.add_argument("--input-dim", type=int, required=True)
    g.add_argument("--feat-per-task", type=int, required=True)
    g.add_argument("--overlap", type=float, default=0.0)
    g.add_argument("--classes", type=int, default=3)
    g.add_argument("--samples", type=int, default=400)
    g.add_argument("--noise", type=float, default=0.1)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    i = sub.add_parser("init", help="create an anchor checkpoint")
    i.add_argument("--suite", help="suite directory from gen (sets dims and task heads)")
    i.add_argument("--input-dim", type=int)
    i.add_argument("--classes", type=int)
    i.add_argument("--hidden", default="16", help="comma-separated hidden widths")
    i.add_argument("--seed", type=int, default=0)
    i.add_argument("--pretrain-epochs", type=int, default=0)
    i.add_argument("--pretrain-lr", type=float, default=0.01)
    i.add_argument("--batch-size", type=int, default=32)
    i.add_argument("--out", required=True)
    i.set_defaults(func=cmd_init)

    t = sub.add_parser("train", help="fine-tune one task with the orthogonality penalty")
    t.add_argument("--theta0", required=True)
    t.add_argument("--task", required=True, help="training split file")
    t.add_argument("--val", help="validation split file")
    t.add_argument("--lambda", dest="lam", type=float, default=0.0)
    t.add_argument("--mode", choices=("full", "low-rank"), default="full")
    t.add_argument("--rank", type=int)
    t.add_argument("--layers", default="all", help="regularized layers, CSV or 'all'")
    t.add_argument("--tune", default="all", help="trained layers, CSV or 'all'")
    t.add_argument("--epochs", type=int, default=60)
    t.add_argument("--lr", type=float, default=0.002)
    t.add_argument("--batch-size", type=int, default=32)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--svg", action="store_true")
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    m = sub.add_parser("merge", help="theta0 + sum alpha_t tau_t")
    m.add_argument("--theta0", required=True)
    m.add_argument("--models", nargs="+", required=True, help="fine-tuned checkpoints or task vectors")
    m.add_argument("--alpha", default="1.0", help="one value or one per model, comma-separated")
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_merge)

    n = sub.add_parser("negate", help="theta0 - alpha tau")
    n.add_argument("--theta0", required=True)
    n.add_argument("--model", required=True)
    n.add_argument("--alpha", type=float, default=1.0)
    n.add_argument("--out", required=True)
    n.set_defaults(func=cmd_negate)

    s = sub.add_parser("sweep-alpha", help="grid search over the 21 uniform coefficients")
    s.add_argument("--theta0", required=True)
    s.add_argument("--models", nargs="+", required=True)
    s.add_argument("--data", required=True, help="suite directory from gen")
    s.add_argument("--split", default="val", choices=synth.SPLITS)
    s.add_argument("--negate", metavar="TASK", help="negation sweep for this task")
    s.add_argument("--threshold", type=float, default=0.95, choices=arith.NEGATION_THRESHOLDS)
    s.add_argument("--svg", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sweep_alpha)

    e = sub.add_parser("eval", aliases=["analyze"], help="metrics reports")
    esub = e.add_subparsers(dest="metric", required=True)

    def metric(name, func, help_text):
        q = esub.add_parser(name, help=help_text)
        q.add_argument("--out", required=True)
        q.add_argument("--svg", action="store_true")
        q.set_defaults(func=func)
        return q

    q = metric("accuracy", eval_accuracy, "accuracy on dataset files")
    q.add_argument("--model", required=True)
    q.add_argument("--data", nargs="+", required=True)
    q = metric("norm-acc", eval_norm_acc, "normalized accuracy in percent")
    q.add_argument("--merged", help="comma-separated merged accuracies")
    q.add_argument("--single", help="comma-separated single-task accuracies")
    q.add_argument("--merged-model")
    q.add_argument("--single-models", nargs="+")
    q.add_argument("--data", nargs="+")
    q = metric("similarity", eval_similarity, "task-vector cosine matrix")
    q.add_argument("--theta0", required=True)
    q.add_argument("--models", nargs="+", required=True)
    q = metric("angles", eval_angles, "pairwise column-angle histograms")
    q.add_argument("--model", required=True)
    q.add_argument("--theta0", help="histogram the update model - theta0 instead")
    q.add_argument("--layers", default="all")
    q.add_argument("--bins", type=int, default=36)
    q.add_argument("--strict", action="store_true",
                   help="fail on near-zero columns instead of skipping them")
    q = metric("interference", eval_interference, "tau_j . J(x) over another task's domain")
    q.add_argument("--theta0", required=True)
    q.add_argument("--model", required=True)
    q.add_argument("--data", required=True)
    q = metric("ntk", eval_ntk, "empirical tangent kernel localization")
    q.add_argument("--theta0", required=True)
    q.add_argument("--data", nargs="+", required=True)
    q.add_argument("--per-task", type=int, default=100)
    q = metric("gap", eval_gap, "nonlinear disentanglement gap")
    q.add_argument("--theta0", required=True)
    q.add_argument("--model-t", required=True)
    q.add_argument("--model-j", required=True)
    q.add_argument("--data", required=True)

    v = sub.add_parser("validate", help="numerical validators")
    v.add_argument("which", choices=(*VALIDATORS, "all"))
    v.add_argument("--trials", type=int, default=10_000)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--seeds", default="0,1,2", help="seeds for the training-based validators")
    v.add_argument("--theta0", help="alignment: anchor checkpoint")
    v.add_argument("--model", help="alignment: fine-tuned checkpoint")
    v.add_argument("--data", help="alignment: dataset file")
    v.add_argument("--svg", action="store_true")
    v.add_argument("--out", required=True)
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"orthomerge: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"orthomerge: missing file: {exc.filename}", file=sys.stderr)
        return EXIT_FAIL
    except (NumericalFailure, DivergenceDetected) as exc:
        print(f"orthomerge: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OrthoMergeError as exc:
        print(f"orthomerge: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except ValueError as exc:
        print(f"orthomerge: invalid argument: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
