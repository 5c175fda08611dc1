"""Experiment orchestration: one run end to end, comparisons, gain sweeps.

A run trains the configured method, restores the best-validation-risk
network, evaluates it on the held-out test split with MC sampling, and
persists everything needed to recompute the reported metrics: config
echo, per-epoch trace, threshold sweep, bucket counts, the raw MC dump,
the test split itself, and a checkpoint. Identical configs produce
byte-identical trace and sweep files.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path

from .config import ExperimentConfig, build_config, load_config, parse_kv_file
from .data import (SplitSpec, load_idx, read_delimited, select_classes, split,
                   synth_blobs, truncate, write_delimited)
from .errors import UsageError
from .evaluation import (accuracy, pavpu_at_mean_uncertainty, threshold_sweep,
                         write_counts_csv, write_sweep_csv)
from .network import (LayerSpec, Network, OptimizerConfig, load_checkpoint,
                      save_checkpoint)
from .numerics import RngStream
from .regulation import (PIController, TrainingDiverged, TrainingTrace,
                         fixed_dropout_train, regulated_train, write_trace_csv)
from .uncertainty import decompose, mc_predict, write_mc_dump

RUN_FILES = ("config.txt", "trace.csv", "sweep.csv", "counts.csv", "mc_dump.csv",
             "test_data.csv", "checkpoint.ckpt", "report.txt")


@dataclass
class RunReport:
    """Everything a completed run reports; mirrored in report.txt."""

    config: ExperimentConfig
    trace: TrainingTrace
    test_accuracy: float
    measure: str
    mean_threshold: float
    pavpu_mean: float
    counts: object
    sweep: object
    eval_rate: float
    seconds: float
    out_dir: str


def build_splits(cfg: ExperimentConfig):
    """Materialize (train, val, test) per the config's dataset block."""
    data_seed = cfg.seed if cfg.data_seed is None else cfg.data_seed
    if cfg.source == "blobs":
        full = synth_blobs(cfg.blobs_per_class, cfg.blobs_classes, cfg.blobs_spread,
                           data_seed)
    elif cfg.source == "idx":
        full = load_idx(cfg.image_path, cfg.label_path)
        if cfg.select:
            full = select_classes(full, cfg.select)
    else:
        full = read_delimited(cfg.data_path, cfg.data_classes)
    train, val, test = split(full, SplitSpec(cfg.n_train, cfg.n_val, cfg.n_test,
                                             data_seed))
    if cfg.fraction < 1.0:
        train = truncate(train, cfg.fraction)
    return train, val, test


def build_network(cfg: ExperimentConfig, in_dim: int, class_count: int,
                  rng: RngStream) -> Network:
    """Assemble the layer chain: hidden layers then a softmax head.

    ``network.dropout`` picks which layers drop their input: 'all' enables
    every layer after the first, 'none' disables dropout, and an index
    list names specific layers (1-based, the first layer excluded since
    it reads raw features).
    """
    if cfg.dropout_layers == "all":
        enabled = set(range(1, len(cfg.hidden) + 1))
    elif cfg.dropout_layers == "none":
        enabled = set()
    else:
        enabled = {int(p) for p in cfg.dropout_layers.split(",") if p.strip()}
    dims = [in_dim] + list(cfg.hidden) + [class_count]
    specs = []
    for i in range(len(dims) - 1):
        act = "softmax" if i == len(dims) - 2 else cfg.activation
        specs.append(LayerSpec(dims[i], dims[i + 1], act, dropout_enabled=i in enabled))
    return Network(specs, rng)


def _train_method(cfg, net, train, val, rng, progress):
    opt = OptimizerConfig(cfg.lr, cfg.momentum, cfg.batch_size, cfg.epochs)
    if cfg.method == "deterministic":
        return fixed_dropout_train(net, train, val, 0.0, opt, rng, progress)
    if cfg.method == "mc_fixed":
        return fixed_dropout_train(net, train, val, cfg.p_fixed, opt, rng, progress)
    controller = PIController(cfg.kp, cfg.ti, cfg.td)
    return regulated_train(net, train, val, controller, opt, rng, progress)


def _measure_vector(report, measure: str):
    return {"predictive": report.predictive, "aleatoric": report.aleatoric,
            "epistemic": report.epistemic}[measure]


def run(config, seed=None, out_dir=None, quiet=False, log=print) -> RunReport:
    """Execute one experiment as configured; returns the report.

    ``config`` is a config file path or an already-built ExperimentConfig.
    On training divergence the config echo and partial trace are persisted
    before the error propagates.
    """
    if not isinstance(config, ExperimentConfig):
        config = load_config(config, seed=seed, out_dir=out_dir)
    cfg = config
    out = Path(cfg.out_dir if cfg.out_dir else "run_out")
    out.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()

    train, val, test = build_splits(cfg)
    root = RngStream(cfg.seed)
    net = build_network(cfg, train.feature_dim, train.class_count, root.child("net"))

    progress = None
    if not quiet:
        log(f"[{cfg.method}] {len(train)} train / {len(val)} val / {len(test)} test, "
            f"seed {cfg.seed}")
        progress = lambda r: log(
            f"  epoch {r.epoch:3d}  train {r.train_risk:.6g}  val {r.val_risk:.6g}  "
            f"gap {r.gap:+.6g}  p {r.p:.4f}")

    cfg.write(out / "config.txt")
    try:
        outcome = _train_method(cfg, net, train, val, root.child("train"), progress)
    except TrainingDiverged as e:
        write_trace_csv(out / "trace.csv", TrainingTrace(e.records, 0, 0.0))
        raise

    best = outcome.network
    if cfg.method == "deterministic":
        k, eval_rate, measure = 1, 0.0, "aleatoric"
    else:
        k, eval_rate, measure = cfg.mc_samples, outcome.dropout_rate, cfg.measure
        if cfg.method == "mc_fixed":
            eval_rate = cfg.p_fixed
    mc = mc_predict(best, test.features, eval_rate, k, root.child("eval"))
    unc = _measure_vector(decompose(mc), measure)

    test_acc = accuracy(mc.mean_probs, test.labels)
    thr, counts, pavpu_mean = pavpu_at_mean_uncertainty(mc.mean_probs, test.labels, unc)
    sweep = threshold_sweep(mc.mean_probs, test.labels, unc, cfg.grid)
    seconds = time.perf_counter() - started

    write_trace_csv(out / "trace.csv", outcome.trace)
    write_sweep_csv(out / "sweep.csv", sweep)
    write_counts_csv(out / "counts.csv", [(thr, counts)])
    write_mc_dump(out / "mc_dump.csv", mc)
    write_delimited(out / "test_data.csv", test)
    save_checkpoint(out / "checkpoint.ckpt", best, outcome.dropout_rate,
                    outcome.trace.best_epoch)

    report = RunReport(cfg, outcome.trace, test_acc, measure, thr, pavpu_mean,
                       counts, sweep, eval_rate, seconds, str(out))
    _write_report(out / "report.txt", report, k)
    if not quiet:
        log(f"  best epoch {outcome.trace.best_epoch}, test accuracy {test_acc:.4f}, "
            f"pavpu@mean {pavpu_mean:.4f}  ({seconds:.1f}s, {out})")
    return report


def _write_report(path, r: RunReport, k: int):
    c = r.counts
    lines = [
        f"method = {r.config.method}",
        f"seed = {r.config.seed}",
        f"epochs = {len(r.trace.records)}",
        f"best_epoch = {r.trace.best_epoch}",
        f"fit_dropout_rate = {r.trace.final_p!r}",
        f"eval_dropout_rate = {r.eval_rate!r}",
        f"mc_samples = {k}",
        f"uncertainty_measure = {r.measure}",
        f"test_accuracy = {r.test_accuracy!r}",
        f"mean_uncertainty_threshold = {r.mean_threshold!r}",
        f"pavpu_at_mean = {r.pavpu_mean!r}",
        f"counts = n_iu:{c.n_iu} n_ac:{c.n_ac} n_ic:{c.n_ic} n_au:{c.n_au}",
        f"degenerate_sweep = {str(r.sweep.degenerate).lower()}",
        f"wall_seconds = {r.seconds:.3f}",
        "files = " + ",".join(RUN_FILES),
    ]
    with open(path, "w", newline="\n") as f:
        for line in lines:
            f.write(line + "\n")


def compare(config_paths, seed=None, out_dir=None, quiet=False, log=print):
    """Run several configs and tabulate (accuracy, PAvPU-at-mean) per method.

    Returns (rows, failures); rows are dicts with best-per-column flags.
    The table lands in comparison.csv under ``out_dir`` (default runs/).
    """
    paths = list(config_paths)
    if len(paths) < 2:
        raise UsageError(f"compare needs at least 2 configs, got {len(paths)}")
    root = Path(out_dir) if out_dir else Path("runs")
    rows = []
    failures = []
    for p in paths:
        name = Path(p).stem
        sub = str(root / name) if out_dir else None
        try:
            rep = run(p, seed=seed, out_dir=sub, quiet=quiet, log=log)
            rows.append({"config": name, "method": rep.config.method,
                         "accuracy": rep.test_accuracy, "pavpu": rep.pavpu_mean})
        except Exception as e:
            failures.append((str(p), f"{type(e).__name__}: {e}"))
    if rows:
        best_acc = max(r["accuracy"] for r in rows)
        best_pavpu = max(r["pavpu"] for r in rows)
        for r in rows:
            r["best_accuracy"] = r["accuracy"] == best_acc
            r["best_pavpu"] = r["pavpu"] == best_pavpu
    root.mkdir(parents=True, exist_ok=True)
    with open(root / "comparison.csv", "w", newline="\n") as f:
        f.write("config,method,accuracy,pavpu_at_mean,best_accuracy,best_pavpu\n")
        for r in rows:
            f.write(f"{r['config']},{r['method']},{r['accuracy']!r},{r['pavpu']!r},"
                    f"{int(r['best_accuracy'])},{int(r['best_pavpu'])}\n")
    _print_table(rows, failures, log)
    return rows, failures


def _print_table(rows, failures, log):
    header = f"{'config':<24} {'method':<14} {'accuracy':>10} {'pavpu@mean':>12}"
    log(header)
    log("-" * len(header))
    for r in rows:
        acc = f"{r['accuracy']:.4f}" + ("*" if r["best_accuracy"] else " ")
        pv = f"{r['pavpu']:.4f}" + ("*" if r["best_pavpu"] else " ")
        log(f"{r['config']:<24} {r['method']:<14} {acc:>10} {pv:>12}")
    for path, msg in failures:
        log(f"FAILED {path}: {msg}")


def kp_sweep(base_config_path, kp_values, data_fractions, seed=None, out_dir=None,
             quiet=False, log=print):
    """One regulated run per (kp, fraction) pair, built from a base config.

    Each run writes its own directory (trace.csv holds the p-vs-epoch
    series); a kp_sweep.csv manifest at the root lists them.
    """
    kp_values = list(kp_values)
    data_fractions = list(data_fractions)
    if not kp_values or not data_fractions:
        raise UsageError("kp-sweep needs at least one kp value and one fraction")
    base = parse_kv_file(base_config_path)
    base.pop("method.p_fixed", None)
    root = Path(out_dir) if out_dir else Path("runs") / f"{Path(base_config_path).stem}_kp_sweep"
    results = []
    for kp in kp_values:
        for frac in data_fractions:
            raw = dict(base)
            raw["method"] = "regulation"
            raw["method.kp"] = repr(float(kp))
            raw["dataset.fraction"] = repr(float(frac))
            raw["out_dir"] = str(root / f"kp{kp:g}_frac{frac:g}")
            if seed is not None:
                raw["seed"] = str(seed)
            cfg = build_config(raw, config_dir=Path(base_config_path).parent)
            rep = run(cfg, quiet=quiet, log=log)
            results.append((float(kp), float(frac), rep))
    root.mkdir(parents=True, exist_ok=True)
    with open(root / "kp_sweep.csv", "w", newline="\n") as f:
        f.write("kp,fraction,run_dir,best_epoch,final_p\n")
        for kp, frac, rep in results:
            f.write(f"{kp!r},{frac!r},{rep.out_dir},{rep.trace.best_epoch},"
                    f"{rep.trace.final_p!r}\n")
    return results


@dataclass
class EvalSummary:
    """Standalone checkpoint evaluation against a delimited dataset dump."""

    checkpoint_epoch: int
    dropout_rate: float
    mc_samples: int
    test_accuracy: float
    mean_threshold: float
    pavpu_mean: float
    counts: object
    sweep: object


def eval_checkpoint(checkpoint_path, data_path, k, seed=0, grid=250,
                    measure="predictive", out_dir=None) -> EvalSummary:
    """Re-evaluate a saved network on a delimited dataset dump.

    The dump's label width must match the network's output layer. With
    k=1 or a zero stored rate the passes are deterministic and epistemic
    uncertainty vanishes.
    """
    net, meta = load_checkpoint(checkpoint_path)
    rate, epoch = meta["dropout_rate"], meta["epoch"]
    ds = read_delimited(data_path, class_count=net.out_dim)
    mc = mc_predict(net, ds.features, rate, k, RngStream(seed).child("eval"))
    unc = _measure_vector(decompose(mc), measure)
    acc = accuracy(mc.mean_probs, ds.labels)
    thr, counts, pv = pavpu_at_mean_uncertainty(mc.mean_probs, ds.labels, unc)
    sweep = threshold_sweep(mc.mean_probs, ds.labels, unc, grid)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_mc_dump(out / "mc_dump.csv", mc)
        write_sweep_csv(out / "sweep.csv", sweep)
        write_counts_csv(out / "counts.csv", [(thr, counts)])
    return EvalSummary(epoch, rate, k, acc, thr, pv, counts, sweep)
