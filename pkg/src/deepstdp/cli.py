"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data or configuration error. Every
error is reported as one JSON object on a single stderr line.
"""

from __future__ import annotations

import argparse
import dataclasses
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import convnet, cost, metrics
from .config import ConfigError, load_config
from .encoding import preprocess
from .numerics import RngStream
from .pipeline import RunConfig, cluster_features, probe_evaluator, run_deep_cluster
from .snn import cluster_epoch
from .synth import SynthSpec, generate, load_dataset, save_dataset
from .tensorfile import TensorFileError, atomic_write, read_tensor, write_tensor

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _emit(obj) -> None:
    print(json.dumps(obj))


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def _features(path) -> np.ndarray:
    X = read_tensor(path).astype(np.float64)
    if X.ndim != 2:
        raise ValueError(f"{path}: expected an (N, d) feature matrix, got shape {X.shape}")
    return X


def cmd_gen_synth(args) -> int:
    spec = SynthSpec(
        classes=args.classes, per_class=args.per_class, kind=args.kind, d=args.d,
        height=args.height, width=args.width, sigma=args.sigma, seed=args.seed,
    )
    save_dataset(generate(spec), args.out, spec)
    _emit({"out": str(args.out), "samples": spec.classes * spec.per_class, "kind": spec.kind})
    return EXIT_OK


def cmd_cluster(args) -> int:
    cfg = _config(args)
    if args.method:
        cfg = dataclasses.replace(cfg, method=args.method)
    X = _features(args.input)
    processed = preprocess(X, min(cfg.d_pca, X.shape[1], X.shape[0]), cfg.whiten)
    k = cfg.snn.k if cfg.method == "stdp" else cfg.kmeans.k
    out = cluster_features(processed, cfg, k, RngStream(cfg.seed).spawn("cluster"))
    write_tensor(args.out, out.labels.labels.astype(np.int32))
    summary = {"samples": len(X), "k": k, "method": cfg.method, "objective": out.objective, "energy_mj": out.energy.energy_mj}
    if out.spike_stats is not None:
        summary.update(p_input=out.spike_stats.p_input, p_exc=out.spike_stats.p_exc)
    _emit(summary)
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)
    ds = load_dataset(args.data)
    if ds.kind != "images":
        raise ValueError("train needs an image dataset")
    buf = io.StringIO()
    try:
        log = run_deep_cluster(cfg, ds.data, ds.classes, probe_evaluator(ds.labels, cfg.probe), sink=buf, record_time=args.wall_time)
    finally:
        atomic_write(args.log, buf.getvalue().encode())
    if args.checkpoint:
        convnet.save_params(log.params, args.checkpoint)
    last = log.records[-1]
    _emit({"epochs": len(log.records), "log": str(args.log), "probe_acc": last.probe_acc, "nmi_prev": last.nmi_prev})
    return EXIT_OK


def cmd_probe(args) -> int:
    pcfg = metrics.ProbeConfig(epochs=args.epochs, lr=args.lr, seed=args.seed)
    acc = metrics.linear_probe(_features(args.features), read_tensor(args.labels), pcfg)
    _emit({"accuracy": acc})
    return EXIT_OK


def cmd_metrics(args) -> int:
    if args.metric == "nmi":
        _emit({"nmi": metrics.nmi(read_tensor(args.a), read_tensor(args.b))})
    elif args.metric == "purity":
        _emit({"purity": metrics.purity(read_tensor(args.labels), read_tensor(args.truth))})
    else:
        params = convnet.load_params(args.params)
        images = load_dataset(args.data).data
        labels = read_tensor(args.labels).astype(np.int64)
        _emit({"fim_trace": metrics.fim_trace(params, images, labels)})
    return EXIT_OK


def cmd_cost(args) -> int:
    if args.model == "kmeans":
        report = cost.kmeans_energy(args.k, args.d, args.it, args.n)
    else:
        w_exc = args.w_exc if args.w_exc is not None else args.d * args.k
        w_inh = args.w_inh if args.w_inh is not None else args.k * (args.k - 1)
        stats = cost.SpikeStats(args.p_input, args.p_exc, w_exc, w_inh)
        report = cost.stdp_energy(stats, args.t, args.n)
    report = report.scaled(args.epochs)
    _emit({**report.to_dict(), "epochs": args.epochs})
    return EXIT_OK


def cmd_export_weights(args) -> int:
    cfg = _config(args)
    X = _features(args.input)
    processed = preprocess(X, min(cfg.d_pca, X.shape[1], X.shape[0]), cfg.whiten)
    snn_cfg = dataclasses.replace(cfg.snn, d=processed.d)
    labels, state, stats = cluster_epoch(processed, snn_cfg, cfg.gain, RngStream(cfg.seed).spawn("cluster"))
    out = Path(args.out)
    write_tensor(out / "w_plus.dstp", state.w_plus)
    write_tensor(out / "w_minus.dstp", state.w_minus)
    write_tensor(out / "labels.dstp", labels.labels.astype(np.int32))
    _emit({"out": str(out), "d": processed.d, "k": snn_cfg.k, "p_input": stats.p_input, "p_exc": stats.p_exc})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="deepstdp", description="STDP-driven deep clustering toolkit")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    g = sub.add_parser("gen-synth", help="write a synthetic dataset directory")
    g.add_argument("--kind", choices=["blobs", "images"], default="images")
    g.add_argument("--classes", type=int, default=5)
    g.add_argument("--per-class", type=int, default=100)
    g.add_argument("--d", type=int, default=16)
    g.add_argument("--height", type=int, default=16)
    g.add_argument("--width", type=int, default=16)
    g.add_argument("--sigma", type=float, default=1.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_synth)

    c = sub.add_parser("cluster", help="cluster a feature matrix into pseudo-labels")
    c.add_argument("--method", choices=["stdp", "kmeans"])
    c.add_argument("--in", dest="input", required=True)
    c.add_argument("--config")
    c.add_argument("--out", required=True)
    c.add_argument("--seed", type=int)
    c.set_defaults(func=cmd_cluster)

    t = sub.add_parser("train", help="run the deep clustering loop on an image dataset")
    t.add_argument("--config")
    t.add_argument("--data", required=True)
    t.add_argument("--log", required=True)
    t.add_argument("--checkpoint")
    t.add_argument("--seed", type=int)
    t.add_argument("--wall-time", action="store_true", help="fill wall_ms (makes logs run-dependent)")
    t.set_defaults(func=cmd_train)

    pr = sub.add_parser("probe", help="linear-probe accuracy of frozen features")
    pr.add_argument("--features", required=True)
    pr.add_argument("--labels", required=True)
    pr.add_argument("--epochs", type=int, default=100)
    pr.add_argument("--lr", type=float, default=0.01)
    pr.add_argument("--seed", type=int, default=0)
    pr.set_defaults(func=cmd_probe)

    m = sub.add_parser("metrics", help="NMI, purity or Fisher trace")
    msub = m.add_subparsers(dest="metric", parser_class=_Parser)
    msub.required = True
    mn = msub.add_parser("nmi")
    mn.add_argument("--a", required=True)
    mn.add_argument("--b", required=True)
    mp = msub.add_parser("purity")
    mp.add_argument("--labels", required=True)
    mp.add_argument("--truth", required=True)
    mf = msub.add_parser("fim")
    mf.add_argument("--params", required=True)
    mf.add_argument("--data", required=True)
    mf.add_argument("--labels", required=True)
    m.set_defaults(func=cmd_metrics)

    co = sub.add_parser("cost", help="clustering energy estimate")
    csub = co.add_subparsers(dest="model", parser_class=_Parser)
    csub.required = True
    ck = csub.add_parser("kmeans")
    ck.add_argument("--k", type=int, required=True)
    ck.add_argument("--d", type=int, required=True)
    ck.add_argument("--it", type=int, required=True)
    ck.add_argument("--n", type=int, required=True)
    cs = csub.add_parser("stdp")
    cs.add_argument("--p-input", type=float, required=True)
    cs.add_argument("--p-exc", type=float, required=True)
    cs.add_argument("--w-exc", type=int)
    cs.add_argument("--w-inh", type=int)
    cs.add_argument("--d", type=int, default=256)
    cs.add_argument("--k", type=int, default=100)
    cs.add_argument("--t", type=int, required=True)
    cs.add_argument("--n", type=int, required=True)
    for sp in (ck, cs):
        sp.add_argument("--epochs", type=int, default=1)
    co.set_defaults(func=cmd_cost)

    e = sub.add_parser("export-weights", help="train an STDP network on features and save its weight maps")
    e.add_argument("--in", dest="input", required=True)
    e.add_argument("--config")
    e.add_argument("--out", required=True)
    e.add_argument("--seed", type=int)
    e.set_defaults(func=cmd_export_weights)
    return p


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(json.dumps({"error": "usage", "message": str(exc)}), file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (FileNotFoundError, IsADirectoryError, TensorFileError, ConfigError, ValueError, KeyError) as exc:
        print(json.dumps({"error": "data", "command": args.command, "message": str(exc)}), file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
