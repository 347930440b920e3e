"""Command-line entry point: ``audiotag <subcommand> ...``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from .architectures import Network, build_architecture, count_multiadds, count_params, propagate_shapes
from .config import ConfigError, load_config, write_config
from .data import DataError, MixupConfig, SpecAugmentConfig, load_class_map, load_index
from .dsp import DSPError, LogMelFrontEnd, pad_or_truncate, read_wav, resample_linear
from .metrics import classwise_report, evaluate_scores, format_table
from .training import ClipDataset, NumericError, TrainConfig, evaluate, predict, train, write_history
from .transfer import FewShotSpec, TransferStrategy, apply_strategy, few_shot_indices

log = logging.getLogger("audiotag")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


def frontend_from(cfg):
    d = cfg["dsp"]
    return LogMelFrontEnd(d["sample_rate"], d["window_size"], d["hop_size"], d["n_mels"], d["f_min"], d["f_max"])


def spec_from(cfg):
    d, a = cfg["dsp"], cfg["arch"]
    try:
        return build_architecture(a["name"], a["width_scale"], a["n_classes"], sample_rate=d["sample_rate"],
                                  hop_size=d["hop_size"], n_mels=d["n_mels"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def train_config_from(cfg):
    t, a = cfg["train"], cfg["augment"]
    mixup = MixupConfig(a["mixup_alpha"], a["mixup_domain"]) if a["mixup_alpha"] else None
    specaug = None
    if a["specaug"]:
        specaug = SpecAugmentConfig(a["freq_mask_param"], a["n_freq_masks"], a["time_mask_param"], a["n_time_masks"])
    try:
        return TrainConfig(t["batch_size"], t["learning_rate"], t["max_iterations"], t["seed"], t["balanced"],
                           mixup, specaug, t["eval_every"], t["target_map"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def dataset_from(cfg, key="index"):
    path = cfg["paths"][key]
    if not path:
        raise ConfigError(f"paths.{key} is not set")
    records = load_index(path, cfg["arch"]["n_classes"])
    if not records:
        raise DataError(f"{path}: no clips")
    return ClipDataset.from_records(records, cfg["dsp"]["clip_seconds"], frontend_from(cfg))


def class_names(cfg):
    path = cfg["paths"]["class_map"]
    return load_class_map(path) if path else None


def output_dir(cfg):
    out = Path(cfg["paths"]["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_report(report, out: Path, stem, counts=None, names=None):
    report.to_json(out / f"{stem}.json")
    table = format_table(classwise_report(report, counts, names), report)
    (out / f"{stem}.txt").write_text(table + "\n")
    return table


# --------------------------------------------------------------------------
# subcommands


def cmd_extract(args):
    cfg = load_config(args.config, args.set)
    fe = frontend_from(cfg)
    w = read_wav(args.wav)
    if w.sample_rate != fe.sample_rate:
        w = resample_linear(w, fe.sample_rate)
    if args.pad:
        w = pad_or_truncate(w, int(round(cfg["dsp"]["clip_seconds"] * fe.sample_rate)))
    values = fe(w).astype(np.float32)
    ckpt.save_features(args.out, values)
    print(f"{args.out}: {values.shape[0]} x {values.shape[1]}")
    return EXIT_OK


def cmd_train(args):
    cfg = load_config(args.config, args.set, require_seed=True)
    spec = spec_from(cfg)
    tcfg = train_config_from(cfg)
    out = output_dir(cfg)
    write_config(cfg, out / "resolved_config.ini")
    data = dataset_from(cfg)
    eval_data = dataset_from(cfg, "eval_index") if cfg["paths"]["eval_index"] else None
    net = Network(spec, seed=tcfg.seed)
    result = train(net, data, tcfg, eval_data)
    blob = ckpt.blob_from_network(net, result.iterations, result.optimizer, meta={"config": cfg})
    ckpt.save_checkpoint(blob, out / "checkpoint.ckpt")
    write_history(out / "history.csv", result.history)
    report = evaluate(net, eval_data if eval_data is not None else data)
    print(write_report(report, out, "report", data.targets.sum(axis=0), class_names(cfg)))
    print(f"checkpoint: {out / 'checkpoint.ckpt'} ({result.iterations} iterations)")
    return EXIT_OK


def _read_scores(path):
    path = Path(path)
    if path.suffix == ".npy":
        return np.load(path)
    return np.loadtxt(path, delimiter=",", ndmin=2)


def cmd_eval(args):
    cfg = load_config(args.config, args.set)
    out = output_dir(cfg)
    key = "eval_index" if cfg["paths"]["eval_index"] else "index"
    counts = None
    if args.scores:
        records = load_index(cfg["paths"][key], cfg["arch"]["n_classes"])
        targets = np.stack([r.target for r in records])
        scores = _read_scores(args.scores)
        if scores.shape != targets.shape:
            raise DataError(f"scores {scores.shape} do not match labels {targets.shape}")
        report = evaluate_scores(scores, targets)
    else:
        if not args.checkpoint:
            raise ConfigError("eval needs --checkpoint or --scores")
        blob = ckpt.load_checkpoint(args.checkpoint)
        net = ckpt.network_from_checkpoint(blob)
        data = dataset_from(cfg, key)
        report = evaluate(net, data)
        if cfg["paths"]["eval_index"] and cfg["paths"]["index"]:
            counts = np.stack([r.target for r in load_index(cfg["paths"]["index"], cfg["arch"]["n_classes"])]).sum(0)
    print(write_report(report, out, "eval_report", counts, class_names(cfg)))
    return EXIT_OK


def cmd_transfer(args):
    cfg = load_config(args.config, args.set, require_seed=True)
    tr = cfg["transfer"]
    kind = args.strategy or tr["strategy"]
    shots = args.shots if args.shots is not None else tr["shots"]
    tcfg = train_config_from(cfg)
    out = output_dir(cfg)
    write_config(cfg, out / "resolved_config.ini")
    try:
        strategy = TransferStrategy(kind, cfg["arch"]["n_classes"], tr["head_hidden_dim"], tr["output"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    blob = ckpt.load_checkpoint(args.checkpoint) if args.checkpoint else None
    spec = spec_from(cfg)
    try:
        net = apply_strategy(blob, spec, strategy, seed=tcfg.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    data = dataset_from(cfg)
    if shots is not None:
        idx, short = few_shot_indices(data.targets, FewShotSpec(shots, tcfg.seed))
        if short:
            print(f"classes with fewer than {shots} clips: {short}")
        data = data.subset(idx)
    result = train(net, data, tcfg)
    meta = {"config": cfg, "strategy": kind, "shots": shots}
    ckpt.save_checkpoint(ckpt.blob_from_network(net, result.iterations, result.optimizer, meta), out / "checkpoint.ckpt")
    write_history(out / "history.csv", result.history)
    eval_data = dataset_from(cfg, "eval_index") if cfg["paths"]["eval_index"] else data
    print(write_report(evaluate(net, eval_data), out, "report", data.targets.sum(axis=0), class_names(cfg)))
    return EXIT_OK


def cmd_complexity(args):
    cfg = load_config(args.config, args.set)
    spec = spec_from(cfg)
    n = int(round(cfg["dsp"]["clip_seconds"] * cfg["dsp"]["sample_rate"]))
    if args.layers:
        for s in propagate_shapes(spec, n):
            print(f"{s.name:<28} {s.kind:<16} {str(s.out_shape):<20} params={s.params:<10} macs={s.macs}")
    params = count_params(spec)
    madds = count_multiadds(spec, n, args.convention)
    print(f"architecture: {spec.name} (width {spec.width_scale}, {spec.n_classes} classes)")
    print(f"input: {cfg['dsp']['clip_seconds']} s at {cfg['dsp']['sample_rate']} Hz ({n} samples)")
    print(f"parameters: {params:,}")
    print(f"multi-adds ({args.convention}): {madds / 1e9:.3f} x 10^9 ({madds:,})")
    return EXIT_OK


def cmd_inspect(args):
    path = Path(args.path)
    head = path.read_bytes()[:8]
    if head.startswith(ckpt.FEATURE_MAGIC):
        values = ckpt.load_features(path)
        print(f"log-mel container: T={values.shape[0]} F={values.shape[1]} "
              f"min={values.min():.3f} max={values.max():.3f}")
        return EXIT_OK
    blob = ckpt.load_checkpoint(path)
    total = sum(v.size for k, v in blob.tensors.items() if not k.endswith(("running_mean", "running_var")))
    print(f"checkpoint: {blob.arch.name} width={blob.arch.width_scale} classes={blob.arch.n_classes}")
    print(f"iteration: {blob.iteration}  parameters: {total:,}  optimizer: {'yes' if blob.optimizer else 'no'}")
    for k, v in blob.meta.items():
        if k != "config":
            print(f"{k}: {v}")
    if args.tensors:
        for name, arr in blob.tensors.items():
            print(f"  {name:<40} {tuple(arr.shape)}")
    return EXIT_OK


def cmd_make_toy(args):
    from .toy import DOWNSTREAM_CLASSES, PRETRAIN_CLASSES, write_toy_dataset

    classes = DOWNSTREAM_CLASSES if args.downstream else PRETRAIN_CLASSES
    index = write_toy_dataset(args.out, args.clips, classes, args.seed)
    print(index)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="audiotag", description="Audio tagging toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp, required=False):
        sp.add_argument("--config", required=required, help="INI job config")
        sp.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override a config value (repeatable; wins over the file)")
        return sp

    sp = with_config(sub.add_parser("extract", help="waveform -> log-mel container"))
    sp.add_argument("--wav", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--pad", action="store_true", help="pad/truncate to dsp.clip_seconds first")
    sp.set_defaults(func=cmd_extract)

    sp = with_config(sub.add_parser("train", help="train a tagger"), required=True)
    sp.set_defaults(func=cmd_train)

    sp = with_config(sub.add_parser("eval", help="evaluate a checkpoint or a score matrix"), required=True)
    sp.add_argument("--checkpoint")
    sp.add_argument("--scores", help="precomputed N x K scores (.npy or .csv)")
    sp.set_defaults(func=cmd_eval)

    sp = with_config(sub.add_parser("transfer", help="downstream training from a checkpoint"), required=True)
    sp.add_argument("--checkpoint")
    sp.add_argument("--strategy", choices=["scratch", "freeze_l1", "freeze_l3", "finetune"])
    sp.add_argument("--shots", type=int)
    sp.set_defaults(func=cmd_transfer)

    sp = with_config(sub.add_parser("complexity", help="parameter and multi-add counts"))
    sp.add_argument("--convention", choices=["flops", "mac"], default="flops")
    sp.add_argument("--layers", action="store_true", help="print per-layer shapes")
    sp.set_defaults(func=cmd_complexity)

    sp = sub.add_parser("inspect", help="summarise a checkpoint or feature file")
    sp.add_argument("path")
    sp.add_argument("--tensors", action="store_true")
    sp.set_defaults(func=cmd_inspect)

    sp = sub.add_parser("make-toy", help="write a synthetic tone/noise dataset")
    sp.add_argument("out")
    sp.add_argument("--clips", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--downstream", action="store_true")
    sp.set_defaults(func=cmd_make_toy)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, DSPError, ckpt.CheckpointError, ckpt.FeatureFormatError, OSError, KeyError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
