"""Command-line front end.

Subcommands: ``synth`` (generate a labeled synthetic corpus), ``train``,
``search`` (architecture search), ``eval`` (hold-out confusion matrix),
``carve`` (classify every block of a disk image) and ``features``
(statistical feature dump with per-feature timings). Every report path
emits delimited output plus a rendered figure; all commands are
deterministic under ``--seed`` apart from wall-clock timing fields.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Optional

import numpy as np

from fragnet import corpus, features, net, report, tpe

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


class UsageError(Exception):
    """Bad flag combination discovered after parsing."""


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--block-size", type=int, choices=(512, 4096),
                        default=None, help="block size in bytes")
    shared.add_argument("--scenario", type=int, choices=(1, 2, 3, 4, 5, 6),
                        default=None, help="class-grouping scenario")
    shared.add_argument("--seed", type=int, default=0)
    shared.add_argument("--out", default=".", help="output directory")
    shared.add_argument("--threads", type=int, default=1)
    shared.add_argument("--config", default=None,
                        help="key=value defaults file; command line wins")

    data_opts = argparse.ArgumentParser(add_help=False)
    data_opts.add_argument("--data", required=True,
                           help="block archive or directory of files")
    data_opts.add_argument("--blocks-per-file", type=int, default=16,
                           help="blocks sampled per file in directory mode")
    data_opts.add_argument("--map-labels", action="store_true",
                           help="treat labels as base file types and group "
                                "them through --scenario")

    parser = argparse.ArgumentParser(
        prog="fragnet",
        description="File-fragment type identification toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[shared],
                       help="generate a labeled synthetic corpus")
    p.add_argument("--kinds", default=",".join(corpus.SYNTH_KINDS),
                   help="comma-separated generator kinds, one class each")
    p.add_argument("--blocks-per-class", type=int, default=1000)

    p = sub.add_parser("train", parents=[shared, data_opts],
                       help="train a block classifier")
    p.add_argument("--arch", type=int, choices=(1, 2, 3, 4, 5, 6), default=None,
                   help="preset architecture to use (defaults to --scenario)")
    p.add_argument("--hp", default=None,
                   help="explicit hyper-parameters, e.g. dense_units=256,"
                        "embedding_dim=64,conv_kernel=128,conv_stride=27,"
                        "n_conv_blocks=1,maxpool_size=4")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--patience", type=int, default=3)
    p.add_argument("--train-fraction", type=float, default=1.0)
    p.add_argument("--val-fraction", type=float, default=1.0)

    p = sub.add_parser("search", parents=[shared, data_opts],
                       help="hyper-parameter search over the discrete grid")
    p.add_argument("--budget", type=int, default=225, help="total trials")
    p.add_argument("--startup", type=int, default=20, help="random warm-up trials")
    p.add_argument("--gamma", type=float, default=0.5, help="score quantile")
    p.add_argument("--trial-epochs", type=int, default=2,
                   help="training epochs per candidate")
    p.add_argument("--epochs", type=int, default=10,
                   help="epochs for the final full-data retrain")
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--train-fraction", type=float, default=0.1)
    p.add_argument("--val-fraction", type=float, default=0.4)

    p = sub.add_parser("eval", parents=[shared, data_opts],
                       help="confusion matrix and accuracy on a split")
    p.add_argument("--model", required=True)
    p.add_argument("--split", choices=corpus.SPLIT_TAGS, default="test")

    p = sub.add_parser("carve", parents=[shared],
                       help="classify every aligned block of a disk image")
    p.add_argument("--image", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--labels", default=None,
                   help="ground-truth class index per block, one per line")

    p = sub.add_parser("features", parents=[shared, data_opts],
                       help="dump the 14 global features and their cost")
    p.add_argument("--compressor", choices=features.COMPRESSORS,
                   default="deflate")
    return parser


def _inject_config(argv: list[str]) -> list[str]:
    """Splice `key=value` lines from --config in right after the
    subcommand, so explicit command-line flags still win."""
    path = None
    for i, token in enumerate(argv):
        if token == "--config" and i + 1 < len(argv):
            path = argv[i + 1]
        elif token.startswith("--config="):
            path = token.split("=", 1)[1]
    if path is None:
        return argv
    injected: list[str] = []
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"config line {raw.strip()!r} is not key=value")
            key, value = (part.strip() for part in line.split("=", 1))
            flag = "--" + key.replace("_", "-")
            if value.lower() in ("true", "false"):
                if value.lower() == "true":
                    injected.append(flag)
            else:
                injected += [flag, value]
    for pos, token in enumerate(argv):
        if not token.startswith("-"):
            return argv[:pos + 1] + injected + argv[pos + 1:]
    return argv + injected


def _outdir(args) -> str:
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _sidecar(path: str) -> str:
    return str(path) + ".classes.json"


def _load_blocks(args) -> tuple[int, list[corpus.Block], Optional[list[str]]]:
    path = args.data
    if os.path.isdir(path):
        block_size = args.block_size or 512
        blocks = corpus.ingest_directory(path, block_size,
                                         args.blocks_per_file, args.seed)
        if not blocks:
            raise ValueError(f"no ingestible files under {path}")
        return block_size, blocks, None
    block_size, blocks = corpus.read_block_archive(path)
    if args.block_size is not None and args.block_size != block_size:
        raise ValueError(f"archive holds {block_size}-byte blocks but "
                         f"--block-size {args.block_size} was requested")
    names = None
    if os.path.exists(_sidecar(path)):
        with open(_sidecar(path)) as fh:
            names = list(json.load(fh))
    return block_size, blocks, names


def _load_dataset(args) -> tuple[corpus.Dataset, Optional[list[str]],
                                 Optional[corpus.Scenario]]:
    block_size, blocks, names = _load_blocks(args)
    ds = corpus.split(blocks, args.seed, block_size)
    scen = None
    if args.map_labels:
        if args.scenario is None:
            raise UsageError("--map-labels requires --scenario")
        scen = corpus.scenario(args.scenario)
        ds = corpus.map_dataset(ds, scen)
        names = list(scen.class_names)
    return ds, names, scen


def _write_history_csv(path, history) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "train_acc", "val_loss", "val_acc"])
        for h in history:
            writer.writerow([h.epoch, repr(h.train_loss), repr(h.train_acc),
                             repr(h.val_loss), repr(h.val_acc)])


def _parse_hp(text: str) -> net.HyperParams:
    values = {}
    for item in text.split(","):
        if "=" not in item:
            raise UsageError(f"--hp entry {item!r} is not name=value")
        key, value = item.split("=", 1)
        values[key.strip()] = int(value)
    missing = set(net.HP_CANDIDATES) - set(values)
    if missing:
        raise UsageError(f"--hp is missing {sorted(missing)}")
    return net.HyperParams.from_mapping(values)


def _resolve_arch(args, block_size: int, n_classes: int) -> net.ModelSpec:
    if args.hp:
        return net.build_model(_parse_hp(args.hp), block_size, n_classes)
    arch = args.arch if args.arch is not None else args.scenario
    if arch is None:
        raise UsageError("pick an architecture: --arch, --scenario or --hp")
    return net.preset_model(arch, block_size, n_classes)


def cmd_synth(args) -> int:
    kinds = [k.strip() for k in args.kinds.split(",") if k.strip()]
    unknown = [k for k in kinds if k not in corpus.SYNTH_KINDS]
    if unknown:
        raise UsageError(f"unknown generator kinds {unknown}; "
                         f"choose from {corpus.SYNTH_KINDS}")
    block_size = args.block_size or 512
    ds = corpus.synth_corpus([(k, args.blocks_per_class) for k in kinds],
                             block_size, args.seed)
    out = _outdir(args)
    archive = os.path.join(out, "corpus.blocks")
    corpus.write_block_archive(archive, ds.blocks, block_size)
    with open(_sidecar(archive), "w") as fh:
        json.dump(kinds, fh)
    print(f"wrote {len(ds)} blocks of {block_size} bytes "
          f"({len(kinds)} classes) to {archive}")
    return EXIT_OK


def cmd_train(args) -> int:
    ds, names, scen = _load_dataset(args)
    n_classes = scen.n_classes if scen else ds.n_classes()
    spec = _resolve_arch(args, ds.block_size, n_classes)
    cfg = net.TrainConfig(batch_size=args.batch_size, max_epochs=args.epochs,
                          learning_rate=args.lr,
                          early_stop_patience=args.patience, seed=args.seed,
                          data_fraction_train=args.train_fraction,
                          data_fraction_val=args.val_fraction)
    params, history = net.train(spec, ds, cfg)
    out = _outdir(args)
    model_path = os.path.join(out, "model.fnm")
    net.save_model(model_path, spec, params, args.seed, class_names=names)
    _write_history_csv(os.path.join(out, "history.csv"), history)
    report.save_history_curves(os.path.join(out, "history.png"), history)
    best = max(h.val_acc for h in history)
    print(f"trained {net.param_count(spec)} parameters for {len(history)} "
          f"epochs; best validation accuracy {best:.4f}")
    print(f"model: {model_path}")
    return EXIT_OK


def cmd_search(args) -> int:
    if args.budget < args.startup:
        raise UsageError(f"--budget {args.budget} is smaller than "
                         f"--startup {args.startup}")
    ds, names, scen = _load_dataset(args)
    n_classes = scen.n_classes if scen else ds.n_classes()
    space = tpe.SearchSpace(dims=net.hyperparameter_space())
    state = tpe.TpeState(space=space, n_startup=args.startup,
                         n_total=args.budget, gamma=args.gamma,
                         rng_seed=args.seed)
    counter = itertools.count()

    def objective(config) -> float:
        trial_seed = (args.seed * 1_000_003 + next(counter)) % (2 ** 31)
        spec = net.build_model(net.HyperParams.from_mapping(config),
                               ds.block_size, n_classes)
        cfg = net.TrainConfig(batch_size=args.batch_size,
                              max_epochs=args.trial_epochs,
                              learning_rate=args.lr,
                              early_stop_patience=max(1, args.trial_epochs),
                              seed=trial_seed,
                              data_fraction_train=args.train_fraction,
                              data_fraction_val=args.val_fraction)
        _, history = net.train(spec, ds, cfg)
        return max(h.val_acc for h in history)

    result = tpe.run_search(objective, state)
    out = _outdir(args)
    tpe.write_search_log(os.path.join(out, "search_log.csv"), result.history,
                         space, args.startup)
    tpe.write_ei_trace(os.path.join(out, "ei_trace.csv"), result.ei_traces)
    if result.ei_traces:
        report.save_ei_traces(os.path.join(out, "ei_traces.png"),
                              result.ei_traces, space.names)
    print(f"searched {len(result.history)} configurations; best score "
          f"{result.best.score:.4f} at trial {result.best.index}")
    print("best config: " + ", ".join(
        f"{k}={result.best.config[k]}" for k in space.names))

    # retrain the winning configuration on the full data
    spec = net.build_model(net.HyperParams.from_mapping(result.best.config),
                           ds.block_size, n_classes)
    cfg = net.TrainConfig(batch_size=args.batch_size, max_epochs=args.epochs,
                          learning_rate=args.lr, seed=args.seed)
    params, history = net.train(spec, ds, cfg)
    model_path = os.path.join(out, "best_model.fnm")
    net.save_model(model_path, spec, params, args.seed, class_names=names)
    _write_history_csv(os.path.join(out, "best_history.csv"), history)
    report.save_history_curves(os.path.join(out, "best_history.png"), history)
    print(f"retrained best model on full data: {model_path} "
          f"(val accuracy {max(h.val_acc for h in history):.4f})")
    return EXIT_OK


def _jpeg_class_index(scen: Optional[corpus.Scenario],
                      names: Optional[list[str]]) -> Optional[int]:
    if scen is not None:
        return scen.jpeg_class()
    if names and names.count("jpg") == 1:
        return names.index("jpg")
    return None


def cmd_eval(args) -> int:
    ds, names, scen = _load_dataset(args)
    spec, params, _, model_names = net.load_model(args.model)
    if scen is not None and scen.n_classes != spec.n_classes:
        raise ValueError(f"scenario {scen.id} has {scen.n_classes} classes "
                         f"but the model has {spec.n_classes}")
    names = names or model_names or [str(i) for i in range(spec.n_classes)]
    if len(names) != spec.n_classes:
        raise ValueError(f"{len(names)} class names for a "
                         f"{spec.n_classes}-class model")
    test = ds.part(args.split)
    if not test:
        raise ValueError(f"split {args.split!r} is empty")
    labels = np.array([b.label for b in test])
    if labels.max() >= spec.n_classes:
        raise ValueError(f"dataset label {labels.max()} outside the model's "
                         f"{spec.n_classes} classes")
    preds, _ = net.predict(spec, params, net.model_inputs(spec, test))
    cm = report.ConfusionMatrix.from_predictions(labels, preds, names)
    out = _outdir(args)
    report.write_confusion_csv(os.path.join(out, "confusion.csv"), cm)
    report.save_confusion_heatmap(os.path.join(out, "confusion.png"), cm,
                                  title=f"{args.split} confusion")
    lines = [f"split={args.split}", f"blocks={cm.total}",
             f"overall_accuracy={cm.accuracy():.6f}"]
    jpeg_idx = _jpeg_class_index(scen, names)
    if jpeg_idx is not None:
        lines.append(f"jpeg_accuracy={cm.per_class_accuracy()[jpeg_idx]:.6f}")
    for name, acc in zip(names, cm.per_class_accuracy()):
        lines.append(f"class_accuracy[{name}]={acc:.6f}")
    summary = "\n".join(lines)
    with open(os.path.join(out, "eval_summary.txt"), "w") as fh:
        fh.write(summary + "\n")
    print(summary)
    return EXIT_OK


def cmd_carve(args) -> int:
    spec, params, _, names = net.load_model(args.model)
    if args.block_size is not None and args.block_size != spec.block_size:
        raise ValueError(f"model expects {spec.block_size}-byte blocks but "
                         f"--block-size {args.block_size} was requested")
    block_size = spec.block_size
    with open(args.image, "rb") as fh:
        image = fh.read()
    if len(image) < block_size:
        raise ValueError(f"image of {len(image)} bytes holds no complete "
                         f"{block_size}-byte block")
    n_blocks = len(image) // block_size
    partial = len(image) % block_size
    if partial:
        print(f"warning: ignoring trailing partial block of {partial} bytes",
              file=sys.stderr)
    x_all = np.frombuffer(image, dtype=np.uint8,
                          count=n_blocks * block_size).reshape(n_blocks, block_size)

    chunk = 256
    ranges = [(lo, min(lo + chunk, n_blocks)) for lo in range(0, n_blocks, chunk)]

    def classify(rng12):
        lo, hi = rng12
        return net.predict(spec, params, x_all[lo:hi])

    start = time.perf_counter()
    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            results = list(pool.map(classify, ranges))
    else:
        results = [classify(r) for r in ranges]
    elapsed = time.perf_counter() - start

    preds = np.concatenate([r[0] for r in results])
    probs = np.concatenate([r[1] for r in results])
    class_names = names or [str(i) for i in range(spec.n_classes)]
    ms_per_block = elapsed * 1000.0 / n_blocks
    min_per_gb = ms_per_block * (2 ** 30 / block_size) / 60000.0

    out = _outdir(args)
    with open(os.path.join(out, "carve.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["offset", "predicted_class", "probability"])
        for i in range(n_blocks):
            writer.writerow([i * block_size, class_names[preds[i]],
                             f"{probs[i, preds[i]]:.6f}"])
    hist = np.bincount(preds, minlength=spec.n_classes)
    with open(os.path.join(out, "carve_summary.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class", "count"])
        for name, count in zip(class_names, hist):
            writer.writerow([name, int(count)])
    stats = {"block_size": block_size, "blocks": n_blocks,
             "partial_bytes_skipped": partial,
             "ms_per_block": ms_per_block, "min_per_gb": min_per_gb}
    with open(os.path.join(out, "carve_stats.json"), "w") as fh:
        json.dump(stats, fh, indent=2)

    if args.labels:
        with open(args.labels) as fh:
            truth = [int(line) for line in fh if line.strip()]
        if len(truth) != n_blocks:
            raise ValueError(f"{len(truth)} ground-truth labels for "
                             f"{n_blocks} blocks")
        cm = report.ConfusionMatrix.from_predictions(truth, preds, class_names)
        report.write_confusion_csv(os.path.join(out, "confusion.csv"), cm)
        report.save_confusion_heatmap(os.path.join(out, "confusion.png"), cm,
                                      title="carve confusion")
        print(f"labeled accuracy: {cm.accuracy():.6f}")

    print(f"classified {n_blocks} blocks in {elapsed:.3f} s "
          f"({ms_per_block:.4f} ms/block, {min_per_gb:.3f} min/GB)")
    return EXIT_OK


def cmd_features(args) -> int:
    _, blocks, _ = _load_blocks(args)
    datas = [b.data for b in blocks]
    labels = [b.label for b in blocks]
    out = _outdir(args)
    features.write_feature_csv(os.path.join(out, "features.csv"), datas,
                               labels, args.compressor)
    timing_sample = datas[:256]
    rows = features.feature_timings(timing_sample, args.compressor)
    with open(os.path.join(out, "feature_timings.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["feature", "ms_per_block"])
        for name, ms in rows:
            writer.writerow([name, f"{ms:.6f}"])
    print(f"wrote {len(datas)} feature rows and {len(rows)} timing rows "
          f"to {out}")
    return EXIT_OK


_COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "search": cmd_search,
    "eval": cmd_eval,
    "carve": cmd_carve,
    "features": cmd_features,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _inject_config(argv)
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"fragnet: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"fragnet: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        print(f"fragnet: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
