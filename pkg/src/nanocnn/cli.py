"""Command-line front end.

Subcommands wire the pipeline end to end: prepare (restructure raw data
into a class tree), split (build a manifest), train, evaluate, analyze
(static architecture accounting), synth (generate the synthetic
dataset), and profiles (dump augmentation profiles as JSON).

Exit codes: 0 success, 2 usage/validation errors, 3 data-format errors,
4 numeric failures.
"""

import argparse
import json
import os
import sys

from . import analyze, metrics
from .augment import PROFILES, profiles_json
from .data import (build_class_tree, deterministic_split, ingest_class_tree,
                   ingest_yolo, load_manifest, save_manifest)
from .errors import (CorruptedStateError, DataFormatError,
                     InvalidArgumentError, NumericFailureError)
from .graph import load_checkpoint, read_checkpoint_header
from .metrics import aggregate_metrics, confusion_matrix
from .models import ARCH_IDS, build_model
from .synthetic import generate_synthetic_dataset
from .train import TrainConfig, evaluate_epoch, fit, split_samples

_ARCH_CHOICES = ("custom", "resnet18", "vgg16")


def _canonical_arch(name):
    return "custom_cnn" if name == "custom" else name


def _resolve_normalize(mode, arch_id):
    """Per-family default: unit for the compact network, the standard
    channel statistics for the two classic baselines."""
    if mode != "auto":
        return mode
    return "unit" if arch_id == "custom_cnn" else "imagenet"


def cmd_prepare(args):
    if args.layout == "yolo":
        if args.positive_ids is None:
            raise InvalidArgumentError(
                "--positive-ids is required with --layout yolo")
        try:
            ids = [int(v) for v in args.positive_ids.split(",") if v.strip()]
        except ValueError:
            raise InvalidArgumentError(
                f"--positive-ids must be comma-separated integers, "
                f"got {args.positive_ids!r}") from None
        images = os.path.join(args.input, "images")
        labels = os.path.join(args.input, "labels")
        assignments, skipped = ingest_yolo(images, labels, ids)
        for path, reason in skipped:
            print(f"skipped {path}: {reason}", file=sys.stderr)
    else:
        if args.positive_ids is not None:
            raise InvalidArgumentError(
                "--positive-ids is only valid with --layout yolo")
        classes, per_class = ingest_class_tree(args.input)
        assignments = [(p, c) for c, paths in zip(classes, per_class)
                       for p in paths]
    build_class_tree(assignments, args.output)
    counts = {}
    for _, cls in assignments:
        counts[cls] = counts.get(cls, 0) + 1
    for cls in sorted(counts):
        print(f"{cls}: {counts[cls]} images")
    return 0


def cmd_split(args):
    classes, per_class = ingest_class_tree(args.data)
    base_dir = os.path.dirname(os.path.abspath(args.out))
    manifest = deterministic_split(classes, per_class, args.val_fraction,
                                   args.seed, base_dir=base_dir)
    save_manifest(args.out, manifest)
    for i, cls in enumerate(manifest["classes"]):
        rows = [s for s in manifest["samples"] if s["class_index"] == i]
        n_val = sum(1 for s in rows if s["split"] == "val")
        print(f"{cls}: {len(rows) - n_val} train / {n_val} val")
    print(f"wrote {args.out}")
    return 0


def cmd_train(args):
    manifest, base_dir = load_manifest(args.manifest)
    arch_id = _canonical_arch(args.arch)
    config = TrainConfig(
        epochs=args.epochs, batch_size=args.batch_size, lr=args.lr,
        seed=args.seed, mode=args.mode,
        normalize=_resolve_normalize(args.normalize, arch_id),
        profile=args.profile, image_size=args.image_size,
    ).validate()
    model = build_model(arch_id, len(manifest["classes"]))
    records, summary = fit(model, manifest, base_dir, config, args.out,
                           weights=args.weights)
    for r in records:
        print(f"epoch {r.epoch}: train loss {r.train_loss:.4f} "
              f"acc {r.train_acc:.4f} | val loss {r.val_loss:.4f} "
              f"acc {r.val_acc:.4f} ({r.seconds:.1f}s)")
    print(f"best epoch {summary['best_epoch']} "
          f"(val acc {summary['best_val_accuracy']:.4f}); "
          f"total {summary['total_seconds']:.1f}s; run dir {args.out}")
    return 0


def cmd_evaluate(args):
    header, _ = read_checkpoint_header(args.checkpoint)
    manifest, base_dir = load_manifest(args.manifest)
    if header["num_classes"] != len(manifest["classes"]):
        raise InvalidArgumentError(
            f"checkpoint has {header['num_classes']} classes, manifest has "
            f"{len(manifest['classes'])}")
    arch_id = header["arch_id"]
    config = TrainConfig(
        batch_size=args.batch_size,
        normalize=_resolve_normalize(args.normalize, arch_id),
        profile="none", image_size=args.image_size,
    ).validate()
    model = build_model(arch_id, header["num_classes"])
    load_checkpoint(args.checkpoint, model)
    val_samples = split_samples(manifest, "val")
    loss, acc, probs = evaluate_epoch(model, val_samples, base_dir, config)

    os.makedirs(args.out, exist_ok=True)
    classes = manifest["classes"]
    y_true = [s["class_index"] for s in val_samples]
    y_pred = probs.argmax(axis=1)
    cm = confusion_matrix(y_true, y_pred, len(classes))
    report = aggregate_metrics(cm, class_names=classes)
    report["loss"] = loss
    metrics.save_confusion_csv(os.path.join(args.out, "confusion.csv"), cm, classes)
    metrics.save_metrics_json(os.path.join(args.out, "metrics.json"), report)
    metrics.save_predictions_jsonl(
        os.path.join(args.out, "predictions.jsonl"),
        metrics.sample_predictions(probs, val_samples, classes, args.num_samples))
    metrics.save_failures_jsonl(
        os.path.join(args.out, "failures.jsonl"),
        metrics.failure_report(probs, val_samples, classes))
    print(f"val loss {loss:.4f} accuracy {acc:.4f} "
          f"(weighted f1 {report['weighted']['f1']:.4f}); reports in {args.out}")
    return 0


def cmd_analyze(args):
    model = build_model(_canonical_arch(args.arch), args.num_classes)
    sys.stdout.write(analyze.size_report(model))
    table = analyze.summary_csv(model, (args.input_size, args.input_size))
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as f:
            f.write(table)
        print(f"wrote {args.csv}")
    else:
        sys.stdout.write(table)
    return 0


def cmd_synth(args):
    classes = generate_synthetic_dataset(args.out, per_class=args.per_class,
                                         size=args.size, seed=args.seed)
    print(f"wrote {args.per_class} x {len(classes)} images under {args.out}")
    return 0


def cmd_profiles(args):
    json.dump(profiles_json(), sys.stdout, indent=2)
    sys.stdout.write("\n")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="nanocnn",
        description="CNN training micro-framework: data preparation, "
                    "training, evaluation, and architecture analysis.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="restructure raw data into a class tree")
    p.add_argument("--input", required=True, help="source directory")
    p.add_argument("--layout", required=True, choices=("classtree", "yolo"))
    p.add_argument("--positive-ids",
                   help="comma-separated YOLO class ids counted as positive")
    p.add_argument("--output", required=True, help="class tree destination")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("split", help="build a train/val manifest")
    p.add_argument("--data", required=True, help="class tree directory")
    p.add_argument("--val-fraction", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", required=True, help="manifest JSON path")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train a model from a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--arch", required=True, choices=_ARCH_CHOICES)
    p.add_argument("--mode", default="scratch", choices=("scratch", "transfer"))
    p.add_argument("--weights", help="checkpoint to import")
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--profile", default="none", choices=sorted(PROFILES))
    p.add_argument("--normalize", default="auto",
                   choices=("auto", "unit", "imagenet"))
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--image-size", type=int, default=224)
    p.add_argument("--out", required=True, help="run directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on the val split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--normalize", default="auto",
                   choices=("auto", "unit", "imagenet"))
    p.add_argument("--num-samples", type=int, default=10,
                   help="rows in predictions.jsonl")
    p.add_argument("--image-size", type=int, default=224)
    p.add_argument("--out", required=True, help="report directory")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("analyze", help="parameter counts, size, and MACs")
    p.add_argument("--arch", required=True, choices=_ARCH_CHOICES)
    p.add_argument("--num-classes", type=int, required=True)
    p.add_argument("--input-size", type=int, default=224)
    p.add_argument("--csv", help="write the layer table here instead of stdout")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("synth", help="generate the synthetic 3-class dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--per-class", type=int, default=100)
    p.add_argument("--size", type=int, default=224)
    p.add_argument("--seed", type=int, default=42)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("profiles", help="dump augmentation profiles as JSON")
    p.set_defaults(func=cmd_profiles)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InvalidArgumentError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (DataFormatError, CorruptedStateError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except NumericFailureError as e:
        print(f"error: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
