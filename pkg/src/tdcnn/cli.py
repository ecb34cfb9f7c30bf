"""Command-line front end.

Subcommands: synth, preprocess, train, crossval, evaluate, predict,
compare-archs, gradcheck. Every run prints its resolved configuration
(defaults included) before acting. Exit codes: 0 success, 1 usage error,
2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__, gradcheck
from ._backend import backend_name
from .arch import (
    HiddenArch,
    ModelSpec,
    build_model,
    load_checkpoint,
    model_forward,
    save_checkpoint,
)
from .data import (
    CLASS_NAMES,
    Dataset,
    Manifest,
    Sample,
    SynthConfig,
    generate_synthetic,
    load_manifest,
    prepare_dataset,
    read_pgm,
    write_comparison_csv,
    write_curves_svg,
    write_manifest,
    write_metrics_csv,
    write_pgm,
)
from .errors import DataFormatError, EngineError, NumericInstabilityError
from .preprocess import normalize, pipeline
from .tensor import SeededRng
from .train import (
    CvMode,
    TrainConfig,
    cross_validate,
    evaluate,
    metrics,
    split_kfold,
    train_model,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

_ARCH_FLAGS = {
    "triangular": HiddenArch.TRIANGULAR,
    "rectangular": HiddenArch.RECTANGULAR,
    "recto-triangular": HiddenArch.RECTO_TRIANGULAR,
}


class _Parser(argparse.ArgumentParser):
    # usage problems must exit 1, not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _print_config(args: argparse.Namespace) -> None:
    print(f"tdcnn {__version__} [{backend_name()} backend] command={args.command}")
    for key in sorted(vars(args)):
        if key in ("command", "func"):
            continue
        print(f"  {key} = {getattr(args, key)}")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epochs", type=int, default=40, help="training epochs")
    p.add_argument("--batch-size", type=int, default=16, help="minibatch size")
    p.add_argument("--lr", type=float, default=0.001, help="Adam learning rate")
    p.add_argument("--gamma", type=float, default=2.0, help="focal loss focusing exponent")
    p.add_argument("--seed", type=int, default=0, help="seed for init and shuffling")
    p.add_argument(
        "--input-size", type=int, default=300, help="square network input edge in pixels"
    )
    p.add_argument(
        "--precision", choices=("32", "64"), default="32", help="model precision in bits"
    )
    p.add_argument(
        "--arch",
        choices=sorted(_ARCH_FLAGS),
        default="recto-triangular",
        help="hidden stack topology",
    )
    p.add_argument("--augment", action="store_true", help="5x augment the training side")


def _train_config(args: argparse.Namespace, val_fraction: float | None = None) -> TrainConfig:
    return TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr=args.lr,
        gamma=args.gamma,
        seed=args.seed,
        dtype_name="float32" if args.precision == "32" else "float64",
        val_fraction=args.val_fraction if val_fraction is None else val_fraction,
        augment=args.augment,
    )


def _model_spec(args: argparse.Namespace) -> ModelSpec:
    return ModelSpec(
        input_size=(args.input_size, args.input_size),
        hidden=_ARCH_FLAGS[args.arch],
        dtype_name="float32" if args.precision == "32" else "float64",
    )


def _prepared(manifest_path, input_size: int) -> tuple[Manifest, Dataset]:
    manifest = load_manifest(manifest_path)
    return manifest, prepare_dataset(manifest, (input_size, input_size))


def _print_report(title: str, report) -> None:
    cm = report.matrix
    print(
        f"{title}: accuracy={report.accuracy:.5f} precision={report.precision:.5f} "
        f"recall={report.recall:.5f} f1={report.f1:.5f} "
        f"[TP={cm.tp} TN={cm.tn} FP={cm.fp} FN={cm.fn}]"
    )
    if report.degenerate:
        print(f"  zero-denominator metrics reported as 0: {', '.join(report.degenerate)}")


def cmd_synth(args) -> int:
    cfg = SynthConfig(
        size=(args.size, args.size),
        healthy_count=args.count_per_class,
        tumor_count=args.count_per_class,
        noise_std=args.noise_std,
        delta=args.delta,
        radius_range=(args.radius_min, args.radius_max),
        seed=args.seed,
    )
    manifest = generate_synthetic(cfg, args.out)
    print(f"wrote {len(manifest)} images and manifest.csv to {args.out}")
    return EXIT_OK


def cmd_preprocess(args) -> int:
    manifest = load_manifest(args.manifest)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    processed = []
    for sample in manifest.samples:
        img = pipeline(read_pgm(sample.path), args.input_size, args.input_size)
        write_pgm(img, out_dir / sample.path.name)
        processed.append(Sample(Path(sample.path.name), sample.label, sample.subject_id))
    write_manifest(Manifest(processed, source="preprocessed"), out_dir / "manifest.csv")
    print(f"wrote {len(processed)} preprocessed images to {out_dir}")
    return EXIT_OK


def cmd_train(args) -> int:
    manifest, dataset = _prepared(args.manifest, args.input_size)
    manifest.require_both_classes()
    spec = _model_spec(args)
    model = build_model(spec, SeededRng(args.seed))
    cfg = _train_config(args)
    model, logs = train_model(model, dataset, None, cfg)
    for log in logs:
        val = (
            f" val_loss={log.val_loss:.5f} val_acc={log.val_accuracy:.5f}"
            if log.val_loss is not None
            else ""
        )
        print(
            f"epoch {log.epoch:3d}: loss={log.train_loss:.5f} "
            f"acc={log.train_accuracy:.5f}{val} ({log.seconds:.1f}s)"
        )
    if args.checkpoint_out:
        save_checkpoint(model, args.checkpoint_out)
        print(f"checkpoint written to {args.checkpoint_out}")
    if args.curves_svg:
        write_curves_svg(logs, args.curves_svg)
        print(f"curves written to {args.curves_svg}")
    return EXIT_OK


def cmd_crossval(args) -> int:
    manifest, dataset = _prepared(args.manifest, args.input_size)
    manifest.require_both_classes()
    plan = split_kfold(dataset, args.k, CvMode(args.cv_mode), args.seed)
    result = cross_validate(_model_spec(args), dataset, _train_config(args, 0.0), plan)
    for i, report in enumerate(result.reports, start=1):
        _print_report(f"fold {i}", report)
    print(
        "mean: "
        + " ".join(f"{name}={result.mean[name]:.5f}" for name in sorted(result.mean))
    )
    print(
        "stddev: "
        + " ".join(f"{name}={result.stddev[name]:.5f}" for name in sorted(result.stddev))
    )
    if args.metrics_csv:
        write_metrics_csv(result.reports, args.metrics_csv)
        print(f"metrics written to {args.metrics_csv}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    model = load_checkpoint(args.checkpoint)
    if args.input_size is not None and (args.input_size,) * 2 != model.spec.input_size:
        raise DataFormatError(
            f"--input-size {args.input_size} conflicts with the checkpoint's "
            f"{model.spec.input_size[0]}x{model.spec.input_size[1]} input"
        )
    manifest = load_manifest(args.manifest)
    dataset = prepare_dataset(manifest, model.spec.input_size)
    report = metrics(evaluate(model, dataset))
    _print_report("evaluation", report)
    if args.metrics_csv:
        write_metrics_csv([report], args.metrics_csv)
        print(f"metrics written to {args.metrics_csv}")
    return EXIT_OK


def cmd_predict(args) -> int:
    model = load_checkpoint(args.checkpoint)
    h, w = model.spec.input_size
    skipped = 0
    for path in args.images:
        try:
            img = pipeline(read_pgm(path), h, w)
        except (DataFormatError, OSError) as exc:
            print(f"warning: skipping {path}: {exc}", file=sys.stderr)
            skipped += 1
            continue
        batch = normalize(img, model.spec.dtype)[None, ...]
        probs, _ = model_forward(model, batch)
        label = int(np.argmax(probs[0]))
        print(f"{path}\t{CLASS_NAMES[label]}\t{probs[0, label]:.5f}")
    return EXIT_DATA if skipped else EXIT_OK


def cmd_compare_archs(args) -> int:
    manifest, dataset = _prepared(args.manifest, args.input_size)
    manifest.require_both_classes()
    # one seed-derived holdout split shared by all three architectures
    order = np.arange(len(dataset))
    SeededRng(args.seed ^ 0xA0C).shuffle(order)
    n_eval = max(1, int(round(args.eval_fraction * len(dataset))))
    eval_set = dataset.select(order[:n_eval])
    train_set = dataset.select(order[n_eval:])
    cfg = _train_config(args, 0.0)
    rows = []
    for flag in ("triangular", "rectangular", "recto-triangular"):
        spec = ModelSpec(
            input_size=(args.input_size, args.input_size),
            hidden=_ARCH_FLAGS[flag],
            dtype_name=cfg.dtype_name,
        )
        model = build_model(spec, SeededRng(args.seed))
        train_model(model, train_set, Dataset.empty(spec.input_size), cfg)
        report = metrics(evaluate(model, eval_set))
        rows.append((flag.replace("-", "_"), report))
        _print_report(flag, report)
    write_comparison_csv(rows, args.out)
    print(f"comparison written to {args.out}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    results = gradcheck.run_all(seed=args.seed, perturb=args.self_test_perturb)
    worst_ok = True
    for res in results:
        status = "PASS" if res.passed else "FAIL"
        print(f"{res.name:14s} max_rel_error={res.max_rel_error:.3e} "
              f"tolerance={res.tolerance:g} {status}")
        if res.max_rel_error >= args.threshold:
            worst_ok = False
    return EXIT_OK if worst_ok else EXIT_NUMERIC


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="tdcnn",
        description="Brain-tumor MRI classifier: synthesize data, preprocess, "
        "train, cross-validate, evaluate, predict.",
    )
    parser.add_argument("--version", action="version", version=f"tdcnn {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def new(name: str, help_: str, func) -> argparse.ArgumentParser:
        p = sub.add_parser(
            name, help=help_, formatter_class=argparse.ArgumentDefaultsHelpFormatter
        )
        p.set_defaults(func=func)
        return p

    p = new("synth", "generate a synthetic labeled dataset", cmd_synth)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--count-per-class", type=int, default=100, help="images per class")
    p.add_argument("--size", type=int, default=64, help="square image edge in pixels")
    p.add_argument("--noise-std", type=float, default=10.0, help="background noise stddev")
    p.add_argument("--delta", type=float, default=70.0, help="lesion intensity delta")
    p.add_argument("--radius-min", type=float, default=0.10, help="min lesion radius fraction")
    p.add_argument("--radius-max", type=float, default=0.22, help="max lesion radius fraction")
    p.add_argument("--seed", type=int, default=0, help="generator seed")

    p = new("preprocess", "materialize the image pipeline to disk", cmd_preprocess)
    p.add_argument("--manifest", required=True, help="input manifest CSV")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--input-size", type=int, default=300, help="square output edge in pixels")

    p = new("train", "train one model and optionally save a checkpoint", cmd_train)
    p.add_argument("--manifest", required=True, help="training manifest CSV")
    _add_train_flags(p)
    p.add_argument(
        "--val-fraction", type=float, default=0.1, help="held-out validation fraction"
    )
    p.add_argument("--checkpoint-out", default=None, help="path for the trained checkpoint")
    p.add_argument("--curves-svg", default=None, help="path for loss/accuracy curves SVG")

    p = new("crossval", "k-fold cross-validation", cmd_crossval)
    p.add_argument("--manifest", required=True, help="manifest CSV")
    _add_train_flags(p)
    p.add_argument("--k", type=int, default=10, help="number of folds")
    p.add_argument(
        "--cv-mode",
        choices=[m.value for m in CvMode],
        default=CvMode.RANDOM.value,
        help="fold assignment strategy",
    )
    p.add_argument("--metrics-csv", default=None, help="per-fold metrics CSV output")

    p = new("evaluate", "confusion matrix and metrics on a labeled manifest", cmd_evaluate)
    p.add_argument("--checkpoint", required=True, help="trained checkpoint")
    p.add_argument("--manifest", required=True, help="manifest CSV to score")
    p.add_argument(
        "--input-size",
        type=int,
        default=None,
        help="square input edge; defaults to the checkpoint's own size",
    )
    p.add_argument("--metrics-csv", default=None, help="metrics CSV output")

    p = new("predict", "classify images with a trained checkpoint", cmd_predict)
    p.add_argument("--checkpoint", required=True, help="trained checkpoint")
    p.add_argument("images", nargs="+", help="PGM images to classify")

    p = new("compare-archs", "train all three hidden topologies and compare", cmd_compare_archs)
    p.add_argument("--manifest", required=True, help="manifest CSV")
    _add_train_flags(p)
    p.add_argument(
        "--eval-fraction", type=float, default=0.2, help="held-out comparison fraction"
    )
    p.add_argument("--out", required=True, help="comparison CSV output")

    p = new("gradcheck", "finite-difference check of every backward pass", cmd_gradcheck)
    p.add_argument("--seed", type=int, default=2024, help="seed for check instances")
    p.add_argument(
        "--threshold", type=float, default=1e-4, help="max relative error for exit code 0"
    )
    p.add_argument(
        "--self-test-perturb",
        choices=("conv",),
        default=None,
        help="deliberately corrupt a gradient to prove the check detects it",
    )
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _print_config(args)
    try:
        return args.func(args)
    except NumericInstabilityError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (EngineError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
