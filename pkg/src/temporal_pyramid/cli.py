"""Command-line entry point.

Defaults follow the reference training setup (25 segments, 3 max-pooled
pyramid levels, momentum 0.9, clipping at 40, dropout 0.8), so running
``train`` with no tuning flags reproduces it.  Every output path is
relative to ``--workdir``; progress goes to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import DataError, DimensionMismatch, NumericError
from .feature_store import load_checkpoint, load_manifest, save_checkpoint
from .inference import FusionWeights, evaluate, fuse_tables, read_scores, report_from_scores, write_scores
from .synthetic import STRUCTURES, SyntheticSpec, generate
from .tpp import PyramidConfig
from .trainer import TrainConfig, train
from .verification import gradcheck

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4
EXIT_DIMENSION = 5

log = logging.getLogger("temporal_pyramid")

ABLATIONS = [
    PyramidConfig(bins=(1,)),
    PyramidConfig(bins=(1, 2)),
    PyramidConfig(bins=(1, 2, 4)),
    PyramidConfig(bins=(1, 2, 4, 8)),
    PyramidConfig(bins=(3,)),
    PyramidConfig(bins=(1, 2, 4), kernel="average"),
]


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--manifest", required=True, help="training manifest (JSON lines)")
    p.add_argument("--val-manifest", help="validation manifest for the plateau rule")
    p.add_argument("--features-dir", help="directory that relative feature paths resolve against")
    p.add_argument("--stream", choices=["spatial", "temporal"], help="stream to train (default: the only one present)")
    p.add_argument("--segments", type=int, default=25)
    p.add_argument("--levels", type=int, default=3)
    p.add_argument("--bins", type=int, nargs="+", help="explicit bins per level, overrides --levels")
    p.add_argument("--kernel", choices=["max", "average"], default="max")
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--final-lr", type=float, default=1e-5)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--clip-norm", type=float, default=40.0)
    p.add_argument("--dropout", type=float, default=0.8)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--accumulation", type=int, default=1)
    p.add_argument("--iters", type=int, default=1000)
    p.add_argument("--eval-interval", type=int, default=50)
    p.add_argument("--patience", type=int, default=3)
    p.add_argument("--min-delta", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=["tpp", "frame-average"], default="tpp")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="temporal-pyramid", description=__doc__.splitlines()[0])
    parser.add_argument("--workdir", default=".", help="root for all relative paths and outputs")
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", help="write a synthetic dataset")
    p.add_argument("--structure", choices=STRUCTURES, default="order_pairs")
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--frames", type=int, default=12)
    p.add_argument("--train-per-class", type=int, default=50)
    p.add_argument("--val-per-class", type=int, default=10)
    p.add_argument("--test-per-class", type=int, default=20)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--variants", type=int, default=1)
    p.add_argument("--streams", nargs="+", choices=["spatial", "temporal"], default=["spatial", "temporal"])
    p.add_argument("--shared-fraction", type=float, default=0.75)
    p.add_argument("--nuisance", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="data")

    p = sub.add_parser("train", help="train a classifier head")
    _add_train_flags(p)
    p.add_argument("--out", default="model.dtpc")
    p.add_argument("--log", default="train_log.jsonl")

    p = sub.add_parser("eval", help="score a split and write an accuracy report")
    p.add_argument("--manifest", required=True)
    p.add_argument("--features-dir")
    p.add_argument("--checkpoint", help="single-stream checkpoint (stream taken from --stream)")
    p.add_argument("--stream", choices=["spatial", "temporal"], default="spatial")
    p.add_argument("--spatial-checkpoint")
    p.add_argument("--temporal-checkpoint")
    p.add_argument("--weights", type=float, nargs=2, default=[0.5, 0.5], metavar=("SPATIAL", "TEMPORAL"))
    p.add_argument("--segments", type=int, default=25)
    p.add_argument("--topk", type=int, nargs="+", default=[1, 5])
    p.add_argument("--report", default="report.txt")
    p.add_argument("--scores", default="scores.jsonl")

    p = sub.add_parser("fuse", help="fuse two score files")
    p.add_argument("--spatial-scores", required=True)
    p.add_argument("--temporal-scores", required=True)
    p.add_argument("--weights", type=float, nargs=2, default=[0.5, 0.5], metavar=("SPATIAL", "TEMPORAL"))
    p.add_argument("--n-classes", type=int)
    p.add_argument("--topk", type=int, nargs="+", default=[1, 5])
    p.add_argument("--report", default="fused_report.txt")
    p.add_argument("--scores", default="fused_scores.jsonl")

    p = sub.add_parser("gradcheck", help="compare analytic gradients to finite differences")
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eps", type=float, default=1e-3)
    p.add_argument("--tolerance", type=float, default=1e-6)
    p.add_argument("--report", default="gradcheck.txt")

    p = sub.add_parser("ablate", help="sweep pyramid layouts and kernels")
    _add_train_flags(p)
    p.add_argument("--test-manifest", required=True)
    p.add_argument("--weights", type=float, nargs=2, default=[0.5, 0.5], metavar=("SPATIAL", "TEMPORAL"))
    p.add_argument("--out", default="ablation.txt")
    return parser


def _train_config(args, pyramid: PyramidConfig | None = None) -> TrainConfig:
    if pyramid is None:
        pyramid = PyramidConfig(bins=tuple(args.bins)) if args.bins else PyramidConfig(args.levels)
        pyramid = PyramidConfig(kernel=args.kernel, bins=pyramid.bins)
    return TrainConfig(
        segments=args.segments, pyramid=pyramid, batch_size=args.batch_size,
        accumulation=args.accumulation, lr=args.lr, final_lr=args.final_lr,
        momentum=args.momentum, clip_norm=args.clip_norm, dropout_rate=args.dropout,
        max_iterations=args.iters, patience=args.patience, min_delta=args.min_delta,
        eval_interval=args.eval_interval, seed=args.seed, aggregation=args.mode,
        threads=args.threads,
    )


def _resolve(workdir: Path, value: str | None) -> Path | None:
    return None if value is None else workdir / value


def _manifest(workdir: Path, path: str, features_dir: str | None):
    return load_manifest(_resolve(workdir, path), base_dir=_resolve(workdir, features_dir))


def cmd_gen_synthetic(args, workdir: Path) -> int:
    spec = SyntheticSpec(
        n_classes=args.classes, d=args.dim, frames=args.frames,
        videos_per_class={"train": args.train_per_class, "validation": args.val_per_class,
                          "test": args.test_per_class},
        noise=args.noise, structure=args.structure, seed=args.seed, variants=args.variants,
        streams=tuple(args.streams), shared_fraction=args.shared_fraction, nuisance=args.nuisance,
    )
    out = workdir / args.out
    manifests = generate(spec, out)
    for split, m in manifests.items():
        log.info("%s: %d records -> %s", split, len(m.records), out / f"{split}.jsonl")
    return EXIT_OK


def _train_one(args, workdir: Path, config: TrainConfig, stream: str | None):
    manifest = _manifest(workdir, args.manifest, args.features_dir)
    val = _manifest(workdir, args.val_manifest, args.features_dir) if args.val_manifest else None
    stream = stream or args.stream
    if stream is None:
        if len(manifest.streams) != 1:
            raise DataError(f"manifest has streams {manifest.streams}; choose one with --stream")
        stream = manifest.streams[0]
    manifest = manifest.for_stream(stream)

    def progress(rec):
        if rec["split"] == "validation" or rec["iteration"] % 100 == 0:
            log.info("iter %d %s loss %.4f lr %g", rec["iteration"], rec["split"], rec["loss"], rec["lr"])

    return train(manifest, config, val, on_log=progress)


def cmd_train(args, workdir: Path) -> int:
    ckpt, history = _train_one(args, workdir, _train_config(args), None)
    save_checkpoint(ckpt, workdir / args.out)
    with open(workdir / args.log, "w") as fh:
        for rec in history:
            fh.write(json.dumps(rec) + "\n")
    log.info("saved %s after %d iterations", workdir / args.out, ckpt.iteration)
    return EXIT_OK


def cmd_eval(args, workdir: Path) -> int:
    checkpoints = {}
    if args.checkpoint:
        checkpoints[args.stream] = load_checkpoint(workdir / args.checkpoint)
    if args.spatial_checkpoint:
        checkpoints["spatial"] = load_checkpoint(workdir / args.spatial_checkpoint)
    if args.temporal_checkpoint:
        checkpoints["temporal"] = load_checkpoint(workdir / args.temporal_checkpoint)
    if not checkpoints:
        raise ValueError("eval needs --checkpoint or a per-stream checkpoint")
    manifest = _manifest(workdir, args.manifest, args.features_dir)
    report, scores, labels = evaluate(manifest, checkpoints, FusionWeights(*args.weights),
                                      args.segments, tuple(args.topk), args.threads)
    (workdir / args.report).write_text(report.to_text())
    write_scores(scores, labels, workdir / args.scores)
    print(f"accuracy {report.accuracy:.4f}")
    return EXIT_OK


def cmd_fuse(args, workdir: Path) -> int:
    s_scores, s_labels = read_scores(workdir / args.spatial_scores)
    t_scores, t_labels = read_scores(workdir / args.temporal_scores)
    for vid, label in t_labels.items():
        if s_labels.get(vid, label) != label:
            raise DataError(f"label disagreement for {vid!r}")
    labels = {**t_labels, **s_labels}
    fused = fuse_tables({"spatial": s_scores, "temporal": t_scores}, FusionWeights(*args.weights))
    n = args.n_classes or len(next(iter(fused.values())))
    report = report_from_scores(fused, labels, n, tuple(args.topk))
    (workdir / args.report).write_text(report.to_text())
    write_scores(fused, labels, workdir / args.scores)
    print(f"accuracy {report.accuracy:.4f}")
    return EXIT_OK


def cmd_gradcheck(args, workdir: Path) -> int:
    report = gradcheck(args.instances, args.seed, args.eps, args.tolerance)
    text = report.to_text()
    (workdir / args.report).write_text(text)
    sys.stdout.write(text)
    return EXIT_OK if report.passed else EXIT_NUMERIC


def format_ablation(rows: list[tuple[str, dict[str, float]]], columns: list[str]) -> str:
    header = f"{'levels':<14}" + "".join(f"{c:>12}" for c in columns)
    lines = [header]
    for name, accs in rows:
        lines.append(f"{name:<14}" + "".join(f"{100 * accs[c]:>12.1f}" for c in columns))
    return "\n".join(lines) + "\n"


def cmd_ablate(args, workdir: Path) -> int:
    test = _manifest(workdir, args.test_manifest, args.features_dir)
    train_streams = _manifest(workdir, args.manifest, args.features_dir).streams
    streams = [args.stream] if args.stream else train_streams
    weights = FusionWeights(*args.weights)
    columns = [s.capitalize() for s in streams] + (["Two-stream"] if len(streams) == 2 else [])
    rows = []
    for pyramid in ABLATIONS:
        config = _train_config(args, pyramid)
        ckpts = {}
        accs = {}
        for stream in streams:
            ckpts[stream], _ = _train_one(args, workdir, config, stream)
            report, _, _ = evaluate(test, {stream: ckpts[stream]}, weights, config.segments, (1,), args.threads)
            accs[stream.capitalize()] = report.accuracy
        if len(streams) == 2:
            report, _, _ = evaluate(test, ckpts, weights, config.segments, (1,), args.threads)
            accs["Two-stream"] = report.accuracy
        log.info("%s: %s", pyramid.label(), accs)
        rows.append((pyramid.label(), accs))
    text = format_ablation(rows, columns)
    (workdir / args.out).write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {
    "gen-synthetic": cmd_gen_synthetic,
    "train": cmd_train,
    "eval": cmd_eval,
    "fuse": cmd_fuse,
    "gradcheck": cmd_gradcheck,
    "ablate": cmd_ablate,
}


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    workdir = Path(args.workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    try:
        return COMMANDS[args.command](args, workdir)
    except DimensionMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIMENSION
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"error: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
