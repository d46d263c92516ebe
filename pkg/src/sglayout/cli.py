"""Command-line entry point: ``sglayout {stats,synth,train,predict,eval,render,gradcheck}``.

Exit codes: 0 success, 1 input or config error, 2 empty result, 3 verification failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import ndgrad as nd
from .checks import run_gradcheck
from .encoder import ModelDims, init_model, load_checkpoint, save_checkpoint
from .graph import ParseError, parse_samples, parse_vocab, sample_to_record, write_samples, write_vocab
from .render import RenderStyle, render_svg
from .spatial import LossWeights
from .stats import FilterConfig, SynthError, SynthSpec, TripletStatTable, compute_stats, filter_corpus, synth_corpus
from .train import TrainConfig, evaluate, history_csv, predict_corpus, train

EXIT_OK, EXIT_INPUT, EXIT_EMPTY, EXIT_VERIFY = 0, 1, 2, 3


class CliError(Exception):
    def __init__(self, message, code=EXIT_INPUT):
        super().__init__(message)
        self.code = code


def _add_filter_args(p):
    g = p.add_argument_group("filtering")
    g.add_argument("--min-object-pixels", type=float, default=32)
    g.add_argument("--min-objects", type=int, default=2)
    g.add_argument("--max-objects", type=int, help="default: max(10, --min-objects)")
    g.add_argument("--min-category-count", type=int, default=0)
    g.add_argument("--min-predicate-count", type=int, default=0)


def _filter_config(args) -> FilterConfig:
    return FilterConfig(
        min_object_pixels=args.min_object_pixels,
        min_objects_per_image=args.min_objects,
        max_objects_per_image=max(10, args.min_objects) if args.max_objects is None else args.max_objects,
        min_category_count=args.min_category_count,
        min_predicate_count=args.min_predicate_count,
    )


def _load_filtered(args):
    vocab = parse_vocab(args.vocab)
    samples = parse_samples(args.corpus, vocab)
    result = filter_corpus(samples, _filter_config(args))
    rejected = ", ".join(f"{k}={v}" for k, v in result.report.items()) or "none"
    print(f"kept {len(result.kept)} of {len(samples)} samples; rejections: {rejected}")
    if not result.kept:
        raise CliError("no samples left after filtering", EXIT_EMPTY)
    return vocab, result.kept


def cmd_stats(args):
    vocab, kept = _load_filtered(args)
    table = compute_stats(kept)
    for w in table.warnings:
        print(f"warning: {w}", file=sys.stderr)
    Path(args.out).write_text(table.dumps(vocab), encoding="utf-8")
    print(f"wrote {len(table)} triplet types to {args.out}")


def cmd_synth(args):
    spec = SynthSpec.load(args.spec)
    try:
        samples = synth_corpus(spec)
    except SynthError as exc:
        raise CliError(str(exc)) from None
    write_samples(args.out, samples, spec.vocab)
    if args.vocab_out:
        write_vocab(args.vocab_out, spec.vocab)
    print(f"wrote {len(samples)} scenes to {args.out}")


def cmd_train(args):
    dims = ModelDims(args.d1, args.d2, args.hidden, args.layers)
    cfg = TrainConfig(
        lr=args.lr,
        batch_size=args.batch_size,
        epochs=args.epochs,
        seed=args.seed,
        weights=LossWeights(args.lambda_box, args.lambda_scm),
        scm_target_mode=args.scm_target_mode,
        max_steps=args.max_steps,
    )
    vocab, kept = _load_filtered(args)
    stats = None
    if args.stats:
        stats = TripletStatTable.from_records(json.loads(Path(args.stats).read_text(encoding="utf-8")), vocab)
    model = init_model(vocab, dims, seed=args.seed if args.init_seed is None else args.init_seed)
    result = train(model, kept, cfg, stats)
    save_checkpoint(result.model, args.checkpoint_out)
    history_path = args.history_out or str(Path(args.checkpoint_out).with_suffix(".history.csv"))
    Path(history_path).write_text(history_csv(result.history), encoding="utf-8")
    last = result.history[-1].total if result.history else float("nan")
    print(f"{len(result.history)} steps, final loss {last:.6f}; checkpoint {args.checkpoint_out}")


def cmd_predict(args):
    vocab = parse_vocab(args.vocab)
    model = load_checkpoint(args.checkpoint, vocab)
    graphs = parse_samples(args.graphs, vocab, require_boxes=False)
    rng = np.random.default_rng(args.seed) if args.noise_scale else None
    boxes = predict_corpus(model, graphs, noise_rng=rng, noise_scale=args.noise_scale)
    lines = []
    for sample, pb in zip(graphs, boxes):
        record = sample_to_record(sample, vocab)
        for obj, box in zip(record["objects"], pb.tolist()):
            obj["box"] = box
        lines.append(json.dumps(record) + "\n")
    Path(args.out).write_text("".join(lines), encoding="utf-8")
    print(f"wrote {len(lines)} layouts to {args.out}")


def cmd_eval(args):
    vocab = parse_vocab(args.vocab)
    model = load_checkpoint(args.checkpoint, vocab)
    corpus = parse_samples(args.corpus, vocab)
    stats = None
    if args.stats:
        stats = TripletStatTable.from_records(json.loads(Path(args.stats).read_text(encoding="utf-8")), vocab)
    report = evaluate(model, corpus, stats, probe_seed=args.probe_seed)
    doc = report.to_json()
    doc["config"] = {"checkpoint": args.checkpoint, "corpus": args.corpus, "stats": args.stats,
                     "probe_seed": args.probe_seed}
    Path(args.out).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    print(f"mean IoU {report.mean_iou:.4f}, scale error {report.mean_abs_scale_error:.4f}, "
          f"distance error {report.mean_distance_error:.4f}")


def _read_layout(path, record_id):
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                objects = [(str(o["category"]), [float(v) for v in o["box"]]) for o in rec["objects"]]
                if any(len(b) != 4 for _, b in objects):
                    raise ValueError("box must have 4 numbers")
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise CliError(f"{path}: line {lineno}: malformed layout ({exc})") from None
            records.append((rec.get("id"), objects))
    if not records:
        raise CliError(f"{path}: no layouts")
    if record_id is None:
        return records[0][1]
    for rid, objects in records:
        if rid == record_id:
            return objects
    raise CliError(f"{path}: no layout with id {record_id!r}")


def cmd_render(args):
    style = RenderStyle(args.width, args.height, args.stroke_width, args.font_size)
    objects = _read_layout(args.layout, args.id)
    Path(args.out).write_text(render_svg(objects, style), encoding="utf-8")
    print(f"wrote {len(objects)} boxes to {args.out}")


def cmd_gradcheck(args):
    if args.corrupt_op:
        with nd.corrupt_backward(args.corrupt_op):
            report = run_gradcheck(args.seed)
    else:
        report = run_gradcheck(args.seed)
    print("\n".join(report.lines()))
    if not report.passed:
        raise CliError("gradient check failed", EXIT_VERIFY)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sglayout", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="filter a corpus and write per-triplet statistics")
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", required=True)
    _add_filter_args(p)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("synth", help="generate a synthetic corpus from a spec file")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--vocab-out")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a layout generator")
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--checkpoint-out", required=True)
    p.add_argument("--history-out")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--max-steps", type=int)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--init-seed", type=int, help="model initialization seed (default: --seed)")
    p.add_argument("--lambda-box", type=float, default=1.0)
    p.add_argument("--lambda-scm", type=float, default=1.0)
    p.add_argument("--scm-target-mode", choices=["per-sample", "corpus-stat"], default="per-sample")
    p.add_argument("--stats", help="statistics file, required for --scm-target-mode corpus-stat")
    p.add_argument("--d1", type=int, default=64)
    p.add_argument("--d2", type=int, default=64)
    p.add_argument("--hidden", type=int, default=128)
    p.add_argument("--layers", type=int, default=3)
    _add_filter_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="lay out scene graphs with a trained checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--graphs", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-scale", type=float, default=0.0)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="score a checkpoint on an annotated corpus")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--stats")
    p.add_argument("--out", required=True)
    p.add_argument("--probe-seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("render", help="draw one layout as SVG")
    p.add_argument("--layout", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--id", help="record id to draw (default: first record)")
    p.add_argument("--width", type=int, default=512)
    p.add_argument("--height", type=int, default=512)
    p.add_argument("--stroke-width", type=float, default=2.0)
    p.add_argument("--font-size", type=float, default=12.0)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("gradcheck", help="finite-difference check of all autodiff ops and the objective")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--corrupt-op", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # argparse uses 2 for usage errors; 2 is reserved here
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ParseError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
