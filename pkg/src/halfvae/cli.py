"""Command-line entry point: ``halfvae generate|train|evaluate|report|plot``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline
from .config import MODELS, load_config
from .errors import ConfigError, HalfVaeError, NumericError, PipelineIOError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("halfvae")


def _u64(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed out of the unsigned 64-bit range: {text}")
    return value


def _seed_list(text):
    seeds = [_u64(s) for s in text.split(",") if s.strip()]
    if not seeds:
        raise argparse.ArgumentTypeError("empty seed list")
    if len(set(seeds)) != len(seeds):
        raise argparse.ArgumentTypeError("duplicate seeds")
    return seeds


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def build_parser():
    parser = _Parser(prog="halfvae", description="Encoder-free VAE for independent component analysis.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, data=True):
        p.add_argument("--config", type=Path, help="experiment config (JSON)")
        p.add_argument("--seed", type=_u64, help="overrides the config seed")
        p.add_argument("--out", type=Path, required=True, help="output directory")
        if data:
            p.add_argument("--data", type=Path, required=True, help="directory written by `generate`")

    p = sub.add_parser("generate", help="sample sources and mix them into observations")
    common(p, data=False)
    p.add_argument("--seeds", type=_seed_list, help="one dataset per seed under OUT/seed_<s>")

    p = sub.add_parser("train", help="fit a model and write checkpoint.json and report.json")
    common(p)
    p.add_argument("--seeds", type=_seed_list, help="independent runs under OUT/seed_<s>, run concurrently")
    p.add_argument("--model", choices=MODELS, help="overrides the config model")
    p.add_argument("--snapshot-every", type=int, metavar="EPOCHS", help="write zmu_epoch_<e>.csv every EPOCHS")
    p.add_argument("--workers", type=int, help="processes for --seeds (default: one per CPU)")

    p = sub.add_parser("evaluate", help="align posterior means to the truth and write metrics.json")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="run directory; metrics.json is written here")
    p.add_argument("--checkpoint", type=Path, help="default: OUT/checkpoint.json")
    p.add_argument("--truth", type=Path, help="default: DATA/sources.csv")
    p.add_argument("--seeds", type=_seed_list, help="evaluate OUT/seed_<s> for each seed")
    p.add_argument("--workers", type=int)

    p = sub.add_parser("report", help="collect metrics.json files into table.json and table.csv")
    p.add_argument("--runs", type=Path, nargs="+", required=True, help="metrics files or directories to search")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("plot", help="write per-figure CSV and SVG files")
    p.add_argument("--data", type=Path, help="directory written by `generate`")
    p.add_argument("--runs", type=Path, nargs="*", default=[], help="run directories with report/metrics files")
    p.add_argument("--out", type=Path, required=True)
    return parser


def _emit(payload):
    print(json.dumps(payload, indent=2))


def _generate(args):
    cfg = load_config(args.config, args.seed, need_seed=not args.seeds)
    if args.seeds:
        for s in args.seeds:
            pipeline.generate(cfg.with_seed(s), pipeline.seed_dir(args.out, s))
        _emit({"written": [str(pipeline.seed_dir(args.out, s)) for s in args.seeds]})
    else:
        pipeline.generate(cfg, args.out)
        _emit({"written": str(args.out)})


def _train(args):
    cfg = pipeline.replace_model(load_config(args.config, args.seed, need_seed=not args.seeds), args.model)
    if args.seeds:
        _, summary = pipeline.train_seeds(cfg, args.seeds, args.data, args.out, args.snapshot_every, args.workers)
        _emit(summary or {"trained": args.seeds})
    else:
        report = pipeline.run_train(cfg, args.data, args.out, args.snapshot_every)
        _emit({"model": report["model"], "final_loss": report["loss_curve"]["loss"][-1],
               "final_metrics": report["final_metrics"] and report["final_metrics"]["mean_rmse"]})


def _evaluate(args):
    if args.seeds:
        _, summary = pipeline.evaluate_seeds(args.seeds, args.data, args.out, args.truth, args.workers)
        _emit(summary)
    else:
        checkpoint = args.checkpoint or args.out / pipeline.CHECKPOINT
        metrics = pipeline.run_evaluate(checkpoint, args.data, args.out, args.truth)
        _emit({"model": metrics["model"], "alignment": metrics["alignment"]})


def _report(args):
    table = pipeline.run_report(args.runs, args.out)
    _emit({"columns": table["columns"], "rows": [{r["label"]: r["values"]} for r in table["rows"]]})


def _plot(args):
    from .plotting import run_plot

    files = run_plot(args.out, args.data, args.runs)
    _emit({"written": len(files)})


COMMANDS = {"generate": _generate, "train": _train, "evaluate": _evaluate, "report": _report, "plot": _plot}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as exc:
        print(f"halfvae: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        COMMANDS[args.command](args)
    except ConfigError as exc:
        where = f" [{exc.field}]" if exc.field else ""
        print(f"halfvae: config error{where}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"halfvae: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (PipelineIOError, OSError) as exc:
        print(f"halfvae: io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except HalfVaeError as exc:
        # shape, domain and degenerate-data problems all trace back to the inputs
        print(f"halfvae: invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
