"""`granulab` command line: generate datasets, evaluate predictions, run benchmarks.

Exit codes: 0 success, 2 usage/config error, 3 data error, 4 I/O error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .errors import ConfigError, DataError, IoFailure
from .evaluation import format_bench_report, format_eval_report, read_predictions
from .pipeline import (
    PRESETS,
    RunConfig,
    bench_dataset,
    evaluate_predictions,
    generate_dataset,
    load_run_config,
    run_config_from_dict,
)

logger = logging.getLogger(__name__)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="granulab",
        description="Synthetic settled-particle datasets and PSD estimator benchmarks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="generate an annotated dataset")
    gen.add_argument("--config", type=Path, help="run-config JSON file")
    gen.add_argument("--preset", choices=sorted(PRESETS), help="base preset to start from")
    gen.add_argument("--seed", type=int, help="master seed override")
    gen.add_argument("--workers", type=int, default=1, help="parallel scene workers")
    gen.add_argument("--out", type=Path, help="output directory")
    gen.add_argument("--scenes", type=int, help="number of scenes override")

    ev = sub.add_parser("evaluate", help="score a prediction file against a manifest")
    ev.add_argument("--manifest", type=Path, required=True)
    ev.add_argument("--predictions", type=Path, required=True)
    ev.add_argument("--report", type=Path, required=True)

    be = sub.add_parser("bench", help="benchmark an estimator over a dataset")
    be.add_argument("--manifest", type=Path, required=True)
    be.add_argument("--estimator", default="baseline")
    be.add_argument("--warmup", type=int, default=5)
    be.add_argument("--reps", type=int, default=3)
    be.add_argument("--device-label", default="cpu")
    be.add_argument("--report", type=Path, help="report file (default: beside manifest)")

    pred = sub.add_parser("predict-baseline",
                          help="write baseline predictions for a dataset")
    pred.add_argument("--manifest", type=Path, required=True)
    pred.add_argument("--out", type=Path, required=True)

    return parser


def _cmd_generate(args) -> int:
    cfg = PRESETS[args.preset]() if args.preset else RunConfig()
    if args.config:
        cfg = load_run_config(args.config, base=cfg)
    overrides = {}
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.scenes is not None:
        overrides["n_scenes"] = args.scenes
    if overrides:
        cfg = run_config_from_dict(overrides, base=cfg)
    out = args.out or (Path(cfg.output_dir) if cfg.output_dir else None)
    if out is None:
        raise ConfigError("no output directory: pass --out or set output_dir in the config")
    if args.workers < 1:
        raise ConfigError("--workers must be >= 1")
    manifest = generate_dataset(cfg, out, workers=args.workers)
    print(f"wrote {cfg.n_scenes} scenes; manifest: {manifest}")
    return 0


def _cmd_evaluate(args) -> int:
    preds = read_predictions(args.predictions, source_label=str(args.predictions))
    report = evaluate_predictions(args.manifest, preds, args.report)
    sys.stdout.write(format_eval_report(report, preds.source_label))
    print(f"report written to {args.report}")
    return 0


def _cmd_bench(args) -> int:
    report_path = args.report
    if report_path is None:
        report_path = args.manifest.parent / f"bench_{args.estimator}.txt"
    report = bench_dataset(
        args.manifest, args.estimator,
        warmup=args.warmup, reps=args.reps,
        device_label=args.device_label, report_path=report_path,
    )
    sys.stdout.write(format_bench_report(report, label=args.estimator))
    print(f"report written to {report_path}")
    return 0


def _cmd_predict_baseline(args) -> int:
    from .pipeline import predict_with_baseline

    preds = predict_with_baseline(args.manifest, args.out)
    print(f"wrote {len(preds.records)} predictions to {args.out}")
    return 0


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "generate": _cmd_generate,
        "evaluate": _cmd_evaluate,
        "bench": _cmd_bench,
        "predict-baseline": _cmd_predict_baseline,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as e:
        logger.error("config error: %s", e)
        return 2
    except (IoFailure, OSError) as e:
        logger.error("I/O error: %s", e)
        return 4
    except DataError as e:
        logger.error("data error: %s", e)
        return 3


if __name__ == "__main__":
    sys.exit(main())
