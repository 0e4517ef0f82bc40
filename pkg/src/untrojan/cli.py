"""Command-line front end.

Subcommands: generate, train, unlearn, eval, report. Exit codes: 0 success,
1 configuration/usage error, 2 I/O error, 3 numerical failure in every
sweep cell.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .errors import NumericalError
from .runner import (
    build_report,
    evaluate_checkpoint,
    format_report,
    generate_datasets,
    run_sweep,
    train_poisoned,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_IO = 2
EXIT_NUMERICAL = 3


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="PATH", help="key = value config file with sections")
    parser.add_argument("--preset", choices=("sentiment-style", "defect-style"), help="task preset")
    parser.add_argument("--seed", type=int, metavar="U64", help="master seed")
    parser.add_argument("--out", metavar="DIR", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="untrojan",
        description="Plant a trojan trigger in a tiny text classifier, then remove it by unlearning.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_generate = sub.add_parser("generate", help="write the synthetic dataset files")
    _add_common(p_generate)

    p_train = sub.add_parser("train", help="train the poisoned classifier checkpoint")
    _add_common(p_train)

    p_unlearn = sub.add_parser("unlearn", help="run the configured method over the sweep grid")
    _add_common(p_unlearn)
    p_unlearn.add_argument(
        "--method", choices=("retrain", "finetune", "ga", "lya"), help="regime to run"
    )
    p_unlearn.add_argument("--jobs", type=int, metavar="N", help="concurrent sweep cells")
    p_unlearn.add_argument("--repeats", type=int, metavar="K", help="repeat seeds per cell")

    p_eval = sub.add_parser("eval", help="compute metrics for a checkpoint")
    _add_common(p_eval)
    p_eval.add_argument("--checkpoint", required=True, metavar="PATH")

    p_report = sub.add_parser("report", help="aggregate sweep manifests into a summary table")
    _add_common(p_report)
    p_report.add_argument(
        "manifests", nargs="*", metavar="SWEEP_MANIFEST",
        help="sweep manifests to aggregate (default: the report index under --out)",
    )
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    overrides = {}
    for key in ("preset", "seed", "out", "method", "jobs", "repeats"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    return overrides


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, _overrides(args))
        if args.command == "generate":
            manifest = generate_datasets(cfg)
            for name, count in sorted(manifest["counts"].items()):
                print(f"{name}: {count} samples")
            print(f"poisoned: {len(manifest['poison_indices'])}")
        elif args.command == "train":
            manifest = train_poisoned(cfg)
            print(
                f"poisoned model -> {manifest['checkpoint']} "
                f"(clean_accuracy={manifest['final_clean_accuracy']:.2f}, "
                f"asr={manifest['final_asr']:.2f})"
            )
        elif args.command == "unlearn":
            sweep = run_sweep(cfg)
            ok = sum(1 for c in sweep["cells"] if c["status"] == "ok")
            print(f"{cfg.method}: {ok}/{len(sweep['cells'])} cells succeeded")
        elif args.command == "eval":
            print(json.dumps(evaluate_checkpoint(cfg, args.checkpoint), indent=2, sort_keys=True))
        elif args.command == "report":
            paths = [Path(p) for p in args.manifests] or None
            rows = build_report(cfg.out_dir, paths)
            print(format_report(rows))
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
