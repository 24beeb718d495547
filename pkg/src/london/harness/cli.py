"""The ``london`` command-line interface.

Subcommands: gen-data, train-teacher, distill, sweep, overfit-probe,
analyze.  Every command takes ``--config PATH`` (flat key = value file)
plus optional overrides.  Exit codes: 0 on success, 1 on usage or
configuration errors, 2 on data or model format errors.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

from london.harness.analyze import run_analyze
from london.harness.config import ConfigError, parse_config
from london.harness.data import DataFormatError, run_gen_data
from london.harness.experiments import run_overfit_probe, run_sweep
from london.harness.training import run_distill, run_train_teacher
from london.network import ModelFormatError


class _Parser(argparse.ArgumentParser):
    """argparse variant whose usage failures exit 1, not 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> _Parser:
    parser = _Parser(prog="london", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="flat key = value config file")
    common.add_argument("--seed", type=int, help="override the master seed")
    common.add_argument("--out", default=".", help="output directory (default: cwd)")
    common.add_argument(
        "--lambda", dest="lam", type=float, help="override the Lipschitz loss weight"
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("gen-data", parents=[common], help="generate train/test CSVs")
    sub.add_parser("train-teacher", parents=[common], help="train the teacher with CE only")
    sub.add_parser("distill", parents=[common], help="distill a student from a teacher model")

    sweep = sub.add_parser("sweep", parents=[common], help="run the lambda ablation grid")
    sweep.add_argument("--jobs", type=int, default=1, help="parallel sweep cells")

    probe = sub.add_parser(
        "overfit-probe", parents=[common],
        help="paired lambda = 0 vs lambda runs measuring the train-test gap",
    )
    probe.add_argument("--jobs", type=int, default=1, help="parallel probe cells")

    analyze = sub.add_parser(
        "analyze", parents=[common], help="spectral profile and Lipschitz bound report"
    )
    analyze.add_argument("--model", help="model file (default: config teacher_model)")
    analyze.add_argument("--data", help="dataset CSV (default: config train_csv)")
    analyze.add_argument(
        "--cross-check", action="store_true",
        help="recompute TM eigenvalues with the Jacobi oracle",
    )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.lam is not None:
        overrides["lam"] = args.lam
    try:
        cfg = parse_config(args.config, overrides)
        if args.command == "gen-data":
            result = run_gen_data(cfg, args.out)
            print(
                f"wrote {result['train']} ({result['train_count']} rows) and "
                f"{result['test']} ({result['test_count']} rows)"
            )
        elif args.command == "train-teacher":
            result = run_train_teacher(cfg, args.out)
            if result["final_train_acc"] is None:
                print(f"wrote {result['model']} (untrained; epochs = 0)")
            else:
                print(
                    f"wrote {result['model']}: train acc "
                    f"{result['final_train_acc']:.4f}, test acc "
                    f"{result['final_test_acc']:.4f}"
                )
        elif args.command == "distill":
            result = run_distill(cfg, args.out)
            print(
                f"wrote {result['model']}: train acc {result['final_train_acc']:.4f}, "
                f"test acc {result['final_test_acc']:.4f}"
            )
        elif args.command == "sweep":
            result = run_sweep(cfg, args.out, jobs=args.jobs)
            print(f"wrote {result['summary']} ({len(result['rows'])} rows, "
                  f"{len(result['failures'])} failed cells)")
            if all(math.isnan(row[1]) for row in result["rows"]):
                print("london: every sweep cell failed; see "
                      f"{result['failed']}", file=sys.stderr)
                return 1
        elif args.command == "overfit-probe":
            result = run_overfit_probe(cfg, args.out, jobs=args.jobs)
            print(
                f"wrote {result['report']}: mean gap lambda=0 "
                f"{result['mean_gap_lambda0']:.4f}, lambda={cfg.lam:g} "
                f"{result['mean_gap_lambda_star']:.4f}"
            )
        else:
            # explicit flags anchor at the shell cwd; config-file paths
            # keep resolving against --out
            model = os.path.abspath(args.model) if args.model else None
            data = os.path.abspath(args.data) if args.data else None
            result = run_analyze(
                cfg, args.out, model_path=model, data_path=data,
                cross_check=args.cross_check,
            )
            print(
                f"wrote {result['table']}: upper bound "
                f"{result['upper_bound']:.6g}, sampled max ratio "
                f"{result['empirical_max_ratio']:.6g}"
            )
    except ConfigError as exc:
        print(f"london: config error: {exc}", file=sys.stderr)
        return 1
    except (DataFormatError, ModelFormatError) as exc:
        print(f"london: format error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"london: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
