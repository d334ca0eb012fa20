"""Command-line entry point.

Exit codes: 0 success, 2 argument/config error, 3 numerical abort,
4 capacity guard.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor

from . import experiment as exp
from .errors import ArgumentError, CapacityError, NumericalError
from .optimizer import TrainConfig

EXIT_OK, EXIT_ARGS, EXIT_NUMERICAL, EXIT_CAPACITY = 0, 2, 3, 4

# target flag name -> type
_TARGET_FLAGS = {
    "kind": str,
    "n_sites": int,
    "chi": int,
    "seed": int,
    "path": str,
    "dmrg_sweeps": int,
    "dmrg_tol": float,
    "ensemble": str,
}
_TRAIN_FLAGS = {f.name: f.type for f in dataclasses.fields(TrainConfig) if f.name != "seed"}
_TYPES = {"int": int, "float": float, "str": str, "int | None": int}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML experiment config")
    p.add_argument("--run-id")
    p.add_argument("--output-dir", help=f"output root (default: ${exp.OUTPUT_ROOT_ENV} or ./runs)")
    p.add_argument("--n-layers", type=int)
    g = p.add_argument_group("target")
    for name, typ in _TARGET_FLAGS.items():
        g.add_argument(f"--{name.replace('_', '-')}", dest=f"target__{name}", type=typ)
    g = p.add_argument_group("training")
    g.add_argument("--train-seed", dest="train__seed", type=int)
    for name, typ in _TRAIN_FLAGS.items():
        g.add_argument(f"--{name.replace('_', '-')}", dest=f"train__{name}", type=_TYPES.get(str(typ), str))


def _config_from_args(args) -> exp.ExperimentConfig:
    doc = exp.load_config(args.config).to_dict() if args.config else exp.ExperimentConfig().to_dict()
    for key in ("run_id", "output_dir", "n_layers"):
        value = getattr(args, key, None)
        if value is not None:
            doc[key] = value
    for key, value in vars(args).items():
        if value is None or "__" not in key:
            continue
        section, name = key.split("__", 1)
        doc[section][name] = value
    return exp.ExperimentConfig.from_dict(doc)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stairprep", description="Stair-circuit state preparation experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-target", help="build a target MPS and its metadata")
    _add_config_flags(p)

    p = sub.add_parser("train", help="train a circuit for a target")
    _add_config_flags(p)
    p.add_argument("--target", dest="target_file", help="target MPS file (default: run directory)")

    p = sub.add_parser("eval", help="evaluate a checkpoint against a target")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--chi-evolve", type=int)
    p.add_argument("--out", help="write the report JSON here (also printed)")

    p = sub.add_parser("report", help="aggregate run directories into CSV tables")
    p.add_argument("root", help="run directory or a directory of runs")
    p.add_argument("--out", help="output directory (default: root)")

    p = sub.add_parser("batch", help="run several configs in parallel processes")
    p.add_argument("configs", nargs="+")
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("show-config", help="print a config (default one if none given)")
    _add_config_flags(p)
    return parser


def _run_config_file(path: str) -> int:
    return _guard(lambda: exp.run_experiment(exp.load_config(path)))


def _guard(fn) -> int:
    try:
        fn()
    except CapacityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except NumericalError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ArgumentError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARGS
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")

    if args.command == "batch":
        with ProcessPoolExecutor(max_workers=max(1, args.jobs)) as pool:
            codes = list(pool.map(_run_config_file, args.configs))
        for path, code in zip(args.configs, codes):
            print(f"{path}: exit {code}")
        return max(codes)

    def run():
        if args.command == "build-target":
            config = _config_from_args(args)
            print(exp.cmd_build_target(config))
        elif args.command == "train":
            config = _config_from_args(args)
            print(exp.cmd_train(config, args.target_file))
        elif args.command == "eval":
            report = exp.cmd_eval(args.checkpoint, args.target, args.chi_evolve, args.out)
            print(json.dumps(report, indent=2))
        elif args.command == "report":
            out = exp.cmd_report(args.root, args.out)
            print(f"{out['n_runs']} run(s) -> {out['f_vs_layers'].parent}")
        elif args.command == "show-config":
            print(exp.dump_config(_config_from_args(args)), end="")

    return _guard(run)


if __name__ == "__main__":
    sys.exit(main())
