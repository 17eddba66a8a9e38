"""Command line front end.

    hogtrain train --config run.cfg [--out DIR] [--key=value ...]
    hogtrain suite --configs DIR [--out DIR]
    hogtrain gen-data --out data.libsvm --n 20000 --dim 54 [...]

Any config key can be overridden on the command line as --key=value; the
command line wins.  Exit codes: 0 success, 1 usage error, 2 run failure.
Set HOGTRAIN_LOG=debug|info|warning to control verbosity.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .data import save_libsvm, synthetic_blobs
from .harness import (
    UsageError,
    apply_overrides,
    config_from_kv,
    execute_run,
    parse_kv_file,
    run_experiment_suite,
    write_run_csvs,
)

log = logging.getLogger("hogtrain")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit(2); usage errors are 1
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="hogtrain", description=__doc__)
    sub = parser.add_subparsers(dest="command")

    p_train = sub.add_parser("train", help="execute one training run")
    p_train.add_argument("--config", required=True, help="key=value run config file")
    p_train.add_argument("--out", default="runs", help="output directory for CSVs")

    p_suite = sub.add_parser("suite", help="execute every *.cfg in a directory")
    p_suite.add_argument("--configs", required=True, help="directory of run config files")
    p_suite.add_argument("--out", default="runs", help="output directory for CSVs")

    p_gen = sub.add_parser("gen-data", help="write a synthetic LIBSVM dataset")
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--n", type=int, default=2000)
    p_gen.add_argument("--dim", type=int, default=10)
    p_gen.add_argument("--classes", type=int, default=2)
    p_gen.add_argument("--separation", type=float, default=3.0)
    p_gen.add_argument("--seed", type=int, default=0)
    return parser


def _split_overrides(extras: list[str]) -> list[str]:
    overrides = []
    for item in extras:
        if not item.startswith("--") or "=" not in item:
            raise UsageError(f"unrecognized argument {item!r} (overrides look like --key=value)")
        overrides.append(item[2:])
    return overrides


def _cmd_train(args, extras) -> int:
    kv = apply_overrides(parse_kv_file(args.config), _split_overrides(extras))
    cfg = config_from_kv(kv)
    metrics = execute_run(cfg)
    paths = write_run_csvs(cfg, metrics, args.out)
    print(f"{cfg.name}: final loss {metrics.final_loss:.6f} after {metrics.epochs_completed} epochs")
    for kind, path in paths.items():
        print(f"  {kind}: {path}")
    return 0


def _cmd_suite(args, extras) -> int:
    if extras:
        raise UsageError(f"unrecognized arguments: {extras}")
    config_dir = Path(args.configs)
    if not config_dir.is_dir():
        raise UsageError(f"{config_dir} is not a directory")
    files = sorted(config_dir.glob("*.cfg"))
    if not files:
        raise UsageError(f"no *.cfg files in {config_dir}")
    configs = [config_from_kv(parse_kv_file(f)) for f in files]
    results = run_experiment_suite(configs, args.out)
    failed = [r for r in results if r.status != "ok"]
    for r in results:
        line = f"{r.name}: {r.status}"
        if r.metrics is not None:
            line += f" (final loss {r.metrics.final_loss:.6f})"
        print(line)
    print(f"summary: {Path(args.out) / 'summary.csv'}")
    return 2 if failed else 0


def _cmd_gen_data(args, extras) -> int:
    if extras:
        raise UsageError(f"unrecognized arguments: {extras}")
    ds = synthetic_blobs(args.n, args.dim, args.classes, args.separation, seed=args.seed)
    save_libsvm(ds, args.out)
    print(f"wrote {ds.n_examples} examples ({ds.feature_dim} features) to {args.out}")
    return 0


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("HOGTRAIN_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    parser = _build_parser()
    try:
        args, extras = parser.parse_known_args(argv)
        if args.command == "train":
            return _cmd_train(args, extras)
        if args.command == "suite":
            return _cmd_suite(args, extras)
        if args.command == "gen-data":
            return _cmd_gen_data(args, extras)
        raise UsageError("a command is required (train, suite or gen-data)")
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        log.exception("run failed")
        print(f"run failed: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
