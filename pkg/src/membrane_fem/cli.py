"""Command line: ``run <config>``, ``preset <name>``, ``verify``.

Arguments are parsed before numpy is imported so that ``--threads`` can cap
the BLAS/OpenMP thread pools through the environment.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed (overrides the config)")
    common.add_argument("--threads", type=int, default=None, help="worker threads for linear algebra")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry; repeatable")
    common.add_argument("--max-steps", type=int, default=None, help="stop after this many steps")
    common.add_argument("--resolution", type=int, default=1, metavar="FACTOR",
                        help="coarsen all mesh sizes by this power of two")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="artifact", description="Two-phase membrane flow simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", parents=[common], help="run a scenario from a config file")
    p_run.add_argument("config")
    p_pre = sub.add_parser("preset", parents=[common], help="run a named scenario preset")
    p_pre.add_argument("name")
    p_pre.add_argument("--show", action="store_true", help="print the resolved config and exit")
    p_ver = sub.add_parser("verify", parents=[common], help="run the self-checks and print a table")
    p_ver.add_argument("--steps", type=int, default=10, help="letter-C steps for the invariant checks")
    sub.add_parser("list", help="list the scenario presets")
    return parser


def _limit_threads(n: int | None) -> None:
    if n is None:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMBA_NUM_THREADS"):
        os.environ[var] = str(n)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _limit_threads(getattr(args, "threads", None))
    level = logging.WARNING - 10 * getattr(args, "verbose", 0)
    logging.basicConfig(level=max(level, logging.DEBUG), format="%(levelname)s %(name)s: %(message)s")

    from .config import PRESETS, ConfigError, apply_overrides, dump_config, load_config, preset
    from .driver import coarsened, format_table, run

    if args.command == "list":
        print("\n".join(sorted(PRESETS)))
        return 0
    if args.command == "verify":
        from .verification import run_checks
        rows = run_checks(args.steps)
        print(format_table(rows))
        return 0 if all(ok for _, ok, _ in rows) else 1
    try:
        if args.command == "run":
            cfg = apply_overrides(load_config(args.config), args.override)
        else:
            cfg = preset(args.name, args.override)
        if args.threads is not None:
            cfg = cfg.replace(threads=args.threads)
        cfg = coarsened(cfg, args.resolution)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if getattr(args, "show", False):
        print(dump_config(cfg))
        return 0
    result = run(cfg, args.out, seed=args.seed, max_steps=args.max_steps, progress_every=100)
    m = result.manifest
    print(f"{m.status}: {m.steps_done} steps, {m.cause}; outputs in {result.out_dir}")
    return result.status


if __name__ == "__main__":
    sys.exit(main())
