"""Command line entry point ``mbl <subcommand> --config path``."""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .config import load_config
from .errors import ConfigInvalid, MBLError
from .pipeline import SUBCOMMANDS, run_pipeline
from .report import dumps

log = logging.getLogger("mbl")


def _threads(arg: int | None) -> int:
    if arg is not None:
        return arg
    env = os.environ.get("MBL_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigInvalid(f"MBL_THREADS must be an integer, got {env!r}") from None
    return 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mbl", description=__doc__)
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--out", default=None, help="output directory (overrides the config)")
    p.add_argument("--no-cache", action="store_true", help="ignore and do not write stage caches")
    p.add_argument("--threads", type=int, default=None, help="worker count (fallback: MBL_THREADS)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        threads = _threads(args.threads)
        if threads < 1:
            raise ConfigInvalid("--threads must be at least 1")
        cfg = load_config(args.config)
    except ConfigInvalid as exc:
        sys.stderr.write(dumps({"kind": exc.kind, "message": str(exc)}))
        return 2
    try:
        outcome = run_pipeline(cfg, args.subcommand, out=args.out, use_cache=cfg.cache and not args.no_cache, threads=threads)
    except MBLError as exc:  # defensive: run_pipeline records stage errors itself
        sys.stderr.write(dumps({"kind": exc.kind, "message": str(exc)}))
        return 1
    if outcome.error:
        sys.stderr.write(dumps(outcome.error))
    else:
        log.info("wrote %s", outcome.out)
    return outcome.exit_code


if __name__ == "__main__":
    sys.exit(main())
