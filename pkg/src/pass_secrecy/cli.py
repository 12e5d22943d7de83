"""Command-line entry point: ``pass-secrecy {run,validate,reproduce}``."""
from __future__ import annotations

import argparse
import logging
import sys

from .errors import PassError
from .experiment import PRESETS, load_config, preset_config, run_experiment, write_results
from .validation import run_checks

log = logging.getLogger("pass_secrecy")


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return v


def _execute(cfg, out, workers, timing) -> int:
    records = run_experiment(cfg, workers=workers, timing=timing)
    summary = write_results(records, out)
    failed = sum(1 for r in records if r.error)
    log.info("wrote %d records to %s (summary %s)", len(records), out, summary)
    if failed:
        log.error("%d scheme runs failed; see the error column", failed)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pass-secrecy", description="PASS secrecy beamforming experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a sweep from a TOML config")
    run.add_argument("--config", required=True)
    run.add_argument("--out", required=True, help="CSV output path; a .summary.json is written next to it")
    run.add_argument("--seed", type=_u64, help="override rng_seed")
    run.add_argument("--workers", type=int, default=1)
    run.add_argument("--timing", action="store_true", help="record wall time (output no longer bitwise reproducible)")

    val = sub.add_parser("validate", help="run the oracle self-checks")
    val.add_argument("--seed", type=_u64, default=0)

    rep = sub.add_parser("reproduce", help="run a named figure preset")
    rep.add_argument("--preset", required=True, choices=PRESETS)
    rep.add_argument("--out", required=True)
    rep.add_argument("--full", action="store_true", help="10^4 grid samples and 500 trials")
    rep.add_argument("--trials", type=int)
    rep.add_argument("--seed", type=_u64, default=2025)
    rep.add_argument("--workers", type=int, default=1)
    rep.add_argument("--timing", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    try:
        if args.command == "validate":
            results = run_checks(args.seed)
            for name, ok, detail in results:
                print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
            return 0 if all(ok for _, ok, _ in results) else 1
        if args.command == "run":
            cfg = load_config(args.config)
            if args.seed is not None:
                cfg.rng_seed = args.seed
            return _execute(cfg, args.out, args.workers, args.timing)
        cfg = preset_config(args.preset, full=args.full, trials=args.trials, seed=args.seed)
        return _execute(cfg, args.out, args.workers, args.timing)
    except (PassError, OSError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
