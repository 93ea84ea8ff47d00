#!/usr/bin/env python3
"""
Kernel sweeps and mechanism latency benchmarks for the rnsckks core.

  ckks-bench.py --op ntt                      default NTT sweep at L=54 and L=28
  ckks-bench.py --op bconv --grid grid.json   custom BConv tiling sweep
  ckks-bench.py --op hmult --l 54             one mechanism
"""

import argparse
import logging
import sys

from rnsckks.bench import (MECHANISMS, SWEEP_OPERATIONS, SweepSpec, mechanism_report,
                           run_sweep)
from rnsckks.config import load_config, update_config
from rnsckks.errors import CkksError
from rnsckks.parallel import set_threads
from rnsckks.results_store import ResultsStore
from rnsckks.sweep_chart import SweepChart

logger = logging.getLogger('ckks-bench')


def _levels(text):
    return tuple(int(v) for v in text.split(',') if v.strip())


def setup_logging(log_file=None, level='INFO'):
    handlers = [logging.StreamHandler()]
    if log_file:
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(
        level=getattr(logging, str(level).upper(), logging.INFO),
        format='%(asctime)s - %(levelname)s - %(message)s',
        handlers=handlers
    )


def main(argv=None):
    parser = argparse.ArgumentParser(
        description='Sweep NTT/BConv kernel parameters or time CKKS mechanisms.'
    )
    parser.add_argument('--op', required=True, choices=sorted(set(SWEEP_OPERATIONS + MECHANISMS)),
                        help='Kernel to sweep (ntt, bconv) or mechanism to time')
    parser.add_argument('--mechanism', action='store_true',
                        help='Time ntt/bconv as single mechanisms instead of sweeping them')

    # Parameter set
    parser.add_argument('--n', type=int, default=1 << 16, help='Ring degree N (default: 65536)')
    parser.add_argument('--l', type=_levels, default=(54, 28),
                        help='Comma separated levels; sweeps use each, mechanisms the first '
                             '(default: 54,28)')
    parser.add_argument('--alpha', type=int, default=14, help='Special primes (default: 14)')
    parser.add_argument('--delta-bits', type=int, default=48,
                        help='log2 of the scale (default: 48)')
    parser.add_argument('--seed', type=int, default=0, help='Random seed (default: 0)')

    # Timing
    parser.add_argument('--grid', help='JSON sweep spec or grid file')
    parser.add_argument('--reps', type=int, default=10, help='Timed repetitions (default: 10)')
    parser.add_argument('--warmup', type=int, default=2, help='Untimed repetitions (default: 2)')
    parser.add_argument('--threads', type=int, help='Worker cap (default: one per core)')

    # Output
    parser.add_argument('--format', choices=('csv', 'json'), default='csv', help='Report format')
    parser.add_argument('--out', help='Report path (default: stdout)')
    parser.add_argument('--db', help='Also store the report in this SQLite file')
    parser.add_argument('--chart', help='Also render a sweep chart PNG')
    parser.add_argument('--strict', action='store_true',
                        help='Exit with status 2 when any grid point was skipped '
                             '(mismatched outputs always exit with status 3)')
    parser.add_argument('--config', default='ckks_config.json', help='Configuration file')
    parser.add_argument('--log-file', help='Also log to this file')

    args = parser.parse_args(argv)

    config = load_config(args.config)
    update_config(**config)
    setup_logging(args.log_file, config.get('log_level', 'INFO'))
    if args.threads:
        set_threads(args.threads)

    try:
        if args.op in SWEEP_OPERATIONS and not args.mechanism:
            if args.grid:
                spec = SweepSpec.from_json(args.grid)
                if spec.op != args.op:
                    logger.error(f"Grid file is for '{spec.op}', not '{args.op}'")
                    return 1
            else:
                spec = SweepSpec.default(args.op, levels=args.l, n=args.n, alpha=args.alpha,
                                         delta_bits=args.delta_bits, seed=args.seed)
            spec.reps, spec.warmup = args.reps, args.warmup
            report = run_sweep(spec)
        else:
            report = mechanism_report([args.op], n=args.n, l=max(args.l), alpha=args.alpha,
                                      delta_bits=args.delta_bits, level=args.l[0],
                                      reps=args.reps, warmup=args.warmup, seed=args.seed)
    except (CkksError, OSError, ValueError) as e:
        logger.error(f"Benchmark failed: {e}")
        return 1

    if args.out:
        report.write(args.out, args.format)
    else:
        print(report.to_json() if args.format == 'json' else report.to_csv(), end='')

    if args.db:
        store = ResultsStore(args.db)
        try:
            if store.add_report(report) is False:
                return 1
        finally:
            store.close()

    if args.chart and not SweepChart().save(report, args.chart):
        return 1

    if report.failed:
        logger.error(f"{len(report.failed)} configuration(s) produced incorrect output")
        return 3
    if report.skipped:
        logger.warning(f"{len(report.skipped)} configuration(s) skipped")
        if args.strict:
            return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
