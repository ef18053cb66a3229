"""
Command-line entry point: ``gempic-hp1 --mode {bench,verify,sweep} ...``

Exit codes: 0 success, 1 verification failure, 2 usage error, 3 I/O error.
The default worker list comes from ``GEMPIC_NUM_WORKERS`` (falling back to
``OMP_NUM_THREADS``, then 1).
"""
import argparse
import logging
import os
import sys

from . import __version__
from .bench import ALL_STRATEGIES, BenchConfig, run_bench, run_verify
from .execution import WORKERS_ENV, env_workers
from .init_state import DEFAULT_V_SCALE, FAST_V_SCALE

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_USAGE = 2
EXIT_IO = 3

log = logging.getLogger("gempic_hp1")


def _int_list(text):
    try:
        values = [int(v) for v in text.replace("x", ",").split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _grid(text):
    values = _int_list(text)
    if len(values) != 3:
        raise argparse.ArgumentTypeError(f"grid needs 3 values, got {text!r}")
    return tuple(values)


def _strategies(text):
    values = [v.strip() for v in text.split(",") if v.strip()]
    if values == ["all"]:
        return list(ALL_STRATEGIES)
    bad = [v for v in values if v not in ALL_STRATEGIES]
    if bad or not values:
        raise argparse.ArgumentTypeError(
            f"unknown strategy {bad}; choose from {', '.join(ALL_STRATEGIES)} or 'all'")
    return values


def build_parser():
    p = argparse.ArgumentParser(
        prog="gempic-hp1",
        description="Benchmark and verify the H_p1 particle kernel.",
        epilog=f"Environment: {WORKERS_ENV} (or OMP_NUM_THREADS) sets the default worker count.",
    )
    p.add_argument("--mode", choices=("bench", "verify", "sweep"), default="bench")
    p.add_argument("--particles", type=int, default=10**6)
    p.add_argument("--grid", type=_grid, default=(16, 8, 8), metavar="NX,NY,NZ")
    p.add_argument("--degree", type=int, default=3)
    p.add_argument("--dt", type=float, default=0.05)
    p.add_argument("--iterations", type=int, default=3)
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--workers", type=_int_list, default=None, metavar="LIST",
                   help="comma-separated worker counts")
    p.add_argument("--strategy", type=_strategies, default=None, metavar="LIST",
                   help=f"comma-separated subset of {', '.join(ALL_STRATEGIES)}, or 'all'")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--csv", dest="csv_path", default=None, metavar="PATH")
    p.add_argument("--paper-config", action="store_true",
                   help="10^7 particles, 16x8x8 grid, degree 3, 3 iterations, dt 0.05")
    p.add_argument("--deterministic", action="store_true",
                   help="static partitioning and replicated reduction only")
    p.add_argument("--fast", action="store_true",
                   help=f"velocity scale {FAST_V_SCALE} so particles cross several cells per step")
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def config_from_args(args):
    if args.workers is None:
        if args.mode == "sweep":
            top = os.cpu_count() or 1
            workers = sorted({1, 2, 4, top} | {w for w in (8, 16, 32) if w <= top})
        else:
            workers = [env_workers(1)]
    else:
        workers = args.workers
    if args.strategy is None:
        strategies = {"bench": ["serial", "pooled"], "sweep": ["pooled"],
                      "verify": list(ALL_STRATEGIES)}[args.mode]
    else:
        strategies = args.strategy
    kwargs = dict(
        particles=args.particles, grid=args.grid, degree=args.degree, dt=args.dt,
        iterations=args.iterations, repeats=args.repeats, worker_list=tuple(workers),
        strategies=tuple(strategies), seed=args.seed, csv_path=args.csv_path, mode=args.mode,
        deterministic=args.deterministic,
        v_scale=FAST_V_SCALE if args.fast else DEFAULT_V_SCALE,
    )
    if args.paper_config:
        kwargs.update(particles=10**7, grid=(16, 8, 8), degree=3, iterations=3, dt=0.05)
    return BenchConfig(**kwargs)


def _check_writable(path):
    directory = os.path.dirname(os.path.abspath(path)) or "."
    if not os.path.isdir(directory) or not os.access(directory, os.W_OK):
        raise OSError(f"cannot write CSV to {path!r}")
    if os.path.isdir(path):
        raise OSError(f"CSV path {path!r} is a directory")


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(message)s")
    try:
        config = config_from_args(args)
    except ValueError as exc:
        parser.print_usage(sys.stderr)
        print(f"gempic-hp1: error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    log.debug("config: %s", config)
    try:
        if config.csv_path:
            _check_writable(config.csv_path)
        if config.mode == "verify":
            report = run_verify(config, log=log.info)
            if not report.passed:
                for r in report.failures:
                    log.error("verification failed: strategy=%s workers=%d", r.strategy, r.workers)
                return EXIT_VERIFY
            return EXIT_OK
        run_bench(config, log=log.info)
        if config.csv_path:
            log.info("wrote %s", config.csv_path)
    except OSError as exc:
        print(f"gempic-hp1: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
