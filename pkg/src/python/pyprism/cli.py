"""
Command-line interface.

    pyprism generate --config exp.json --seed 7 --out data/
    pyprism fit data/manifest.json --method lisa --iters 100 --switch 50
    pyprism sweep --config exp.json --jobs 8 --out results/
    pyprism eval --truth data/h_true.txt --estimate data/h_est.txt

Flags given on the command line override values from ``--config``.
"""

import argparse
import logging
import sys
from typing import List, Optional

import psutil

from . import __version__
from .config import ExperimentConfig, load_config, resolve_master_seed, with_overrides
from .errors import PrismError
from .experiments import cmd_eval, cmd_fit, cmd_generate, cmd_sweep, format_summary

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def default_jobs() -> int:
    return psutil.cpu_count(logical=False) or 1


def resolve_jobs(cli_jobs: Optional[int], configured: Optional[int]) -> int:
    """--jobs, then the configured value, else the physical core count."""
    if cli_jobs is not None:
        return cli_jobs
    if configured is not None:
        return configured
    return default_jobs()


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="PATH", help="JSON experiment configuration")
    parser.add_argument("--seed", type=int, metavar="U64", help="master seed (falls back to $PRISM_SEED, then 0)")
    parser.add_argument("--out", metavar="DIR", help="output directory")
    parser.add_argument("--log-level", default=None, choices=["DEBUG", "INFO", "WARNING", "ERROR"],
                        help="logging level (default WARNING)")
    parser.add_argument("-v", "--verbose", action="store_true", help="shorthand for --log-level INFO")


def _add_em(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--iters", type=int, metavar="T", help="EM iterations")
    parser.add_argument("--switch", type=int, metavar="T_s", help="iteration at which LISA replaces SISA")
    parser.add_argument("--jobs", type=int, metavar="N", help="worker threads (default: config value, else physical cores)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pyprism", description="Simplex-structured unmixing by Monte Carlo EM")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    generate = sub.add_parser("generate", help="write a synthetic dataset and its manifest")
    _add_common(generate)
    generate.add_argument("--snr-db", type=float, metavar="F", help="target SNR in dB")
    generate.add_argument("--n-obs", type=int, metavar="N", help="number of observations")

    fit = sub.add_parser("fit", help="estimate H for a generated dataset")
    _add_common(fit)
    _add_em(fit)
    fit.add_argument("manifest", help="manifest.json written by generate")
    fit.add_argument("--method", choices=["vca", "sisa", "lisa"], default="lisa")
    fit.add_argument("--samples", type=int, metavar="M", help="importance samples per observation")

    sweep = sub.add_parser("sweep", help="run the method x N x SNR x M x seed grid")
    _add_common(sweep)
    _add_em(sweep)
    sweep.add_argument("--method", choices=["vca", "sisa", "lisa"], nargs="+", help="methods to compare")
    sweep.add_argument("--snr-db", type=float, nargs="+", metavar="F", help="SNR values in dB")
    sweep.add_argument("--n-obs", type=int, nargs="+", metavar="N", help="numbers of observations")
    sweep.add_argument("--samples", type=int, nargs="+", metavar="M", help="importance samples per observation")
    sweep.add_argument("--gnuplot", action="store_true", help="also write summary.dat")

    evaluate = sub.add_parser("eval", help="permutation MSE between two matrix files")
    _add_common(evaluate)
    evaluate.add_argument("--truth", required=True, metavar="PATH")
    evaluate.add_argument("--estimate", required=True, metavar="PATH")
    return parser


def configure_logging(args: argparse.Namespace) -> None:
    level = args.log_level or ("INFO" if args.verbose else "WARNING")
    logging.basicConfig(level=getattr(logging, level), format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def _base_config(args: argparse.Namespace) -> ExperimentConfig:
    return load_config(args.config) if args.config else ExperimentConfig()


def run_generate(args: argparse.Namespace) -> int:
    config = _base_config(args)
    seed = resolve_master_seed(args.seed, config)
    path = cmd_generate(config, seed, out_dir=args.out, n_obs=args.n_obs, target_snr_db=args.snr_db)
    print(path)
    return EXIT_OK


def run_fit(args: argparse.Namespace) -> int:
    base = _base_config(args)
    config = with_overrides(
        base,
        total_iterations=args.iters,
        switch_iteration=args.switch,
        samples_per_obs=args.samples,
        jobs=resolve_jobs(args.jobs, base.em.jobs),
    )
    result = cmd_fit(args.manifest, args.method, config.em, seed=args.seed, out_dir=args.out)
    if result.record is not None:
        print(f"{result.method}: permutation MSE {result.record.mse:.6g}")
    return EXIT_OK


def run_sweep(args: argparse.Namespace) -> int:
    config = with_overrides(
        _base_config(args),
        total_iterations=args.iters,
        switch_iteration=args.switch,
        methods=args.method,
        snr_db=args.snr_db,
        n_obs=args.n_obs,
        m_samples=args.samples,
        out_dir=args.out,
        gnuplot=args.gnuplot or None,
    )
    master_seed = resolve_master_seed(args.seed, config)
    result = cmd_sweep(config, master_seed, jobs=resolve_jobs(args.jobs, config.jobs))
    print(format_summary(result.summary))
    print(f"Results written to {result.paths['results']}")
    return EXIT_FAILURE if not result.failures.empty else EXIT_OK


def run_eval(args: argparse.Namespace) -> int:
    out = f"{args.out}/metrics.csv" if args.out else None
    record = cmd_eval(args.truth, args.estimate, out_path=out)
    print(f"permutation MSE {record.mse:.17g}")
    print(f"permutation {' '.join(str(p) for p in record.permutation)}")
    return EXIT_OK


COMMANDS = {
    "generate": run_generate,
    "fit": run_fit,
    "sweep": run_sweep,
    "eval": run_eval,
}


def main(argv: Optional[List[str]] = None) -> int:
    """
    Run the pyprism command line.

    Args:
        argv: Arguments without the program name (default: sys.argv[1:])

    Returns:
        Exit code: 0 on success, 1 on runtime failure, 2 on usage or input errors
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args)
    try:
        return COMMANDS[args.command](args)
    except FileNotFoundError as exc:
        logger.error(f"{exc.filename}: file not found")
        return EXIT_USAGE
    except PrismError as exc:
        logger.error(str(exc))
        return EXIT_USAGE if isinstance(exc, ValueError) else EXIT_FAILURE
    except OSError as exc:
        logger.error(f"I/O error: {exc}")
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
