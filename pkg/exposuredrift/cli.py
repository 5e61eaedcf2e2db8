"""Command-line front end: ``transform``, ``simulate``, ``fit`` and ``summarize``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

from pydantic import ValidationError

from .config import ChainConfig, Config, Hyperparams, RunConfig, TransformOptions, read_config_file
from .exceptions import DataValidationError, NumericalAbort, UsageError
from .logging_utils import setup_logging
from .services.synthetic import SynthSpec
from .tasks.fit_job import run_fit_job
from .tasks.simulate_job import run_simulate_job
from .tasks.summarize_job import run_summarize_job
from .tasks.transform_job import run_transform_job

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(message)


def _default(model: type, field: str) -> Any:
    return model.model_fields[field].default


def _split_labels(raw: str | None) -> list[str] | None:
    if raw is None:
        return None
    return [part.strip() for part in raw.split(",")]


def _add_hyper_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("priors (Gamma priors are shape/rate)")
    group.add_argument(
        "--tau-mu", type=float, help=f"precision of the initial drift level (default: {_default(Hyperparams, 'tau_mu')})"
    )
    for name, label in (("eta", "drift increments"), ("theta", "node activity"), ("gamma", "node attractiveness")):
        group.add_argument(
            f"--a-{name}",
            type=float,
            help=f"Gamma shape for the {label} precision (default: {_default(Hyperparams, f'a_{name}')})",
        )
        group.add_argument(
            f"--b-{name}",
            type=float,
            help=f"Gamma rate for the {label} precision (default: {_default(Hyperparams, f'b_{name}')})",
        )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="exposuredrift",
        description="Bayesian drift model for dynamic weighted exposure networks.",
    )
    parser.add_argument("--config", type=Path, help="key = value file; explicit flags override its values")
    parser.add_argument("--log-level", help=f"log level (default: {Config.LOG_LEVEL})")
    parser.add_argument("--log-format", choices=("json", "text"), help=f"log format (default: {Config.LOG_FORMAT})")
    parser.add_argument(
        "--threads",
        type=int,
        help=f"likelihood worker threads; results do not depend on it (default: {Config.DEFAULT_THREADS})",
    )
    commands = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    transform = commands.add_parser("transform", help="edge list -> relative (Y) network and reports")
    transform.add_argument("input", type=Path, help="CSV with header period,lender,borrower,weight")
    transform.add_argument("output_dir", type=Path, help="directory for network/ and the report files")
    transform.add_argument(
        "--epsilon",
        type=float,
        help=f"floor for zero off-diagonal entries in active rows (default: {_default(TransformOptions, 'epsilon')})",
    )
    transform.add_argument(
        "--top-k", type=int, help="keep the k most relevant nodes; 100 reproduces the reduced sample (default: all)"
    )
    transform.add_argument("--period-labels", help="comma-separated labels, one per period (default: 0..T-1)")
    transform.add_argument(
        "--min-ratio-samples",
        type=int,
        help=f"below this many distinct ratios the median is used (default: {_default(TransformOptions, 'min_ratio_samples')})",
    )
    transform.set_defaults(handler=cmd_transform)

    simulate = commands.add_parser("simulate", help="forward-simulate a network with known parameters")
    simulate.add_argument("output_dir", type=Path, help="directory for edges.csv, truth.json and network/")
    simulate.add_argument("--nodes", type=int, default=10, help="number of nodes, at least 3 (default: 10)")
    simulate.add_argument("--periods", type=int, default=4, help="number of periods (default: 4)")
    simulate.add_argument("--mu-start", type=float, default=0.0, help="drift level of period 0 (default: 0.0)")
    simulate.add_argument(
        "--mu-slope", type=float, help="linear drift per period; omitted draws a random walk (default: random walk)"
    )
    simulate.add_argument("--tau-eta", type=float, default=1.0, help="drift increment precision (default: 1.0)")
    simulate.add_argument("--tau-theta", type=float, default=1.0, help="activity precision (default: 1.0)")
    simulate.add_argument("--tau-gamma", type=float, default=1.0, help="attractiveness precision (default: 1.0)")
    simulate.add_argument("--seed", type=int, help="ground-truth and data seed (default: drawn from entropy)")
    simulate.add_argument("--period-labels", help="comma-separated labels, one per period (default: 0..T-1)")
    simulate.set_defaults(handler=cmd_simulate)

    fit = commands.add_parser("fit", help="run the Metropolis-within-Gibbs sampler on a Y network directory")
    fit.add_argument("network_dir", type=Path, help="relative network directory written by transform or simulate")
    fit.add_argument("output_dir", type=Path, help="run directory for draws and the manifest")
    fit.add_argument(
        "--iterations", type=int, help=f"total sweeps (default: {_default(ChainConfig, 'n_iterations')})"
    )
    fit.add_argument("--burnin", type=int, help=f"discarded sweeps (default: {_default(ChainConfig, 'n_burnin')})")
    fit.add_argument("--thin", type=int, help=f"keep every k-th sweep after burn-in (default: {_default(ChainConfig, 'thin')})")
    fit.add_argument(
        "--adapt-window",
        type=int,
        help="sweeps during which proposal sds are tuned (default: half the burn-in, 100000)",
    )
    fit.add_argument(
        "--adapt-batch", type=int, help=f"sweeps per tuning batch (default: {_default(ChainConfig, 'adapt_batch')})"
    )
    fit.add_argument(
        "--proposal-sd",
        type=float,
        help=f"initial random-walk proposal sd (default: {_default(ChainConfig, 'initial_proposal_sd')})",
    )
    fit.add_argument("--seed", type=int, help="chain seed (default: drawn from entropy and written to the manifest)")
    fit.add_argument(
        "--record-decisions", action="store_true", default=None, help="store the accept/reject sequence"
    )
    _add_hyper_flags(fit)
    fit.set_defaults(handler=cmd_fit)

    summarize = commands.add_parser("summarize", help="posterior summaries of a finished run")
    summarize.add_argument("run_dir", type=Path, help="run directory written by fit")
    summarize.add_argument("output_dir", type=Path, help="directory for summary.json, drift.csv and nodes.csv")
    summarize.add_argument("--relevance", type=Path, help="relevance.csv written by transform")
    summarize.set_defaults(handler=cmd_summarize)
    return parser


def _run_config(args: argparse.Namespace, flags: dict[str, Any]) -> RunConfig:
    file_values: dict[str, Any] = {"threads": Config.DEFAULT_THREADS}
    if args.config is not None:
        if not args.config.exists():
            raise UsageError(f"config file not found: {args.config}")
        file_values.update(read_config_file(args.config))
    flags = {**flags, "threads": args.threads}
    return RunConfig.merged(file_values, flags)


def cmd_transform(args: argparse.Namespace) -> int:
    if args.top_k is not None and args.top_k < 1:
        raise UsageError("--top-k must be a positive integer")
    config = _run_config(
        args,
        {
            "input_path": args.input,
            "output_dir": args.output_dir,
            "epsilon": args.epsilon,
            "top_k": args.top_k,
            "min_ratio_samples": args.min_ratio_samples,
        },
    )
    run_transform_job(
        config.input_path,
        config.output_dir,
        config.transform,
        period_labels=_split_labels(args.period_labels),
    )
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    spec = SynthSpec(
        n_nodes=args.nodes,
        n_periods=args.periods,
        mu_start=args.mu_start,
        mu_slope=args.mu_slope,
        tau_eta=args.tau_eta,
        tau_theta=args.tau_theta,
        tau_gamma=args.tau_gamma,
        seed=args.seed,
        period_labels=_split_labels(args.period_labels),
    )
    threads = args.threads or Config.DEFAULT_THREADS
    run_simulate_job(spec, args.output_dir, threads=threads)
    return EXIT_OK


def cmd_fit(args: argparse.Namespace) -> int:
    flags = {
        "input_path": args.network_dir,
        "output_dir": args.output_dir,
        "n_iterations": args.iterations,
        "n_burnin": args.burnin,
        "thin": args.thin,
        "adapt_window": args.adapt_window,
        "adapt_batch": args.adapt_batch,
        "initial_proposal_sd": args.proposal_sd,
        "seed": args.seed,
        "record_decisions": args.record_decisions,
    }
    for name in Hyperparams.model_fields:
        flags[name] = getattr(args, name)
    config = _run_config(args, flags)
    sample = run_fit_job(config.input_path, config.output_dir, config)
    config.model_copy(
        update={"chain": config.chain.model_copy(update={"seed": sample.seed})}
    ).to_file(Path(config.output_dir) / "run_config.txt", include_paths=False)
    return EXIT_OK


def cmd_summarize(args: argparse.Namespace) -> int:
    run_summarize_job(args.run_dir, args.output_dir, relevance_path=args.relevance)
    return EXIT_OK


def _configure_logging(args: argparse.Namespace) -> None:
    settings = Config.as_dict()
    if args.log_level:
        settings["LOG_LEVEL"] = args.log_level
        # an explicit level is honoured as given
        settings["LOG_VERBOSITY"] = "verbose"
    if args.log_format:
        settings["LOG_FORMAT"] = args.log_format
    setup_logging(settings)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "handler", None) is None:
            raise UsageError("a command is required: transform, simulate, fit or summarize")
        _configure_logging(args)
        return args.handler(args)
    except (UsageError, ValidationError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataValidationError, FileNotFoundError) as exc:
        logger.error("input_rejected", extra={"error": str(exc)})
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalAbort as exc:
        logger.error("numerical_abort", extra={"error": str(exc), "iteration": exc.iteration})
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


__all__ = ["EXIT_DATA", "EXIT_NUMERICAL", "EXIT_OK", "EXIT_USAGE", "build_parser", "main"]
