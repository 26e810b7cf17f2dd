"""The ``fedctr`` command line.

Every subcommand reads an optional configuration file (``--config``, see
:mod:`fedctr.evaluation.options`) and applies the command-line flags on top
of it. Exit status is 0 on success, 2 for invalid configurations or usage
and 1 for any other error.
"""

import argparse
import logging
import os
import sys
from dataclasses import replace
from typing import List, Optional, Sequence

from .dataio import generate_synthetic, save_dataset
from .diagnostics import format_checks, gradient_suite
from .evaluation import (
    ConfigError,
    ExperimentConfig,
    non_gui_backend,
    plot_noise_tradeoff,
    plot_platform_ablation,
    plot_variant_comparison,
    run_ablation_behavior,
    run_ablation_noise,
    run_ablation_platforms,
    run_ablation_train_fraction,
    run_ablation_variants,
    run_experiment,
    run_repeated,
    write_report,
    write_table,
)
from .evaluation.experiments import platform_names
from .federation import FederationOptionsError
from .models import AggregatorKind, ModelConfigError, OptimizerKind, PredictorKind
from .privacy import PrivacyConfigError

logger = logging.getLogger("fedctr")

CONFIG_ERRORS = (ConfigError, ModelConfigError, PrivacyConfigError, FederationOptionsError)

# Flags that override configuration keys of the same name.
CONFIG_FLAGS = (
    "experiment",
    "data",
    "seed",
    "platforms",
    "lambda_ldp",
    "lambda_dp",
    "predictor",
    "aggregator",
    "epochs",
    "batch_size",
    "lr",
    "optimizer",
    "train_fraction",
    "behavior_fraction",
    "repeats",
    "pretrained",
    "n_jobs",
)

ABLATIONS = ("platforms", "noise", "variants", "behavior", "train-fraction")


def _float_list(text: str) -> List[float]:
    return [float(part) for part in text.split(",") if part.strip()]


def _int_list(text: str) -> List[int]:
    return [int(part) for part in text.split(",") if part.strip()]


def _common_parser(out: str = "results") -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument("--config", type=str, help="Configuration file (key = value lines).")
    parser.add_argument("--name", dest="experiment", type=str, help="Experiment name.")
    parser.add_argument("--data", type=str, help="Dataset directory. Default: synthetic.")
    parser.add_argument("--seed", type=int, help="Run seed.")
    parser.add_argument(
        "--platforms",
        type=str,
        help="Comma-separated 1-based behavior platforms to use, in order.",
    )
    parser.add_argument("--lambda-ldp", type=float, help="Local Laplace noise scale.")
    parser.add_argument("--lambda-dp", type=float, help="Aggregated Laplace noise scale.")
    parser.add_argument(
        "--predictor",
        type=str.lower,
        choices=[kind.value for kind in PredictorKind],
        help="CTR predictor.",
    )
    parser.add_argument(
        "--aggregator",
        type=str.lower,
        choices=[kind.value for kind in AggregatorKind],
        help="User embedding aggregator.",
    )
    parser.add_argument("--epochs", type=int, help="Training epochs.")
    parser.add_argument("--batch-size", type=int, help="Impressions per step (default 30).")
    parser.add_argument("--lr", type=float, help="Learning rate (default 1e-3).")
    parser.add_argument(
        "--optimizer",
        type=str.lower,
        choices=[kind.value for kind in OptimizerKind],
        help="Optimizer.",
    )
    parser.add_argument("--train-fraction", type=float, help="Fraction of training impressions.")
    parser.add_argument(
        "--behavior-fraction", type=float, help="Fraction of recent behaviors kept."
    )
    parser.add_argument("--repeats", type=int, help="Repetitions with consecutive seeds.")
    parser.add_argument("--pretrained", type=str, help="GloVe-style word vector file.")
    parser.add_argument("--n-jobs", type=int, help="Parallel runs in ablations.")
    parser.add_argument("-o", "--out", type=str, default=out, help="Output directory.")
    parser.add_argument(
        "-v",
        "--verbose",
        action="store_true",
        help="Run in verbose mode.",
    )
    return parser


def make_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog="fedctr",
        description="Federated native-ad CTR prediction across behavior platforms.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    gen_parser = subparsers.add_parser(
        "gen-data",
        parents=[_common_parser(out="data")],
        help="Generate a synthetic multi-platform dataset.",
        description="Generate a synthetic dataset. --seed is the generator seed.",
    )
    gen_parser.set_defaults(func=gen_data)

    train_parser = subparsers.add_parser(
        "train", parents=[common], help="Train and evaluate one federation."
    )
    train_parser.set_defaults(func=train)

    evaluate_parser = subparsers.add_parser(
        "evaluate",
        parents=[common],
        help="Train and evaluate --repeats federations and summarize the metrics.",
    )
    evaluate_parser.set_defaults(func=evaluate)

    attack_parser = subparsers.add_parser(
        "attack",
        parents=[common],
        help="Train a federation and run the behavior-inference attack.",
    )
    attack_parser.add_argument(
        "--attack-instances", type=int, help="Attack instances per attacked embedding."
    )
    attack_parser.set_defaults(func=attack)

    gradcheck_parser = subparsers.add_parser(
        "gradcheck",
        parents=[common],
        help="Check every backward pass against finite differences.",
    )
    gradcheck_parser.add_argument(
        "--max-coords",
        type=int,
        default=12,
        help="Coordinates checked per parameter block.",
    )
    gradcheck_parser.set_defaults(func=gradcheck)

    ablate_parser = subparsers.add_parser(
        "ablate", parents=[common], help="Run an ablation and write its plot-data table."
    )
    ablate_parser.add_argument("--kind", choices=ABLATIONS, required=True, help="Ablation.")
    ablate_parser.add_argument(
        "--counts", type=_int_list, default=None, help="Platform counts, e.g. 1,2."
    )
    ablate_parser.add_argument(
        "--order", type=_int_list, default=None, help="Order in which platforms are added."
    )
    ablate_parser.add_argument(
        "--ldp-scales",
        type=_float_list,
        default=[0.0, 0.01, 0.1, 1.0],
        help="Local noise scales.",
    )
    ablate_parser.add_argument(
        "--dp-scales", type=_float_list, default=[0.0], help="Aggregated noise scales."
    )
    ablate_parser.add_argument(
        "--fractions",
        type=_float_list,
        default=None,
        help="Behavior or training fractions.",
    )
    ablate_parser.add_argument("--plot", action="store_true", help="Also write a PNG plot.")
    ablate_parser.set_defaults(func=ablate)

    return parser


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    """The configuration file of ``args``, if any, overridden by the flags."""
    if args.config is not None:
        config = ExperimentConfig.from_file(args.config)
    else:
        config = ExperimentConfig()
    overrides = {
        key: getattr(args, key) for key in CONFIG_FLAGS if getattr(args, key, None) is not None
    }
    if getattr(args, "attack_instances", None) is not None:
        overrides["attack_instances"] = args.attack_instances
    config.update(overrides)
    config.validate()
    return config


def gen_data(args: argparse.Namespace) -> int:
    config = load_config(args)
    if args.seed is not None:
        config = replace(config, data_seed=args.seed)
    dataset = generate_synthetic(config.synthetic_spec())
    save_dataset(dataset, args.out)
    for key, value in dataset.stats().items():
        print(f"{key} = {value}")
    return 0


def train(args: argparse.Namespace) -> int:
    config = load_config(args)
    report = run_experiment(config)
    path = write_report(report, args.out)
    print(f"auc = {report.auc}")
    print(f"ap = {report.ap}")
    logger.info(f"Wrote {path}.")
    return 0


def evaluate(args: argparse.Namespace) -> int:
    config = load_config(args)
    reports, summary = run_repeated(config)
    for report in reports:
        write_report(report, args.out)
    path = write_table([summary], args.out, f"{config.experiment}_summary")
    for key, value in summary.items():
        print(f"{key} = {value}")
    logger.info(f"Wrote {len(reports)} reports and {path}.")
    return 0


def attack(args: argparse.Namespace) -> int:
    config = load_config(args)
    report = run_experiment(config, attack=True)
    path = write_report(report, args.out)
    for key, value in {**report.metrics, **report.attack}.items():
        print(f"{key} = {value}")
    logger.info(f"Wrote {path}.")
    return 0


def gradcheck(args: argparse.Namespace) -> int:
    config = load_config(args)
    checks = gradient_suite(max_coords=args.max_coords, seed=config.seed)
    print(format_checks(checks))
    return 0 if all(check.passed for check in checks) else 1


def _fractions(args: argparse.Namespace) -> Sequence[float]:
    if args.fractions is None:
        return [0.2, 0.4, 0.6, 0.8, 1.0] if args.kind == "behavior" else [0.25, 0.5, 1.0]
    return args.fractions


def ablate(args: argparse.Namespace) -> int:
    config = load_config(args)
    if args.kind == "platforms":
        counts = args.counts
        if counts is None:
            order = args.order or config.platforms or platform_names(config)
            counts = list(range(1, len(order) + 1))
        result = run_ablation_platforms(config, counts, order=args.order)
        plot = plot_platform_ablation
    elif args.kind == "noise":
        result = run_ablation_noise(config, args.ldp_scales, args.dp_scales)
        plot = plot_noise_tradeoff
    elif args.kind == "variants":
        result = run_ablation_variants(config)
        plot = plot_variant_comparison
    elif args.kind == "behavior":
        result = run_ablation_behavior(config, _fractions(args))
        plot = None
    else:
        result = run_ablation_train_fraction(config, _fractions(args))
        plot = None

    for group in result.reports:
        for report in group:
            write_report(report, args.out)
    name = f"{config.experiment}_{result.kind}"
    path = write_table(result.table, args.out, name)
    logger.info(f"Wrote {path}.")
    if args.plot:
        if plot is None:
            logger.warning(f"No plot is available for the {args.kind} ablation.")
        else:
            with non_gui_backend():
                fig, _ = plot(result.table)
                fig.savefig(os.path.splitext(path)[0] + ".png", dpi=150, bbox_inches="tight")
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code is None else e.code
    logging.basicConfig(format="%(levelname)s %(name)s: %(message)s")
    logger.setLevel(logging.DEBUG if args.verbose else logging.INFO)
    try:
        return args.func(args)
    except CONFIG_ERRORS as e:
        logger.error(f"Invalid configuration: {e}")
        return 2
    except Exception as e:
        logger.error(f"{type(e).__name__}: {e}")
        logger.debug("Traceback:", exc_info=True)
        return 1


if __name__ == "__main__":
    sys.exit(main())
