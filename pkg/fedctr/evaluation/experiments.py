"""Experiment runners: single runs, repeated runs, and ablations.

Every run owns its dataset copy and federation, so independent runs of an
ablation can execute in parallel with joblib. Results do not depend on
``n_jobs``.
"""

import itertools
import logging
import time
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed

from ..about import version_dict
from ..dataio import (
    Dataset,
    TrainingSample,
    apply_pretrained_embeddings,
    chronological_split,
    generate_synthetic,
    load_dataset,
    subsample,
)
from ..federation import Federation, InProcessTransport
from ..models import AggregatorKind, PredictorKind, is_legal_combination
from ..nnkit import LayerKind
from ..privacy import build_attack_instances, run_attack
from .options import ConfigError, ExperimentConfig
from .report import EvalReport

logger = logging.getLogger(__name__)


@dataclass
class PreparedData:
    """A dataset and its train, validation and test impressions."""

    dataset: Dataset
    train: List[TrainingSample]
    val: List[TrainingSample]
    test: List[TrainingSample]


@dataclass
class AblationResult:
    """The reports of an ablation and its plot-data table.

    Args:
        kind: The ablation, e.g. ``"platforms"``.
        reports: Every report, grouped by table row.
        table: One row per ablation point, with mean and sample standard
            deviation of the metrics over repeats.
    """

    kind: str
    reports: List[List[EvalReport]] = field(default_factory=list)
    table: List[Dict[str, Any]] = field(default_factory=list)


def load_data(config: ExperimentConfig) -> Dataset:
    """The configured dataset: loaded from ``config.data``, or generated."""
    if config.data is not None:
        return load_dataset(config.data)
    return generate_synthetic(config.synthetic_spec())


def apply_behavior_fraction(dataset: Dataset, fraction: float) -> Dataset:
    """Keeps the most recent ``fraction`` of every user's history on every platform."""
    return dataset.with_behavior_fraction(fraction)


def prepare_data(config: ExperimentConfig, dataset: Optional[Dataset] = None) -> PreparedData:
    """Selects platforms, applies the behavior and training fractions, and splits."""
    if dataset is None:
        dataset = load_data(config)
    if config.platforms is not None:
        if max(config.platforms) > dataset.num_platforms or min(config.platforms) < 1:
            raise ConfigError(
                f"platforms {config.platforms} exceed the {dataset.num_platforms}"
                " platforms of the dataset."
            )
        dataset = dataset.select_platforms(config.platforms)
    dataset = apply_behavior_fraction(dataset, config.behavior_fraction)
    test_window = config.test_window
    if test_window is None:
        timestamps = [sample.timestamp for sample in dataset.impressions]
        test_window = int(round(0.2 * (max(timestamps) - min(timestamps))))
    train, val, test = chronological_split(
        dataset.impressions, test_window, config.val_fraction, seed=config.seed
    )
    train = subsample(train, config.train_fraction, seed=config.seed)
    return PreparedData(dataset, train, val, test)


def build_federation(
    config: ExperimentConfig,
    dataset: Dataset,
    transport: Optional[InProcessTransport] = None,
) -> Federation:
    federation = Federation(
        dataset,
        config.model_config(dataset),
        privacy=config.privacy_config(),
        options=config.federation_options(),
        transport=transport,
    )
    if config.pretrained is not None:
        tables = [
            layer
            for layers in federation.parameter_groups().values()
            for layer in layers
            if layer.kind is LayerKind.EMBEDDING and layer.name.endswith("word_embedding")
        ]
        apply_pretrained_embeddings(config.pretrained, dataset.vocab, tables)
    return federation


def attack_federation(
    federation: Federation,
    num_instances: int,
    seed: Optional[int] = None,
) -> Dict[str, float]:
    """Runs the behavior-inference attack on local and aggregated user embeddings.

    The attacked embeddings are those observed on the wire: the perturbed local
    embeddings received by the user server and the perturbed aggregated
    embeddings received by the ad platform.

    Returns:
        ``{"local_<i>": auc, ..., "local": mean, "aggregated": auc}``. The
        aggregated attack is skipped when the aggregated embedding is not
        comparable with behavior encodings (concat aggregator).
    """
    rng = np.random.default_rng(seed)
    platforms = [platform.behaviors for platform in federation.platforms]
    eligible = sorted(
        {user for platform in platforms for user in platform.users()}
    )
    if not eligible:
        raise ValueError("No user has behaviors to attack.")
    users = sorted(
        rng.choice(eligible, size=min(num_instances, len(eligible)), replace=False).tolist()
    )
    size = federation.options.batch_size
    local_parts, aggregated_parts = [], []
    for start in range(0, len(users), size):
        local, aggregated = federation.user_embeddings(users[start : start + size])
        local_parts.append(local)
        aggregated_parts.append(aggregated)
    local = np.concatenate(local_parts)
    aggregated = np.concatenate(aggregated_parts)

    results = {}
    for k, platform in enumerate(federation.platforms):
        targets = {user: local[row, k] for row, user in enumerate(users)}
        instances = build_attack_instances(
            targets, [platform.behaviors], f"local_{k + 1}", num_instances, seed=seed
        )
        if instances:
            results[f"local_{k + 1}"] = run_attack(platform.model.encode_behavior, instances)
    if results:
        results["local"] = float(np.mean(list(results.values())))
    if aggregated.shape[1] == local.shape[2]:
        targets = {user: aggregated[row] for row, user in enumerate(users)}
        instances = build_attack_instances(
            targets, platforms, "aggregated", num_instances, seed=seed
        )
        if instances:
            results["aggregated"] = run_attack(federation.encode_behavior, instances)
    return results


def run_experiment(
    config: ExperimentConfig,
    attack: bool = False,
    transport: Optional[InProcessTransport] = None,
    dataset: Optional[Dataset] = None,
) -> EvalReport:
    """Trains a federation and evaluates it on the test impressions.

    Args:
        config: The run configuration.
        attack: Also run the behavior-inference attack.
        transport: Optional transport, e.g. a recording transport.
        dataset: Optional dataset to use instead of ``config.data``.

    Returns:
        The :class:`EvalReport` of the run.
    """
    config.validate()
    start = time.perf_counter()
    data = prepare_data(config, dataset)
    federation = build_federation(config, data.dataset, transport)
    history = []
    if config.epochs > 0:
        history = federation.train_epochs(
            data.train, config.epochs, val=data.val or None
        ).to_rows()
    auc, ap = federation.evaluate(data.test)
    attack_metrics = {}
    if attack:
        attack_metrics = attack_federation(
            federation, config.attack_instances, seed=config.seed
        )
    report = EvalReport(
        experiment=config.experiment,
        config=replace(config),
        metrics={"auc": auc, "ap": ap},
        attack=attack_metrics,
        history=history,
        wall_clock=time.perf_counter() - start,
        versions=version_dict(),
    )
    logger.info(f"{config.experiment}: test auc={auc}, ap={ap}")
    return report


def summarize(values: Sequence[Optional[float]]) -> Tuple[float, float]:
    """Mean and sample standard deviation, ignoring missing values."""
    values = np.array([v for v in values if v is not None], dtype=float)
    if values.size == 0:
        return float("nan"), float("nan")
    std = float(np.std(values, ddof=1)) if values.size > 1 else 0.0
    return float(np.mean(values)), std


def repeat_configs(config: ExperimentConfig) -> List[ExperimentConfig]:
    """One configuration per repeat, with consecutive run and data seeds."""
    return [
        replace(config, seed=config.seed + r, data_seed=config.data_seed + r)
        for r in range(config.repeats)
    ]


def _run_all(
    configs: Sequence[ExperimentConfig], n_jobs: int, attack: bool = False
) -> List[EvalReport]:
    if n_jobs == 1:
        return [run_experiment(config, attack=attack) for config in configs]
    return Parallel(n_jobs=n_jobs)(
        delayed(run_experiment)(config, attack=attack) for config in configs
    )


def _summary_row(reports: Sequence[EvalReport], **columns) -> Dict[str, Any]:
    row = dict(columns)
    keys = ["auc", "ap"]
    for key in keys:
        row[f"{key}_mean"], row[f"{key}_std"] = summarize([r.metrics.get(key) for r in reports])
    attack_keys = sorted({key for report in reports for key in report.attack})
    for key in attack_keys:
        row[f"attack_{key}_mean"], row[f"attack_{key}_std"] = summarize(
            [report.attack.get(key) for report in reports]
        )
    row["repeats"] = len(reports)
    return row


def run_repeated(
    config: ExperimentConfig, attack: bool = False
) -> Tuple[List[EvalReport], Dict[str, Any]]:
    """Runs ``config.repeats`` independent experiments.

    Returns:
        The reports and a summary row with the mean and sample standard
        deviation of every metric.
    """
    config.validate()
    reports = _run_all(repeat_configs(config), config.n_jobs, attack=attack)
    return reports, _summary_row(reports, experiment=config.experiment)


def _ablation(
    kind: str,
    points: Sequence[Tuple[Dict[str, Any], ExperimentConfig]],
    n_jobs: int,
    attack: bool = False,
) -> AblationResult:
    configs = [cfg for _, point_config in points for cfg in repeat_configs(point_config)]
    reports = _run_all(configs, n_jobs, attack=attack)
    result = AblationResult(kind)
    position = 0
    for columns, point_config in points:
        group = reports[position : position + point_config.repeats]
        position += point_config.repeats
        result.reports.append(group)
        result.table.append(_summary_row(group, **columns))
    return result


def platform_names(config: ExperimentConfig, dataset: Optional[Dataset] = None) -> List[str]:
    if dataset is None:
        if config.data is not None:
            dataset = load_dataset(config.data)
        else:
            return config.synthetic_spec().names()
    return dataset.platform_names


def run_ablation_platforms(
    config: ExperimentConfig,
    counts: Sequence[int],
    order: Optional[Sequence[int]] = None,
) -> AblationResult:
    """Trains with the first ``c`` platforms of ``order`` for every count ``c``.

    Args:
        config: The base configuration.
        counts: The numbers of platforms to use.
        order: The order in which platforms are added. Defaults to
            ``config.platforms`` or ``1, ..., K``.
    """
    config.validate()
    names = platform_names(config)
    num_platforms = len(names)
    if order is None:
        order = config.platforms or list(range(1, num_platforms + 1))
    order = list(order)
    if sorted(set(order)) != sorted(order) or not set(order) <= set(range(1, num_platforms + 1)):
        raise ConfigError(f"Invalid platform order {order}.")
    for count in counts:
        if not 1 <= count <= len(order):
            raise ConfigError(
                f"Platform count {count} must be in [1, {len(order)}]."
            )
    points = []
    for count in counts:
        selected = order[:count]
        columns = {
            "platforms": count,
            "names": "+".join(names[i - 1] for i in selected),
        }
        points.append((columns, replace(config, platforms=selected)))
    return _ablation("platforms", points, config.n_jobs)


def run_ablation_noise(
    config: ExperimentConfig,
    ldp_scales: Sequence[float],
    dp_scales: Sequence[float],
) -> AblationResult:
    """Trains and attacks a federation for every ``(lambda_ldp, lambda_dp)`` pair."""
    config.validate()
    for scale in list(ldp_scales) + list(dp_scales):
        if not scale >= 0:
            raise ConfigError(f"Noise scales must be >= 0 (got {scale}).")
    points = [
        (
            {"lambda_ldp": ldp, "lambda_dp": dp},
            replace(config, lambda_ldp=ldp, lambda_dp=dp),
        )
        for ldp, dp in itertools.product(ldp_scales, dp_scales)
    ]
    return _ablation("noise", points, config.n_jobs, attack=True)


def variant_grid() -> List[Tuple[str, str, bool]]:
    """Every ``(predictor, aggregator, legal)`` combination."""
    return [
        (predictor.value, aggregator.value, is_legal_combination(predictor, aggregator))
        for predictor in PredictorKind
        for aggregator in AggregatorKind
    ]


def run_ablation_variants(
    config: ExperimentConfig,
    predictors: Optional[Sequence[str]] = None,
    aggregators: Optional[Sequence[str]] = None,
) -> AblationResult:
    """Trains every legal predictor and aggregator combination on shared data.

    Illegal combinations are skipped with a warning.
    """
    config.validate()
    predictors = predictors or [kind.value for kind in PredictorKind]
    aggregators = aggregators or [kind.value for kind in AggregatorKind]
    points = []
    for predictor, aggregator in itertools.product(predictors, aggregators):
        if not is_legal_combination(predictor, aggregator):
            logger.warning(
                f"Skipping the illegal combination of the {predictor} predictor"
                f" and the {aggregator} aggregator."
            )
            continue
        points.append(
            (
                {"predictor": predictor, "aggregator": aggregator},
                replace(config, predictor=predictor, aggregator=aggregator),
            )
        )
    result = _ablation("variants", points, config.n_jobs)
    for row, group in zip(result.table, result.reports):
        losses = [record["loss"] for report in group for record in report.history]
        row["finite_losses"] = bool(np.all(np.isfinite(losses)))
    return result


def run_ablation_behavior(
    config: ExperimentConfig, fractions: Sequence[float]
) -> AblationResult:
    """Trains with the most recent ``fraction`` of every user's behaviors."""
    config.validate()
    points = [
        ({"behavior_fraction": f}, replace(config, behavior_fraction=f)) for f in fractions
    ]
    for _, point_config in points:
        point_config.validate()
    return _ablation("behavior", points, config.n_jobs)


def run_ablation_train_fraction(
    config: ExperimentConfig, fractions: Sequence[float]
) -> AblationResult:
    """Trains on a seeded random ``fraction`` of the training impressions."""
    config.validate()
    points = [
        ({"train_fraction": f}, replace(config, train_fraction=f)) for f in fractions
    ]
    for _, point_config in points:
        point_config.validate()
    return _ablation("train_fraction", points, config.n_jobs)
