import itertools
import os
import tempfile
from dataclasses import replace

import matplotlib.pyplot as plt
import numpy as np
import pytest

from fedctr.cli import CONFIG_ERRORS
from fedctr.evaluation import (
    ConfigError,
    EvalReport,
    ExperimentConfig,
    MetricError,
    auc,
    auc_pairwise,
    average_precision,
    non_gui_backend,
    plot_noise_tradeoff,
    plot_platform_ablation,
    plot_variant_comparison,
    prepare_data,
    read_report,
    run_ablation_behavior,
    run_ablation_noise,
    run_ablation_platforms,
    run_ablation_train_fraction,
    run_ablation_variants,
    run_experiment,
    run_repeated,
    variant_grid,
    write_report,
    write_table,
)
from fedctr.evaluation.experiments import repeat_configs, summarize
from fedctr.evaluation.options import format_value, parse_value


@pytest.fixture(scope="module")
def tempdir():
    tmp = tempfile.TemporaryDirectory()
    yield tmp.__enter__()
    tmp.cleanup()


@pytest.fixture(scope="module")
def tiny_config():
    return ExperimentConfig(
        experiment="tiny",
        synthetic_users=30,
        synthetic_topics=4,
        synthetic_vocab=60,
        synthetic_ads=10,
        synthetic_behaviors=4.0,
        synthetic_impressions=4,
        word_dim=8,
        num_heads=2,
        head_dim=4,
        pooling_dim=6,
        id_dim=4,
        max_tokens=6,
        max_behaviors=5,
        epochs=1,
        batch_size=10,
        lr=1e-2,
        attack_instances=20,
        repeats=2,
    )


def brute_force_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return total / (len(pos) * len(neg))


def brute_force_average_precision(scores, labels):
    ranked = sorted(range(len(scores)), key=lambda i: -scores[i])
    precisions = []
    hits = 0
    for rank, i in enumerate(ranked, start=1):
        if labels[i] == 1:
            hits += 1
            precisions.append(hits / rank)
    return sum(precisions) / len(precisions)


def test_metrics_agree_with_direct_summation():
    rng = np.random.default_rng(0)
    for instance in range(1000):
        size = int(rng.integers(2, 40))
        scores = rng.random(size)
        if instance % 3 == 0:
            # Heavy ties.
            scores = rng.integers(3, size=size) / 2
        elif instance % 3 == 1:
            scores = np.round(scores, 1)
        labels = rng.integers(2, size=size)
        labels[rng.choice(size, 2, replace=False)] = [0, 1]
        expected_auc = brute_force_auc(scores.tolist(), labels.tolist())
        assert abs(auc(scores, labels) - expected_auc) <= 1e-12
        assert abs(auc_pairwise(scores, labels) - expected_auc) <= 1e-12
        expected_ap = brute_force_average_precision(scores.tolist(), labels.tolist())
        assert abs(average_precision(scores, labels) - expected_ap) <= 1e-12


def test_auc_examples():
    assert auc([0.9, 0.8, 0.1], [1, 1, 0]) == 1.0
    assert auc([0.1, 0.8, 0.9], [1, 1, 0]) == 0.0
    assert auc([0.5, 0.5], [1, 0]) == 0.5


def test_average_precision():
    assert average_precision([0.9, 0.8, 0.7], [1, 0, 1]) == pytest.approx((1 + 2 / 3) / 2)
    assert average_precision([0.1, 0.2], [1, 1]) == 1.0
    # Ties keep their input order.
    assert average_precision([0.5, 0.5], [0, 1]) == pytest.approx(0.5)
    assert average_precision([0.5, 0.5], [1, 0]) == 1.0


@pytest.mark.parametrize(
    "scores, labels",
    [
        ([0.1, 0.2], [1, 1]),
        ([0.1, 0.2], [1]),
        ([0.1, 0.2], [1, 2]),
        ([np.nan, 0.2], [1, 0]),
    ],
)
def test_metric_errors(scores, labels):
    with pytest.raises(MetricError):
        auc(scores, labels)
    with pytest.raises(MetricError):
        auc_pairwise(scores, labels)


def test_average_precision_without_positives():
    with pytest.raises(MetricError):
        average_precision([0.1, 0.2], [0, 0])


def test_config_defaults():
    config = ExperimentConfig()
    config.validate()
    assert config.epochs == 3
    assert config.lambda_ldp == 0.01
    assert config.lambda_dp == 0.005
    assert config.federation_options().batch_size == 30
    assert config.synthetic_spec().seed == config.data_seed


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(train_fraction=0.0),
        dict(val_fraction=1.0),
        dict(epochs=-1),
        dict(repeats=0),
        dict(platforms=[1, 1]),
        dict(platforms=[]),
        dict(lambda_ldp=-1.0),
        dict(optimizer="rmsprop"),
        dict(predictor="dot", aggregator="concat"),
        dict(n_jobs=0),
    ],
)
def test_config_invalid(kwargs):
    with pytest.raises(CONFIG_ERRORS):
        ExperimentConfig(**kwargs).validate()


def test_config_lines():
    lines = [
        "# two platforms, no noise",
        "",
        "epochs = 5",
        "lambda_ldp = 0",
        "platforms = 2,1",
        "clip_norm = none",
        "progress = true",
        "synthetic_informativeness = 0.9, 0.5",
    ]
    config = ExperimentConfig.from_lines(lines)
    assert config.epochs == 5
    assert config.lambda_ldp == 0.0
    assert config.platforms == [2, 1]
    assert config.clip_norm is None
    assert config.progress is True
    assert config.synthetic_informativeness == [0.9, 0.5]
    assert ExperimentConfig.from_lines(config.to_lines()) == config

    with pytest.raises(ConfigError):
        ExperimentConfig.from_lines(["epochs 5"])
    with pytest.raises(ConfigError):
        ExperimentConfig.from_lines(["colour = blue"])
    with pytest.raises(ConfigError):
        ExperimentConfig.from_lines(["epochs = many"])
    with pytest.raises(ConfigError):
        ExperimentConfig.from_file("/nonexistent/fedctr.cfg")


def test_config_update():
    config = ExperimentConfig().update({"lr": "0.05", "seed": 3, "data": "some/dir"})
    assert config.lr == 0.05
    assert config.seed == 3
    assert config.data == "some/dir"
    with pytest.raises(ConfigError):
        config.update({"unknown": 1})


def test_format_and_parse_values():
    assert format_value(None) == "none"
    assert format_value(False) == "false"
    assert format_value([1, 2]) == "1,2"
    assert format_value(0.1) == "0.1"
    assert parse_value(bool, "yes") is True
    with pytest.raises(ConfigError):
        parse_value(bool, "maybe")


def test_summarize():
    mean, std = summarize([0.6, 0.7, 0.8])
    assert mean == pytest.approx(0.7)
    assert std == pytest.approx(0.1)
    assert summarize([0.5]) == (0.5, 0.0)
    assert summarize([0.5, None]) == (0.5, 0.0)
    assert all(np.isnan(summarize([None])))


def test_repeat_configs():
    configs = repeat_configs(ExperimentConfig(seed=4, data_seed=10, repeats=3))
    assert [c.seed for c in configs] == [4, 5, 6]
    assert [c.data_seed for c in configs] == [10, 11, 12]


def test_variant_grid():
    grid = variant_grid()
    assert len(grid) == 16
    assert [(p, a) for p, a, legal in grid if not legal] == [("dot", "concat")]


def test_prepare_data(tiny_config):
    data = prepare_data(tiny_config)
    impressions = data.dataset.impressions
    assert len(data.train) + len(data.val) + len(data.test) == len(impressions)
    timestamps = [s.timestamp for s in impressions]
    cutoff = max(timestamps) - round(0.2 * (max(timestamps) - min(timestamps)))
    assert all(s.timestamp > cutoff for s in data.test)
    assert all(s.timestamp <= cutoff for s in data.train + data.val)

    swapped = prepare_data(replace(tiny_config, platforms=[2, 1]))
    assert swapped.dataset.platform_names == ["browsing", "search"]
    with pytest.raises(ConfigError):
        prepare_data(replace(tiny_config, platforms=[3]))

    fewer = prepare_data(replace(tiny_config, train_fraction=0.5))
    assert len(fewer.train) == round(0.5 * len(data.train))


def test_run_experiment(tiny_config, tempdir):
    report = run_experiment(tiny_config, attack=True)
    assert report.experiment == "tiny"
    assert 0 <= report.auc <= 1
    assert 0 <= report.ap <= 1
    assert len(report.history) == 1
    assert set(report.attack) == {"local_1", "local_2", "local", "aggregated"}
    assert all(0 <= value <= 1 for value in report.attack.values())
    assert "fedctr" in report.versions

    path = write_report(report, tempdir)
    assert os.path.basename(path) == "tiny.txt"
    loaded = read_report(path)
    assert loaded.config == report.config
    assert loaded.metrics == report.metrics
    assert loaded.attack == report.attack
    assert loaded.history[0]["epoch"] == "1"
    assert loaded.versions == report.versions

    # Reports are never overwritten.
    again = write_report(report, tempdir)
    assert os.path.basename(again) == "tiny-1.txt"


def test_run_experiment_is_deterministic(tiny_config):
    config = replace(tiny_config, epochs=0)
    first = run_experiment(config)
    second = run_experiment(config)
    assert first.metrics == second.metrics
    assert first.history == []


def test_run_repeated(tiny_config):
    config = replace(tiny_config, epochs=0)
    reports, row = run_repeated(config)
    assert len(reports) == 2
    assert row["repeats"] == 2
    assert row["experiment"] == "tiny"
    mean, std = summarize([report.auc for report in reports])
    assert row["auc_mean"] == pytest.approx(mean)
    assert row["auc_std"] == pytest.approx(std)
    assert reports[0].config.data_seed + 1 == reports[1].config.data_seed


def test_platform_ablation(tiny_config, tempdir):
    config = replace(tiny_config, epochs=0, repeats=1)
    result = run_ablation_platforms(config, [1, 2], order=[2, 1])
    assert result.kind == "platforms"
    assert [row["platforms"] for row in result.table] == [1, 2]
    assert [row["names"] for row in result.table] == ["browsing", "browsing+search"]
    assert [len(group) for group in result.reports] == [1, 1]

    path = write_table(result.table, tempdir, "platforms")
    with open(path) as f:
        header = f.readline().strip().split(",")
    assert header[:4] == ["platforms", "names", "auc_mean", "auc_std"]
    with pytest.raises(ValueError):
        write_table([], tempdir, "empty")

    with pytest.raises(ConfigError):
        run_ablation_platforms(config, [3])
    with pytest.raises(ConfigError):
        run_ablation_platforms(config, [1], order=[1, 1])

    with non_gui_backend():
        fig, ax = plot_platform_ablation(result.table)
        assert len(ax.get_xticklabels()) == 2
        plt.close(fig)


def test_noise_ablation(tiny_config):
    config = replace(tiny_config, epochs=0, repeats=1)
    result = run_ablation_noise(config, [0.0, 0.1], [0.0])
    assert result.kind == "noise"
    assert [(row["lambda_ldp"], row["lambda_dp"]) for row in result.table] == [
        (0.0, 0.0),
        (0.1, 0.0),
    ]
    for row in result.table:
        assert 0 <= row["attack_local_mean"] <= 1
        assert 0 <= row["attack_aggregated_mean"] <= 1
    with pytest.raises(ConfigError):
        run_ablation_noise(config, [-0.1], [0.0])


def test_variant_ablation(tiny_config):
    config = replace(tiny_config, repeats=1)
    result = run_ablation_variants(
        config, predictors=["dot", "dense"], aggregators=["average", "concat"]
    )
    assert [(row["predictor"], row["aggregator"]) for row in result.table] == [
        ("dot", "average"),
        ("dense", "average"),
        ("dense", "concat"),
    ]
    assert all(row["finite_losses"] for row in result.table)


def test_fraction_ablations(tiny_config):
    config = replace(tiny_config, epochs=0, repeats=1)
    behavior = run_ablation_behavior(config, [0.5, 1.0])
    assert [row["behavior_fraction"] for row in behavior.table] == [0.5, 1.0]
    train = run_ablation_train_fraction(config, [0.25, 1.0])
    assert [row["train_fraction"] for row in train.table] == [0.25, 1.0]
    with pytest.raises(CONFIG_ERRORS):
        run_ablation_behavior(config, [0.0])


def test_plots():
    noise_rows = [
        dict(
            lambda_ldp=ldp,
            lambda_dp=dp,
            auc_mean=0.6,
            auc_std=0.01,
            ap_mean=0.6,
            ap_std=0.01,
            attack_local_mean=0.7 - ldp,
            attack_local_std=0.02,
        )
        for ldp, dp in itertools.product([0.0, 0.1, 0.2], [0.0, 0.1])
    ]
    variant_rows = [
        dict(predictor=p, aggregator=a, auc_mean=0.6, auc_std=0.01)
        for p, a, legal in variant_grid()
        if legal
    ]
    with non_gui_backend():
        fig, (ctr_ax, attack_ax) = plot_noise_tradeoff(noise_rows)
        assert len(ctr_ax.get_xticklabels()) == 3
        plt.close(fig)
        fig, ax = plot_variant_comparison(variant_rows)
        assert len(ax.get_xticklabels()) == 4
        plt.close(fig)


def test_eval_report_text(tiny_config):
    report = EvalReport("x", tiny_config, {"auc": None, "ap": 0.25})
    text = report.to_text()
    assert "auc = none" in text
    assert "[attack]" not in text
    assert "[config]" in text
