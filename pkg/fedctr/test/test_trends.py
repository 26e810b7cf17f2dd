from dataclasses import replace

import numpy as np
import pytest

from fedctr.evaluation import (
    ExperimentConfig,
    prepare_data,
    run_ablation_noise,
    run_ablation_platforms,
    run_ablation_variants,
    run_experiment,
)
from fedctr.evaluation.experiments import build_federation, load_data

TOLERANCE = 0.02


@pytest.fixture(scope="module")
def planted_config():
    return ExperimentConfig(
        experiment="planted",
        synthetic_users=300,
        synthetic_topics=2,
        synthetic_vocab=120,
        synthetic_ads=30,
        synthetic_behaviors=6.0,
        synthetic_impressions=8,
        synthetic_beta=6.0,
        word_dim=8,
        num_heads=2,
        head_dim=4,
        pooling_dim=8,
        id_dim=4,
        max_tokens=6,
        max_behaviors=6,
        dropout=0.0,
        lambda_ldp=0.0,
        lambda_dp=0.0,
        epochs=3,
        batch_size=20,
        lr=1e-2,
        attack_instances=200,
        repeats=1,
    )


@pytest.fixture(scope="module")
def trend_config(planted_config):
    return replace(
        planted_config,
        experiment="trend",
        synthetic_users=2000,
        synthetic_topics=6,
        synthetic_vocab=240,
        synthetic_ads=60,
        synthetic_behaviors=8.0,
        word_dim=16,
        head_dim=8,
        pooling_dim=16,
        id_dim=8,
        max_tokens=8,
        max_behaviors=10,
        epochs=3,
        batch_size=50,
        lr=5e-3,
        attack_instances=1000,
        repeats=5,
        n_jobs=-1,
    )


def test_loss_decreases(planted_config):
    config = replace(planted_config, synthetic_users=40, synthetic_impressions=5)
    dataset = load_data(config)
    assert len(dataset.impressions) == 200
    federation = build_federation(config, dataset)
    history = federation.train_epochs(dataset.impressions, 5)
    losses = history.losses
    assert len(losses) == 5
    assert np.all(np.isfinite(losses))
    assert losses[-1] < losses[0]
    assert min(losses[1:]) < losses[0]


def test_validation_auc_margin(planted_config):
    config = replace(planted_config, val_fraction=0.3)
    data = prepare_data(config)
    federation = build_federation(config, data.dataset)
    history = federation.train_epochs(data.train, config.epochs, val=data.val)
    assert history.best is not None
    assert history.best.val_auc >= 0.55
    assert max(record.val_auc for record in history.epochs) == history.best.val_auc


def test_null_labels():
    # With beta = 0 the labels carry no signal, so the test AUC is about one half.
    config = ExperimentConfig(
        experiment="null",
        synthetic_users=1000,
        synthetic_topics=4,
        synthetic_vocab=100,
        synthetic_ads=20,
        synthetic_behaviors=3.0,
        synthetic_impressions=10,
        synthetic_beta=0.0,
        word_dim=8,
        num_heads=2,
        head_dim=4,
        pooling_dim=8,
        id_dim=4,
        max_tokens=6,
        max_behaviors=4,
        epochs=1,
        batch_size=100,
        lr=1e-2,
        train_fraction=0.2,
        test_window=190,
        seed=3,
    )
    data = prepare_data(config)
    assert len(data.test) > 8000
    report = run_experiment(config)
    assert report.metrics["auc"] == pytest.approx(0.5, abs=TOLERANCE)


@pytest.mark.slow
def test_both_platforms_beat_each_single_platform(trend_config):
    config = replace(trend_config, synthetic_informativeness=[0.9, 0.9])
    both = {}
    single = {}
    for order in ([1, 2], [2, 1]):
        result = run_ablation_platforms(config, [1, 2], order=order)
        single[order[0]] = result.table[0]["auc_mean"]
        both[tuple(order)] = result.table[1]["auc_mean"]
        assert result.table[1]["repeats"] == 5
    for platform, auc in single.items():
        for combined in both.values():
            assert combined >= auc + TOLERANCE, (platform, single, both)


@pytest.mark.slow
def test_noise_tradeoff(trend_config):
    scales = [0.0, 0.01, 0.1, 1.0]
    result = run_ablation_noise(trend_config, scales, [0.0])
    rows = result.table
    assert [row["lambda_ldp"] for row in rows] == scales
    for key in ("auc_mean", "attack_local_mean", "attack_aggregated_mean"):
        values = [row[key] for row in rows]
        for previous, current in zip(values, values[1:]):
            assert current <= previous + TOLERANCE, (key, values)
    for row in rows:
        assert row["attack_aggregated_mean"] <= row["attack_local_mean"] + TOLERANCE
    attacks = [row["attack_local_mean"] for row in rows]
    assert attacks[0] == max(attacks)
    assert attacks[0] > attacks[-1]


@pytest.mark.slow
def test_attention_beats_average(trend_config):
    config = replace(trend_config, synthetic_informativeness=[0.9, 0.3])
    result = run_ablation_variants(
        config, predictors=["dot"], aggregators=["attention", "average"]
    )
    rows = {row["aggregator"]: row for row in result.table}
    assert all(row["finite_losses"] for row in result.table)
    assert rows["attention"]["auc_mean"] >= rows["average"]["auc_mean"] + 0.01
