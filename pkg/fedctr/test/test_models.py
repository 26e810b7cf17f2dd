import numpy as np
import pytest
from scipy.special import expit

from fedctr.dataio import AdRecord, BehaviorRecord
from fedctr.diagnostics import diagnostic_config
from fedctr.models import (
    AdModel,
    Aggregator,
    AggregatorKind,
    CtrPredictor,
    ModelConfig,
    ModelConfigError,
    PredictorKind,
    TextEncoder,
    UserModel,
    is_legal_combination,
)
from fedctr.nnkit import ForwardTape, ShapeError, TokenIndexError


@pytest.fixture
def config():
    return diagnostic_config()


@pytest.fixture
def rng():
    return np.random.default_rng(1)


def test_model_config_defaults():
    config = ModelConfig()
    config.validate()
    assert config.embed_dim == 256
    assert config.user_dim == 256
    assert config.predictor is PredictorKind.DOT
    assert config.aggregator is AggregatorKind.ATTENTION
    assert config.to_dict()["predictor"] == "dot"


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(vocab_size=2),
        dict(num_heads=0),
        dict(max_behaviors=1.5),
        dict(dropout=1.0),
        dict(dtype="float16"),
        dict(predictor="linear"),
        dict(aggregator="sum"),
        dict(predictor="dot", aggregator="concat"),
    ],
)
def test_model_config_invalid(kwargs):
    with pytest.raises(ModelConfigError):
        ModelConfig(**kwargs).validate()


def test_legal_combinations():
    illegal = [
        (p, a)
        for p in PredictorKind
        for a in AggregatorKind
        if not is_legal_combination(p, a)
    ]
    assert illegal == [(PredictorKind.DOT, AggregatorKind.CONCAT)]
    assert is_legal_combination("DENSE", "concat")
    config = ModelConfig(num_platforms=3, predictor="fm", aggregator="concat")
    config.validate()
    assert config.user_dim == 3 * config.embed_dim


def test_text_encoder(config, rng):
    encoder = TextEncoder("encoder", config, rng)
    out = encoder.forward([4, 5, 6])
    assert out.shape == (config.embed_dim,)
    assert np.all(np.isfinite(out))

    # Only the first max_tokens tokens are used.
    long = list(range(2, 2 + config.max_tokens))
    assert np.array_equal(encoder.forward(long), encoder.forward(long + [30, 31]))
    shifted = [30, 31] + long
    assert np.array_equal(
        encoder.forward(shifted), encoder.forward(shifted[: config.max_tokens])
    )
    assert not np.allclose(encoder.forward(shifted), encoder.forward(long))

    with pytest.raises(ShapeError):
        encoder.forward([])
    with pytest.raises(TokenIndexError):
        encoder.forward([config.vocab_size])


def test_user_model_history(config, rng):
    model = UserModel(config, rng)
    records = [
        BehaviorRecord(1, 7, t, tuple(range(2 + t, 5 + t))) for t in range(6)
    ]
    history = model.prepare_history(records + [BehaviorRecord(1, 7, 9, ())])
    assert len(history) == config.max_behaviors
    assert history[-1] == list(records[-1].tokens)

    out = model.forward(records)
    assert out.shape == (config.embed_dim,)
    assert np.array_equal(out, model.forward(records[-config.max_behaviors :]))
    assert np.array_equal(model.forward(records), model.forward_batch([records])[0])
    assert np.array_equal(
        model.encode_behavior(records[0]), model.forward([records[0]])
    )


def test_user_model_cold_start(config, rng):
    model = UserModel(config, rng)
    assert np.array_equal(model.forward([]), model.cold_start["value"])
    assert np.array_equal(model.forward([()]), model.cold_start["value"])
    assert model.forward_batch([]).shape == (0, config.embed_dim)

    tape = ForwardTape()
    out = model.forward_batch([[], [[3, 4]]], tape)
    assert out.shape == (2, config.embed_dim)
    grad = np.ones((2, config.embed_dim))
    model.backward_batch(tape, grad)
    assert np.array_equal(model.cold_start.grads["value"], grad[0])
    with pytest.raises(ShapeError):
        model.backward_batch(ForwardTape(), np.ones(config.embed_dim))


def test_ad_model(config, rng):
    model = AdModel(config, rng)
    ad = AdRecord(2, (3, 4, 5), (6, 7))
    assert model.forward(ad).shape == (config.embed_dim,)
    assert model.ad_index(2) == 2
    assert model.ad_index(config.num_ads) == model.oov_index
    assert model.ad_index(-1) == model.oov_index

    # Unknown ids share the out-of-vocabulary row.
    first = model.forward(AdRecord(config.num_ads + 1, (3,), ()))
    second = model.forward(AdRecord(config.num_ads + 9, (3,), ()))
    assert np.array_equal(first, second)

    ads = [ad, AdRecord(0, (), ()), AdRecord(1, (), (8, 9))]
    tape = ForwardTape()
    out = model.forward_batch(ads, tape)
    assert out.shape == (3, config.embed_dim)
    model.backward_batch(tape, np.ones_like(out))
    assert model.id_embedding.grads["table"][model.oov_index].sum() == 0
    assert np.abs(model.id_embedding.grads["table"][:3]).sum() > 0


@pytest.mark.parametrize("kind", list(AggregatorKind))
def test_aggregator(kind, rng):
    config = diagnostic_config(aggregator=kind, predictor="dense")
    aggregator = Aggregator(config, rng)
    num_platforms, dim = config.num_platforms, config.embed_dim
    local = rng.standard_normal((4, num_platforms, dim))
    out = aggregator.aggregate_batch(local)
    assert out.shape == (4, config.user_dim)
    assert aggregator.output_dim == config.user_dim
    assert aggregator.layers == ([aggregator.query] if kind is AggregatorKind.ATTENTION else [])

    if kind is AggregatorKind.AVERAGE:
        assert np.allclose(out, local.mean(axis=1))
    elif kind is AggregatorKind.MAX:
        assert np.allclose(out, local.max(axis=1))
    elif kind is AggregatorKind.CONCAT:
        assert np.array_equal(out, local.reshape(4, -1))
    else:
        assert np.all(out <= local.max(axis=1) + 1e-12)
        assert np.all(out >= local.min(axis=1) - 1e-12)

    assert np.allclose(aggregator.aggregate(list(local[0])), out[0])
    with pytest.raises(ValueError):
        aggregator.aggregate_batch(local, responders=[False] * num_platforms)
    with pytest.raises(ShapeError):
        aggregator.aggregate_batch(local[:, :1])


@pytest.mark.parametrize("kind", list(AggregatorKind))
def test_aggregator_missing_platform(kind, rng):
    config = diagnostic_config(aggregator=kind, predictor="dense")
    aggregator = Aggregator(config, rng)
    local = rng.standard_normal((3, config.num_platforms, config.embed_dim))
    responders = [True, False, True]
    tape = ForwardTape()
    out = aggregator.aggregate_batch(local, tape, responders)

    changed = local.copy()
    changed[:, 1] = 100.0
    assert np.array_equal(out, aggregator.aggregate_batch(changed, None, responders))
    if kind is AggregatorKind.AVERAGE:
        assert np.allclose(out, local[:, [0, 2]].mean(axis=1))

    grad_local = aggregator.backward_batch(tape, np.ones_like(out))
    assert grad_local.shape == local.shape
    assert not grad_local[:, 1].any()


def test_attention_aggregator_weights(rng):
    config = diagnostic_config(aggregator="attention")
    aggregator = Aggregator(config, rng)
    local = rng.standard_normal((2, config.num_platforms, config.embed_dim))
    tape = ForwardTape()
    out = aggregator.aggregate_batch(local, tape)
    (weights,) = tape.attention_weights("aggregate")
    assert np.allclose(weights.sum(axis=1), 1)
    assert np.allclose(out, np.einsum("bk,bkd->bd", weights, local))


@pytest.mark.parametrize("kind", list(PredictorKind))
def test_predictor(kind, rng):
    config = diagnostic_config(predictor=kind)
    predictor = CtrPredictor(config, rng)
    u = rng.standard_normal((5, config.user_dim))
    d = rng.standard_normal((5, config.embed_dim))
    y_hat = predictor.predict_batch(u, d)
    assert y_hat.shape == (5,)
    assert np.all((y_hat > 0) & (y_hat < 1))
    assert predictor.predict(u[0], d[0]) == pytest.approx(y_hat[0])
    if kind is PredictorKind.DOT:
        assert predictor.layers == []
        assert np.allclose(y_hat, expit(np.sum(u * d, axis=1)))
    with pytest.raises(ShapeError):
        predictor.predict_batch(u[:, :-1], d)
    with pytest.raises(ShapeError):
        predictor.predict_batch(u, d[:4])


def test_fm_predictor_starts_linear_free(rng):
    config = diagnostic_config(predictor="fm")
    predictor = CtrPredictor(config, rng)
    assert not predictor.layer["linear"].any()
    assert not predictor.layer["bias"].any()
    x = rng.standard_normal((1, 2 * config.embed_dim))
    u, d = x[:, : config.embed_dim], x[:, config.embed_dim :]
    v = predictor.layer["factors"]
    pairwise = sum(
        (v[i] @ v[j]) * x[0, i] * x[0, j]
        for i in range(x.shape[1])
        for j in range(i + 1, x.shape[1])
    )
    assert predictor.predict(u[0], d[0]) == pytest.approx(expit(pairwise))


def test_same_seed_same_models(config):
    first = UserModel(config, np.random.default_rng(5))
    second = UserModel(config, np.random.default_rng(5))
    assert first.layers == second.layers
    third = UserModel(config, np.random.default_rng(6))
    assert first.layers != third.layers
