import numpy as np
import pytest

from fedctr import nnkit
from fedctr.nnkit import (
    ForwardTape,
    GradCheckError,
    LayerParams,
    ShapeError,
    TapeError,
    TokenIndexError,
)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def test_layer_params_accumulate(rng):
    layer = nnkit.dense_layer("dense", 3, 2, rng)
    assert layer.num_parameters == 3 * 2 + 2
    layer.accumulate("bias", np.ones(2))
    layer.accumulate("bias", np.ones(2))
    assert np.array_equal(layer.grads["bias"], [2, 2])
    with pytest.raises(ShapeError):
        layer.accumulate("bias", np.ones(3))
    layer.zero_grads()
    assert not layer.grads["bias"].any()

    other = layer.copy()
    assert other == layer
    other.params["bias"] += 1
    assert other != layer
    layer.load_state(other)
    assert other == layer


def test_embed_lookup(rng):
    table = nnkit.embedding_layer("words", 5, 3, rng)
    out = nnkit.embed_lookup(table, [4, 0, 4])
    assert out.shape == (3, 3)
    assert np.array_equal(out[0], table["table"][4])
    assert np.array_equal(out[0], out[2])

    with pytest.raises(TokenIndexError):
        nnkit.embed_lookup(table, [1, 5])
    with pytest.raises(TokenIndexError):
        nnkit.embed_lookup(table, [-1])

    tape = ForwardTape()
    nnkit.embed_lookup(table, [4, 0, 4], tape)
    cursor = tape.replay()
    nnkit.embed_lookup_backward(table, cursor, np.ones((3, 3)))
    cursor.finish()
    assert np.array_equal(table.grads["table"][4], [2, 2, 2])
    assert np.array_equal(table.grads["table"][0], [1, 1, 1])
    assert not table.grads["table"][1:4].any()


def test_position_embeddings_too_long(rng):
    positions = nnkit.position_layer("positions", 4, 3, rng)
    x = np.zeros((4, 3))
    assert np.array_equal(nnkit.add_position_embeddings(x, positions), positions["table"])
    with pytest.raises(ShapeError):
        nnkit.add_position_embeddings(np.zeros((5, 3)), positions)
    with pytest.raises(ShapeError):
        nnkit.add_position_embeddings(np.zeros((2, 4)), positions)


def test_self_attention(rng):
    layer = nnkit.self_attention_layer("attention", 6, 2, 4, rng)
    x = rng.standard_normal((5, 6))
    tape = ForwardTape()
    out = nnkit.multi_head_self_attention(x, layer, tape)
    assert out.shape == (5, 8)
    (weights,) = tape.attention_weights("self_attention")
    assert weights.shape == (2, 5, 5)
    assert np.allclose(weights.sum(axis=-1), 1)
    assert np.all(weights > 0)

    with pytest.raises(ShapeError):
        nnkit.multi_head_self_attention(np.zeros((0, 6)), layer)
    with pytest.raises(ShapeError):
        nnkit.multi_head_self_attention(np.zeros((3, 5)), layer)


def test_attentive_pooling(rng):
    layer = nnkit.attentive_pooling_layer("pooling", 4, 3, rng)
    x = rng.standard_normal((6, 4))
    tape = ForwardTape()
    out = nnkit.attentive_pooling(x, layer, tape)
    (weights,) = tape.attention_weights()
    assert out.shape == (4,)
    assert np.isclose(weights.sum(), 1)
    assert np.allclose(out, weights @ x)

    # A single position is returned as is.
    assert np.allclose(nnkit.attentive_pooling(x[:1], layer), x[0])
    with pytest.raises(ShapeError):
        nnkit.attentive_pooling(np.zeros((0, 4)), layer)


@pytest.mark.parametrize("activation", ["identity", "relu", "tanh", "sigmoid"])
def test_dense(rng, activation):
    layer = nnkit.dense_layer("dense", 4, 2, rng, activation=activation)
    x = rng.standard_normal((3, 4))
    out = nnkit.dense(x, layer)
    pre = x @ layer["weight"] + layer["bias"]
    expected = {
        "identity": pre,
        "relu": np.maximum(pre, 0),
        "tanh": np.tanh(pre),
        "sigmoid": 1 / (1 + np.exp(-pre)),
    }[activation]
    assert np.allclose(out, expected)


@pytest.mark.parametrize("rate", [0.0, 0.3])
def test_dropout(rng, rate):
    x = np.ones((200, 50))
    assert nnkit.dropout(x, rate, training=False) is x

    tape = ForwardTape(training=True, seed=1)
    out = nnkit.dropout(x, rate, training=True, tape=tape)
    if rate == 0:
        assert out is x
    else:
        kept = out != 0
        assert np.allclose(out[kept], 1 / (1 - rate))
        assert abs(kept.mean() - (1 - rate)) < 0.02
    cursor = tape.replay()
    grad = nnkit.dropout_backward(cursor, np.ones_like(x))
    cursor.finish()
    assert np.array_equal(grad, out)

    with pytest.raises(ValueError):
        nnkit.dropout(x, 1.0, training=True)


def test_tape_replay_order(rng):
    table = nnkit.embedding_layer("words", 5, 3, rng)
    positions = nnkit.position_layer("positions", 4, 3, rng)
    tape = ForwardTape()
    x = nnkit.embed_lookup(table, [1, 2], tape)
    nnkit.add_position_embeddings(x, positions, tape)
    assert len(tape) == 2

    cursor = tape.replay()
    assert tape.frozen
    with pytest.raises(TapeError):
        tape.push("embed_lookup", table)
    with pytest.raises(TapeError):
        cursor.pop("embed_lookup", table)
    with pytest.raises(TapeError):
        cursor.pop("add_position", table)
    assert cursor.peek().op == "add_position"
    cursor.pop("add_position", positions)
    with pytest.raises(TapeError):
        cursor.finish()
    cursor.pop("embed_lookup", table)
    cursor.finish()
    with pytest.raises(TapeError):
        cursor.pop("embed_lookup")


def test_check_gradients_quadratic():
    x = LayerParams.parameter("x", np.array([1.0, -2.0, 3.0]))

    def fn(compute_grad):
        value = float(np.sum(x["value"] ** 2))
        if compute_grad:
            x.accumulate("value", 2 * x["value"])
        return value

    errors = nnkit.check_gradients(fn, [x])
    assert list(errors) == ["x.value"]
    assert errors["x.value"] < 1e-8

    def wrong(compute_grad):
        value = float(np.sum(x["value"] ** 2))
        if compute_grad:
            x.accumulate("value", 3 * x["value"])
        return value

    assert nnkit.grad_check(wrong, [x]) > 0.1


def test_check_gradients_nondeterministic():
    x = LayerParams.parameter("x", np.zeros(2))
    rng = np.random.default_rng(0)

    def fn(compute_grad):
        return float(rng.random())

    with pytest.raises(GradCheckError):
        nnkit.check_gradients(fn, [x])
    with pytest.raises(ValueError):
        nnkit.check_gradients(fn, [x], epsilon=0)


def test_relative_error():
    assert nnkit.gradcheck.relative_error(1.0, 1.0) == 0
    assert nnkit.gradcheck.relative_error(1.0, -1.0) == 1
    assert nnkit.gradcheck.relative_error(0.0, 1e-9, floor=1e-6) == pytest.approx(1e-3)
