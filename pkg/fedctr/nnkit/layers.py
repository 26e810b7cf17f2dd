"""Forward and backward passes for the layers the FedCTR models are built from.

Every forward function takes an optional :class:`ForwardTape`. When a tape is given,
the activations needed for the backward pass are recorded on it; the matching
``*_backward`` function consumes that record from a :class:`TapeCursor`,
accumulates parameter gradients into the layer, and returns the gradient with
respect to the layer input (where the input is differentiable).
"""

from typing import Optional, Sequence

import numpy as np
from scipy.special import expit, softmax

from .params import LayerParams, ShapeError, TokenIndexError
from .tape import ForwardTape, TapeCursor

ACTIVATIONS = ("identity", "relu", "tanh", "sigmoid")


def _activate(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "identity":
        return z
    if activation == "relu":
        return np.maximum(z, 0)
    if activation == "tanh":
        return np.tanh(z)
    if activation == "sigmoid":
        return expit(z)
    raise ValueError(f"Activation must be one of {ACTIVATIONS!r}, got {activation!r}.")


def _activation_grad(y: np.ndarray, activation: str) -> np.ndarray:
    # Derivatives expressed in terms of the activation output.
    if activation == "identity":
        return np.ones_like(y)
    if activation == "relu":
        return (y > 0).astype(y.dtype)
    if activation == "tanh":
        return 1 - y * y
    return y * (1 - y)


def softmax_backward(
    weights: np.ndarray, grad_weights: np.ndarray, axis: int = -1
) -> np.ndarray:
    """Gradient of a softmax with respect to its scores, given the gradient
    with respect to its output ``weights``.
    """
    inner = np.sum(grad_weights * weights, axis=axis, keepdims=True)
    return weights * (grad_weights - inner)


def embed_lookup(
    table: LayerParams,
    token_ids: Sequence[int],
    tape: Optional[ForwardTape] = None,
) -> np.ndarray:
    """Looks up one row of ``table`` per token id.

    Args:
        table: An embedding layer with a ``"table"`` block of shape ``(rows, dim)``.
        token_ids: A sequence of integer token ids.
        tape: Optional tape on which to record the lookup.

    Returns:
        An array of shape ``(len(token_ids), dim)``.
    """
    weights = table["table"]
    rows = weights.shape[0]
    ids = np.asarray(token_ids, dtype=np.int64).reshape(-1)
    (bad,) = np.nonzero((ids < 0) | (ids >= rows))
    if bad.size:
        raise TokenIndexError(int(ids[bad[0]]), int(bad[0]), rows)
    out = weights[ids]
    if tape is not None:
        tape.push("embed_lookup", table, ids=ids)
    return out


def embed_lookup_backward(
    table: LayerParams, cursor: TapeCursor, grad_out: np.ndarray
) -> None:
    record = cursor.pop("embed_lookup", table)
    np.add.at(table.grads["table"], record.cache["ids"], grad_out)


def add_position_embeddings(
    x: np.ndarray,
    pos_table: LayerParams,
    tape: Optional[ForwardTape] = None,
) -> np.ndarray:
    """Adds the first ``len(x)`` rows of a position table to ``x``."""
    positions = pos_table["table"]
    if x.ndim != 2 or x.shape[1] != positions.shape[1]:
        raise ShapeError(
            f"Input of shape {x.shape} is incompatible with position table"
            f" of shape {positions.shape}."
        )
    length = x.shape[0]
    if length > positions.shape[0]:
        raise ShapeError(
            f"Sequence of length {length} exceeds the {positions.shape[0]}"
            " supported positions."
        )
    if tape is not None:
        tape.push("add_position", pos_table, length=length)
    return x + positions[:length]


def add_position_embeddings_backward(
    pos_table: LayerParams, cursor: TapeCursor, grad_out: np.ndarray
) -> np.ndarray:
    record = cursor.pop("add_position", pos_table)
    pos_table.grads["table"][: record.cache["length"]] += grad_out
    return grad_out


def multi_head_self_attention(
    x: np.ndarray,
    params: LayerParams,
    tape: Optional[ForwardTape] = None,
) -> np.ndarray:
    """Multi-head scaled dot-product self-attention.

    Each head projects the input to queries, keys and values of dimension
    ``head_dim``, attends over all positions with weights
    ``softmax(q k^T / sqrt(head_dim))``, and the head outputs are concatenated.

    Args:
        x: Input of shape ``(L, d_in)`` with ``L >= 1``.
        params: A self-attention layer with ``"query"``, ``"key"`` and ``"value"``
            blocks of shape ``(d_in, num_heads * head_dim)``.
        tape: Optional tape on which to record the activations.

    Returns:
        An array of shape ``(L, num_heads * head_dim)``.
    """
    if x.ndim != 2:
        raise ShapeError(f"Self-attention expects a 2D input, got shape {x.shape}.")
    length, in_dim = x.shape
    if length == 0:
        raise ShapeError("Self-attention requires at least one position.")
    num_heads = params.config["num_heads"]
    head_dim = params.config["head_dim"]
    w_query = params["query"]
    if w_query.shape != (in_dim, num_heads * head_dim):
        raise ShapeError(
            f"Input of shape {x.shape} does not match projection of shape"
            f" {w_query.shape}."
        )

    def project(weight):
        return (x @ weight).reshape(length, num_heads, head_dim).transpose(1, 0, 2)

    q = project(w_query)
    k = project(params["key"])
    v = project(params["value"])
    scores = (q @ k.transpose(0, 2, 1)) / np.sqrt(head_dim)
    weights = softmax(scores, axis=-1)
    heads = weights @ v
    out = heads.transpose(1, 0, 2).reshape(length, num_heads * head_dim)
    if tape is not None:
        tape.push("self_attention", params, x=x, q=q, k=k, v=v, weights=weights)
    return out


def multi_head_self_attention_backward(
    params: LayerParams, cursor: TapeCursor, grad_out: np.ndarray
) -> np.ndarray:
    record = cursor.pop("self_attention", params)
    x, q, k, v, weights = (record.cache[key] for key in ("x", "q", "k", "v", "weights"))
    num_heads, length, head_dim = q.shape
    grad_heads = grad_out.reshape(length, num_heads, head_dim).transpose(1, 0, 2)

    grad_weights = grad_heads @ v.transpose(0, 2, 1)
    grad_v = weights.transpose(0, 2, 1) @ grad_heads
    grad_scores = softmax_backward(weights, grad_weights) / np.sqrt(head_dim)
    grad_q = grad_scores @ k
    grad_k = grad_scores.transpose(0, 2, 1) @ q

    grad_x = np.zeros_like(x)
    for key, grad in (("query", grad_q), ("key", grad_k), ("value", grad_v)):
        grad = grad.transpose(1, 0, 2).reshape(length, num_heads * head_dim)
        params.grads[key] += x.T @ grad
        grad_x += grad @ params[key].T
    return grad_x


def attentive_pooling(
    x: np.ndarray,
    params: LayerParams,
    tape: Optional[ForwardTape] = None,
) -> np.ndarray:
    """Reduces a sequence of vectors to one vector with learned attention weights.

    The weights are ``alpha = softmax(tanh(x W + b) q)`` and the output is
    ``sum_i alpha_i x_i``. The weights are cached on the tape under ``"weights"``.

    Args:
        x: Input of shape ``(L, d)`` with ``L >= 1``.
        params: An attentive-pooling layer with ``"weight"`` ``(d, a)``,
            ``"bias"`` ``(a,)`` and ``"query"`` ``(a,)`` blocks.
        tape: Optional tape on which to record the activations.

    Returns:
        An array of shape ``(d,)``.
    """
    if x.ndim != 2:
        raise ShapeError(f"Attentive pooling expects a 2D input, got shape {x.shape}.")
    if x.shape[0] == 0:
        raise ShapeError("Attentive pooling requires at least one position.")
    if x.shape[1] != params["weight"].shape[0]:
        raise ShapeError(
            f"Input of shape {x.shape} does not match pooling weight of shape"
            f" {params['weight'].shape}."
        )
    hidden = np.tanh(x @ params["weight"] + params["bias"])
    weights = softmax(hidden @ params["query"])
    out = weights @ x
    if tape is not None:
        tape.push("attentive_pooling", params, x=x, hidden=hidden, weights=weights)
    return out


def attentive_pooling_backward(
    params: LayerParams, cursor: TapeCursor, grad_out: np.ndarray
) -> np.ndarray:
    record = cursor.pop("attentive_pooling", params)
    x, hidden, weights = record.cache["x"], record.cache["hidden"], record.cache["weights"]
    grad_x = np.outer(weights, grad_out)
    grad_scores = softmax_backward(weights, x @ grad_out)
    params.grads["query"] += hidden.T @ grad_scores
    grad_pre = np.outer(grad_scores, params["query"]) * (1 - hidden * hidden)
    params.grads["weight"] += x.T @ grad_pre
    params.grads["bias"] += grad_pre.sum(axis=0)
    grad_x += grad_pre @ params["weight"].T
    return grad_x


def dense(
    x: np.ndarray,
    params: LayerParams,
    activation: Optional[str] = None,
    tape: Optional[ForwardTape] = None,
) -> np.ndarray:
    """A fully connected layer, ``y = act(x W + b)``, for a vector or a batch of rows.

    Args:
        x: Input of shape ``(d_in,)`` or ``(n, d_in)``.
        params: A dense layer with ``"weight"`` ``(d_in, d_out)`` and ``"bias"`` blocks.
        activation: One of ``"identity"``, ``"relu"``, ``"tanh"``, ``"sigmoid"``.
            Defaults to the activation stored in the layer config.
        tape: Optional tape on which to record the activations.
    """
    if activation is None:
        activation = params.config.get("activation", "identity")
    if activation not in ACTIVATIONS:
        raise ValueError(
            f"Activation must be one of {ACTIVATIONS!r}, got {activation!r}."
        )
    weight = params["weight"]
    if x.ndim not in (1, 2) or x.shape[-1] != weight.shape[0]:
        raise ShapeError(
            f"Dense input of shape {x.shape} does not match weight of shape"
            f" {weight.shape}."
        )
    y = _activate(x @ weight + params["bias"], activation)
    if tape is not None:
        tape.push("dense", params, x=x, y=y, activation=activation)
    return y


def dense_backward(
    params: LayerParams, cursor: TapeCursor, grad_out: np.ndarray
) -> np.ndarray:
    record = cursor.pop("dense", params)
    x, y = record.cache["x"], record.cache["y"]
    grad_pre = grad_out * _activation_grad(y, record.cache["activation"])
    if x.ndim == 1:
        params.grads["weight"] += np.outer(x, grad_pre)
        params.grads["bias"] += grad_pre
    else:
        params.grads["weight"] += x.T @ grad_pre
        params.grads["bias"] += grad_pre.sum(axis=0)
    return grad_pre @ params["weight"].T


def dropout(
    x: np.ndarray,
    rate: float,
    training: bool,
    rng: Optional[np.random.Generator] = None,
    tape: Optional[ForwardTape] = None,
) -> np.ndarray:
    """Inverted dropout.

    In training mode every entry is zeroed independently with probability ``rate``
    and survivors are scaled by ``1 / (1 - rate)``. In evaluation mode, or when
    ``rate == 0``, the input is returned unchanged. The mask is cached on the tape.
    """
    if not 0 <= rate < 1:
        raise ValueError(f"Dropout rate must be in [0, 1) (got {rate}).")
    mask = None
    out = x
    if training and rate > 0:
        if rng is None:
            rng = tape.rng if tape is not None else np.random.default_rng()
        mask = (rng.random(x.shape) >= rate).astype(x.dtype) / (1 - rate)
        out = x * mask
    if tape is not None:
        tape.push("dropout", None, mask=mask)
    return out


def dropout_backward(cursor: TapeCursor, grad_out: np.ndarray) -> np.ndarray:
    mask = cursor.pop("dropout").cache["mask"]
    if mask is None:
        return grad_out
    return grad_out * mask
