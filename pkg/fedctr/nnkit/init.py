"""Parameter initialization.

Embedding and position tables are drawn uniformly from ``[-0.1, 0.1]``.
Dense and attention projections use Xavier (Glorot) uniform scaling,
``limit = sqrt(6 / (fan_in + fan_out))``. Biases start at zero.
"""

import numpy as np

from .params import LayerKind, LayerParams

EMBEDDING_SCALE = 0.1


def uniform(
    rng: np.random.Generator, shape, scale: float = EMBEDDING_SCALE, dtype=np.float64
) -> np.ndarray:
    return rng.uniform(-scale, scale, size=shape).astype(dtype)


def xavier_uniform(
    rng: np.random.Generator, fan_in: int, fan_out: int, shape=None, dtype=np.float64
) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    if shape is None:
        shape = (fan_in, fan_out)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def embedding_layer(
    name: str, rows: int, dim: int, rng: np.random.Generator, dtype=np.float64
) -> LayerParams:
    return LayerParams(
        name,
        LayerKind.EMBEDDING,
        {"table": uniform(rng, (rows, dim), dtype=dtype)},
    )


def position_layer(
    name: str, max_positions: int, dim: int, rng: np.random.Generator, dtype=np.float64
) -> LayerParams:
    return LayerParams(
        name,
        LayerKind.POSITION_EMBEDDING,
        {"table": uniform(rng, (max_positions, dim), dtype=dtype)},
    )


def dense_layer(
    name: str,
    in_dim: int,
    out_dim: int,
    rng: np.random.Generator,
    activation: str = "identity",
    dtype=np.float64,
) -> LayerParams:
    return LayerParams(
        name,
        LayerKind.DENSE,
        {
            "weight": xavier_uniform(rng, in_dim, out_dim, dtype=dtype),
            "bias": np.zeros(out_dim, dtype=dtype),
        },
        config={"activation": activation},
    )


def self_attention_layer(
    name: str,
    in_dim: int,
    num_heads: int,
    head_dim: int,
    rng: np.random.Generator,
    dtype=np.float64,
) -> LayerParams:
    out_dim = num_heads * head_dim
    return LayerParams(
        name,
        LayerKind.SELF_ATTENTION,
        {
            key: xavier_uniform(rng, in_dim, out_dim, dtype=dtype)
            for key in ("query", "key", "value")
        },
        config={"num_heads": num_heads, "head_dim": head_dim},
    )


def attentive_pooling_layer(
    name: str,
    dim: int,
    hidden_dim: int,
    rng: np.random.Generator,
    dtype=np.float64,
) -> LayerParams:
    return LayerParams(
        name,
        LayerKind.ATTENTIVE_POOLING,
        {
            "weight": xavier_uniform(rng, dim, hidden_dim, dtype=dtype),
            "bias": np.zeros(hidden_dim, dtype=dtype),
            "query": xavier_uniform(rng, hidden_dim, 1, shape=(hidden_dim,), dtype=dtype),
        },
    )
