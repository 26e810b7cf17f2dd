from typing import List, Optional, Sequence

import numpy as np

from ..nnkit import (
    ForwardTape,
    LayerParams,
    ShapeError,
    TapeCursor,
    add_position_embeddings,
    add_position_embeddings_backward,
    attentive_pooling,
    attentive_pooling_backward,
    attentive_pooling_layer,
    dropout,
    dropout_backward,
    embed_lookup,
    embed_lookup_backward,
    embedding_layer,
    multi_head_self_attention,
    multi_head_self_attention_backward,
    position_layer,
    self_attention_layer,
)
from .options import ModelConfig


def is_training(tape: Optional[ForwardTape]) -> bool:
    return tape is not None and tape.training


class TextEncoder:
    """Encodes a token sequence into one vector.

    Words are embedded, offset by a learned position embedding, contextualized by
    multi-head self-attention and reduced by attentive pooling. Dropout follows
    the position embedding and the self-attention layer.

    Args:
        name: Prefix for the qualified names of the encoder's layers.
        config: The model hyperparameters.
        rng: Generator used for parameter initialization.
    """

    def __init__(self, name: str, config: ModelConfig, rng: np.random.Generator):
        dtype = config.numpy_dtype
        self.name = name
        self.max_tokens = config.max_tokens
        self.dropout = config.dropout
        self.word_embedding = embedding_layer(
            f"{name}.word_embedding", config.vocab_size, config.word_dim, rng, dtype
        )
        self.word_position = position_layer(
            f"{name}.word_position", config.max_tokens, config.word_dim, rng, dtype
        )
        self.word_attention = self_attention_layer(
            f"{name}.word_attention",
            config.word_dim,
            config.num_heads,
            config.head_dim,
            rng,
            dtype,
        )
        self.word_pooling = attentive_pooling_layer(
            f"{name}.word_pooling", config.embed_dim, config.pooling_dim, rng, dtype
        )

    @property
    def layers(self) -> List[LayerParams]:
        return [
            self.word_embedding,
            self.word_position,
            self.word_attention,
            self.word_pooling,
        ]

    def forward(
        self, tokens: Sequence[int], tape: Optional[ForwardTape] = None
    ) -> np.ndarray:
        """Encodes the first ``max_tokens`` tokens of a non-empty sequence."""
        tokens = list(tokens)[: self.max_tokens]
        if not tokens:
            raise ShapeError(f"{self.name} cannot encode an empty token sequence.")
        training = is_training(tape)
        x = embed_lookup(self.word_embedding, tokens, tape)
        x = add_position_embeddings(x, self.word_position, tape)
        x = dropout(x, self.dropout, training, tape=tape)
        x = multi_head_self_attention(x, self.word_attention, tape)
        x = dropout(x, self.dropout, training, tape=tape)
        return attentive_pooling(x, self.word_pooling, tape)

    def backward(self, cursor: TapeCursor, grad: np.ndarray) -> None:
        grad = attentive_pooling_backward(self.word_pooling, cursor, grad)
        grad = dropout_backward(cursor, grad)
        grad = multi_head_self_attention_backward(self.word_attention, cursor, grad)
        grad = dropout_backward(cursor, grad)
        grad = add_position_embeddings_backward(self.word_position, cursor, grad)
        embed_lookup_backward(self.word_embedding, cursor, grad)
