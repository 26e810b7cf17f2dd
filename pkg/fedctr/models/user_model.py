from typing import List, Optional, Sequence

import numpy as np

from ..nnkit import (
    ForwardTape,
    LayerKind,
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
    multi_head_self_attention,
    multi_head_self_attention_backward,
    position_layer,
    self_attention_layer,
)
from ..nnkit.init import uniform
from .base import Model
from .options import ModelConfig
from .text_encoder import TextEncoder, is_training


def behavior_tokens(behavior) -> List[int]:
    """Token ids of a behavior record, or of a plain token sequence."""
    return list(getattr(behavior, "tokens", behavior))


class UserModel(Model):
    """The per-platform user model.

    Each behavior text is encoded by a word-level :class:`TextEncoder`. The
    behavior vectors, in chronological order, get a learned behavior position
    embedding, are contextualized by multi-head self-attention, and are reduced
    to the local user embedding by attentive pooling.

    A user without usable behaviors on the platform is represented by a
    trainable cold-start embedding.

    Args:
        config: The model hyperparameters.
        rng: Generator used for parameter initialization.
        name: Prefix for the qualified layer names.
    """

    def __init__(
        self,
        config: ModelConfig,
        rng: Optional[np.random.Generator] = None,
        name: str = "user_model",
    ):
        if rng is None:
            rng = np.random.default_rng(config.seed)
        dtype = config.numpy_dtype
        dim = config.embed_dim
        self.name = name
        self.config = config
        self.behavior_encoder = TextEncoder(f"{name}.behavior_encoder", config, rng)
        self.behavior_position = position_layer(
            f"{name}.behavior_position", config.max_behaviors, dim, rng, dtype
        )
        self.behavior_attention = self_attention_layer(
            f"{name}.behavior_attention",
            dim,
            config.num_heads,
            config.head_dim,
            rng,
            dtype,
        )
        self.behavior_pooling = attentive_pooling_layer(
            f"{name}.behavior_pooling", dim, config.pooling_dim, rng, dtype
        )
        self.cold_start = LayerParams(
            f"{name}.cold_start",
            LayerKind.PARAMETER,
            {"value": uniform(rng, (dim,), dtype=dtype)},
        )

    @property
    def layers(self) -> List[LayerParams]:
        return self.behavior_encoder.layers + [
            self.behavior_position,
            self.behavior_attention,
            self.behavior_pooling,
            self.cold_start,
        ]

    @property
    def output_dim(self) -> int:
        return self.config.embed_dim

    def prepare_history(self, behaviors: Sequence) -> List[List[int]]:
        """Drops behaviors without tokens and keeps the most recent ``max_behaviors``.

        ``behaviors`` must be in chronological order.
        """
        history = [tokens for tokens in map(behavior_tokens, behaviors) if tokens]
        return history[-self.config.max_behaviors :]

    def encode_behavior(self, behavior) -> np.ndarray:
        """Evaluation-mode embedding of a single behavior in user-embedding space.

        This is the local user embedding of a history holding only ``behavior``,
        so it is comparable with the embeddings the platform shares.
        """
        return self.forward([behavior_tokens(behavior)])

    def forward(
        self, behaviors: Sequence, tape: Optional[ForwardTape] = None
    ) -> np.ndarray:
        """Computes the local user embedding from a chronological behavior history.

        Args:
            behaviors: :class:`fedctr.dataio.BehaviorRecord` items, or token-id
                sequences, oldest first.
            tape: Optional tape on which to record the forward pass.

        Returns:
            A vector of length ``config.embed_dim``.
        """
        history = self.prepare_history(behaviors)
        if not history:
            if tape is not None:
                tape.push("cold_start", self.cold_start)
            return self.cold_start["value"].copy()
        training = is_training(tape)
        rate = self.config.dropout
        x = np.stack([self.behavior_encoder.forward(tokens, tape) for tokens in history])
        x = add_position_embeddings(x, self.behavior_position, tape)
        x = dropout(x, rate, training, tape=tape)
        x = multi_head_self_attention(x, self.behavior_attention, tape)
        x = dropout(x, rate, training, tape=tape)
        return attentive_pooling(x, self.behavior_pooling, tape)

    def forward_batch(
        self, histories: Sequence[Sequence], tape: Optional[ForwardTape] = None
    ) -> np.ndarray:
        """Local embeddings for a batch of users, shape ``(batch, embed_dim)``."""
        if not len(histories):
            return np.zeros((0, self.output_dim), dtype=self.config.numpy_dtype)
        return np.stack([self.forward(history, tape) for history in histories])

    def backward_from(self, cursor: TapeCursor, grad_u: np.ndarray) -> None:
        """Consumes the records of one :meth:`UserModel.forward` call from ``cursor``."""
        record = cursor.peek()
        if record is not None and record.op == "cold_start":
            cursor.pop("cold_start", self.cold_start)
            self.cold_start.accumulate("value", grad_u)
            return
        grad = attentive_pooling_backward(self.behavior_pooling, cursor, grad_u)
        grad = dropout_backward(cursor, grad)
        grad = multi_head_self_attention_backward(self.behavior_attention, cursor, grad)
        grad = dropout_backward(cursor, grad)
        grad = add_position_embeddings_backward(self.behavior_position, cursor, grad)
        for row in reversed(range(grad.shape[0])):
            self.behavior_encoder.backward(cursor, grad[row])

    def backward(self, tape: ForwardTape, grad_u: np.ndarray) -> None:
        """Accumulates parameter gradients for a tape recorded by :meth:`UserModel.forward`.

        Args:
            tape: The tape of exactly one forward call.
            grad_u: Gradient of the objective with respect to the user embedding.
        """
        grad_u = np.asarray(grad_u)
        if grad_u.shape != (self.output_dim,):
            raise ShapeError(
                f"Expected a gradient of shape ({self.output_dim},), got {grad_u.shape}."
            )
        cursor = tape.replay()
        self.backward_from(cursor, grad_u)
        cursor.finish()

    def backward_batch(self, tape: ForwardTape, grads: np.ndarray) -> None:
        """Backward pass for a tape recorded by :meth:`UserModel.forward_batch`."""
        grads = np.asarray(grads)
        if grads.ndim != 2 or grads.shape[1] != self.output_dim:
            raise ShapeError(
                f"Expected gradients of shape (batch, {self.output_dim}),"
                f" got {grads.shape}."
            )
        cursor = tape.replay()
        for row in reversed(range(grads.shape[0])):
            self.backward_from(cursor, grads[row])
        cursor.finish()
