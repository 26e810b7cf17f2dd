from typing import List, Optional, Sequence

import numpy as np

from ..nnkit import (
    ForwardTape,
    LayerParams,
    ShapeError,
    TapeCursor,
    attentive_pooling,
    attentive_pooling_backward,
    attentive_pooling_layer,
    dense,
    dense_backward,
    dense_layer,
    embed_lookup,
    embed_lookup_backward,
    embedding_layer,
)
from .base import Model
from .options import ModelConfig
from .text_encoder import TextEncoder


class AdModel(Model):
    """The ad model of the ad platform.

    An ad is represented by up to three views: its ID (embedding followed by a
    tanh dense layer), its title and its description (each a :class:`TextEncoder`).
    View attention pools the views that are present; an empty title or
    description is left out of the softmax.

    Ad ids outside ``[0, num_ads)`` share a reserved out-of-vocabulary row.

    Args:
        config: The model hyperparameters.
        rng: Generator used for parameter initialization.
        name: Prefix for the qualified layer names.
    """

    def __init__(
        self,
        config: ModelConfig,
        rng: Optional[np.random.Generator] = None,
        name: str = "ad_model",
    ):
        if rng is None:
            rng = np.random.default_rng(config.seed)
        dtype = config.numpy_dtype
        dim = config.embed_dim
        self.name = name
        self.config = config
        self.id_embedding = embedding_layer(
            f"{name}.id_embedding", config.num_ads + 1, config.id_dim, rng, dtype
        )
        self.id_dense = dense_layer(
            f"{name}.id_dense", config.id_dim, dim, rng, activation="tanh", dtype=dtype
        )
        self.title_encoder = TextEncoder(f"{name}.title_encoder", config, rng)
        self.description_encoder = TextEncoder(
            f"{name}.description_encoder", config, rng
        )
        self.view_pooling = attentive_pooling_layer(
            f"{name}.view_pooling", dim, config.pooling_dim, rng, dtype
        )

    @property
    def layers(self) -> List[LayerParams]:
        return (
            [self.id_embedding, self.id_dense]
            + self.title_encoder.layers
            + self.description_encoder.layers
            + [self.view_pooling]
        )

    @property
    def output_dim(self) -> int:
        return self.config.embed_dim

    @property
    def oov_index(self) -> int:
        return self.config.num_ads

    def ad_index(self, ad_id: int) -> int:
        """Row of the ad-ID table used for ``ad_id``."""
        if 0 <= ad_id < self.config.num_ads:
            return int(ad_id)
        return self.oov_index

    def forward(self, ad, tape: Optional[ForwardTape] = None) -> np.ndarray:
        """Computes the embedding of one :class:`fedctr.dataio.AdRecord`."""
        id_vector = embed_lookup(self.id_embedding, [self.ad_index(ad.ad_id)], tape)
        views = [dense(id_vector, self.id_dense, tape=tape)[0]]
        present = []
        for encoder, tokens in (
            (self.title_encoder, ad.title),
            (self.description_encoder, ad.description),
        ):
            has_view = len(tokens) > 0
            if has_view:
                views.append(encoder.forward(tokens, tape))
            present.append(has_view)
        if tape is not None:
            tape.push("ad_views", None, present=tuple(present))
        return attentive_pooling(np.stack(views), self.view_pooling, tape)

    def forward_batch(
        self, ads: Sequence, tape: Optional[ForwardTape] = None
    ) -> np.ndarray:
        if not len(ads):
            return np.zeros((0, self.output_dim), dtype=self.config.numpy_dtype)
        return np.stack([self.forward(ad, tape) for ad in ads])

    def backward_from(self, cursor: TapeCursor, grad_d: np.ndarray) -> None:
        grad_views = attentive_pooling_backward(self.view_pooling, cursor, grad_d)
        has_title, has_description = cursor.pop("ad_views").cache["present"]
        row = grad_views.shape[0] - 1
        if has_description:
            self.description_encoder.backward(cursor, grad_views[row])
            row -= 1
        if has_title:
            self.title_encoder.backward(cursor, grad_views[row])
            row -= 1
        grad_id = dense_backward(self.id_dense, cursor, grad_views[row][None, :])
        embed_lookup_backward(self.id_embedding, cursor, grad_id)

    def backward(self, tape: ForwardTape, grad_d: np.ndarray) -> None:
        """Accumulates parameter gradients for a tape recorded by :meth:`AdModel.forward`."""
        grad_d = np.asarray(grad_d)
        if grad_d.shape != (self.output_dim,):
            raise ShapeError(
                f"Expected a gradient of shape ({self.output_dim},), got {grad_d.shape}."
            )
        cursor = tape.replay()
        self.backward_from(cursor, grad_d)
        cursor.finish()

    def backward_batch(self, tape: ForwardTape, grads: np.ndarray) -> None:
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
