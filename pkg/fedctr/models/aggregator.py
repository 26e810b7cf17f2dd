from typing import List, Optional, Sequence, Union

import numpy as np
from scipy.special import softmax

from ..nnkit import ForwardTape, LayerKind, LayerParams, ShapeError, softmax_backward
from ..nnkit.init import uniform
from .base import Model
from .options import AggregatorKind, ModelConfig


class Aggregator(Model):
    """Combines the K local user embeddings into the user embedding.

    The attention variant computes ``u = U softmax(U^T q)`` with a learned query
    ``q``; the other variants are parameter free. ``responders`` masks out
    platforms that did not answer: attention and average renormalize over the
    responding platforms, max ignores the others, and concat fills their slots
    with zeros.

    Args:
        config: The model hyperparameters. ``config.aggregator`` selects the variant
            and ``config.num_platforms`` is K.
        rng: Generator used for parameter initialization.
        name: Prefix for the qualified layer names.
    """

    def __init__(
        self,
        config: ModelConfig,
        rng: Optional[np.random.Generator] = None,
        name: str = "aggregator",
    ):
        if rng is None:
            rng = np.random.default_rng(config.seed)
        self.name = name
        self.config = config
        self.kind = AggregatorKind(getattr(config.aggregator, "value", config.aggregator))
        self.num_platforms = config.num_platforms
        self.dim = config.embed_dim
        self.query = LayerParams(
            f"{name}.query",
            LayerKind.PARAMETER,
            {"value": uniform(rng, (self.dim,), dtype=config.numpy_dtype)},
        )

    @property
    def layers(self) -> List[LayerParams]:
        if self.kind is AggregatorKind.ATTENTION:
            return [self.query]
        return []

    @property
    def output_dim(self) -> int:
        if self.kind is AggregatorKind.CONCAT:
            return self.num_platforms * self.dim
        return self.dim

    def _mask(self, responders) -> np.ndarray:
        if responders is None:
            return np.ones(self.num_platforms, dtype=bool)
        mask = np.asarray(responders, dtype=bool)
        if mask.shape != (self.num_platforms,):
            raise ShapeError(
                f"Expected a responder mask of shape ({self.num_platforms},),"
                f" got {mask.shape}."
            )
        if not mask.any():
            raise ValueError("At least one platform must respond.")
        return mask

    def aggregate_batch(
        self,
        local: np.ndarray,
        tape: Optional[ForwardTape] = None,
        responders: Optional[Sequence[bool]] = None,
    ) -> np.ndarray:
        """Aggregates a batch of local embeddings.

        Args:
            local: Array of shape ``(batch, K, dim)``. Rows of non-responding
                platforms are ignored.
            tape: Optional tape on which to record the weights.
            responders: Optional boolean mask of length K.

        Returns:
            An array of shape ``(batch, output_dim)``.
        """
        local = np.asarray(local)
        expected = (self.num_platforms, self.dim)
        if local.ndim != 3 or local.shape[1:] != expected:
            raise ShapeError(
                f"Expected local embeddings of shape (batch, {expected[0]},"
                f" {expected[1]}), got {local.shape}."
            )
        mask = self._mask(responders)
        local = np.where(mask[None, :, None], local, 0)
        batch = local.shape[0]
        weights = indices = None
        if self.kind is AggregatorKind.ATTENTION:
            scores = local @ self.query["value"]
            scores = np.where(mask[None, :], scores, -np.inf)
            weights = softmax(scores, axis=-1)
            out = np.einsum("bk,bkd->bd", weights, local)
        elif self.kind is AggregatorKind.AVERAGE:
            weights = np.broadcast_to(mask / mask.sum(), (batch, self.num_platforms))
            out = np.einsum("bk,bkd->bd", weights, local)
        elif self.kind is AggregatorKind.MAX:
            masked = np.where(mask[None, :, None], local, -np.inf)
            # argmax returns the first maximum, i.e. the lowest platform index
            indices = np.argmax(masked, axis=1)
            out = np.take_along_axis(local, indices[:, None, :], axis=1)[:, 0, :]
        else:
            out = local.reshape(batch, self.num_platforms * self.dim)
        if tape is not None:
            tape.push(
                "aggregate",
                self.query,
                local=local,
                mask=mask,
                weights=weights,
                indices=indices,
            )
        return out

    def aggregate(
        self,
        local: Union[np.ndarray, Sequence[np.ndarray]],
        tape: Optional[ForwardTape] = None,
        responders: Optional[Sequence[bool]] = None,
    ) -> np.ndarray:
        """Aggregates the K local embeddings of one user.

        Args:
            local: K vectors of length ``dim``, in platform order.
            tape: Optional tape on which to record the weights.
            responders: Optional boolean mask of length K.

        Returns:
            The user embedding, of length ``output_dim``.
        """
        vectors = [np.asarray(vector) for vector in local]
        if len(vectors) != self.num_platforms:
            raise ShapeError(
                f"Expected {self.num_platforms} local embeddings, got {len(vectors)}."
            )
        for index, vector in enumerate(vectors, start=1):
            if vector.shape != (self.dim,):
                raise ShapeError(
                    f"Local embedding of platform {index} has shape {vector.shape},"
                    f" expected ({self.dim},)."
                )
        return self.aggregate_batch(np.stack(vectors)[None], tape, responders)[0]

    def backward_batch(self, tape: ForwardTape, grad_u: np.ndarray) -> np.ndarray:
        """Accumulates the query gradient and returns the local-embedding gradients.

        Args:
            tape: The tape of one :meth:`Aggregator.aggregate_batch` call.
            grad_u: Array of shape ``(batch, output_dim)``.

        Returns:
            An array of shape ``(batch, K, dim)``; rows of non-responding platforms
            are zero.
        """
        cursor = tape.replay()
        record = cursor.pop("aggregate", self.query)
        cursor.finish()
        local = record.cache["local"]
        mask = record.cache["mask"]
        weights = record.cache["weights"]
        batch = local.shape[0]
        grad_u = np.asarray(grad_u)
        if grad_u.shape != (batch, self.output_dim):
            raise ShapeError(
                f"Expected a gradient of shape ({batch}, {self.output_dim}),"
                f" got {grad_u.shape}."
            )
        if self.kind is AggregatorKind.ATTENTION:
            grad_local = weights[:, :, None] * grad_u[:, None, :]
            grad_scores = softmax_backward(weights, np.einsum("bkd,bd->bk", local, grad_u))
            grad_local += grad_scores[:, :, None] * self.query["value"][None, None, :]
            self.query.grads["value"] += np.einsum("bk,bkd->d", grad_scores, local)
        elif self.kind is AggregatorKind.AVERAGE:
            grad_local = weights[:, :, None] * grad_u[:, None, :]
        elif self.kind is AggregatorKind.MAX:
            grad_local = np.zeros_like(local)
            np.put_along_axis(
                grad_local, record.cache["indices"][:, None, :], grad_u[:, None, :], axis=1
            )
        else:
            grad_local = grad_u.reshape(local.shape).copy()
        grad_local[:, ~mask, :] = 0
        return grad_local

    def backward(self, tape: ForwardTape, grad_u: np.ndarray) -> List[np.ndarray]:
        """Backward pass for one :meth:`Aggregator.aggregate` call.

        Returns:
            K gradient vectors, in platform order.
        """
        grad_u = np.asarray(grad_u)
        if grad_u.shape != (self.output_dim,):
            raise ShapeError(
                f"Expected a gradient of shape ({self.output_dim},), got {grad_u.shape}."
            )
        return list(self.backward_batch(tape, grad_u[None])[0])
