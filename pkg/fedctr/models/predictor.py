from typing import List, Optional, Tuple

import numpy as np
from scipy.special import expit

from ..nnkit import (
    ForwardTape,
    LayerKind,
    LayerParams,
    ShapeError,
    dense,
    dense_backward,
    dense_layer,
)
from ..nnkit.init import uniform
from .base import Model
from .options import ModelConfig, PredictorKind


class CtrPredictor(Model):
    """Scores a (user embedding, ad embedding) pair as a click probability.

    Variants:

    - ``dot``: ``sigmoid(u . d)``, no parameters.
    - ``dense``: ``sigmoid(w . [u; d] + b)``.
    - ``outer``: ``sigmoid(w . vec(u d^T) + b)``.
    - ``fm``: a second-order factorization machine over ``x = [u; d]``,
      ``sigmoid(w0 + w . x + 1/2 sum_f ((V^T x)_f^2 - ((V*V)^T (x*x))_f))``.

    Args:
        config: The model hyperparameters. ``config.predictor`` selects the variant.
        rng: Generator used for parameter initialization.
        name: Prefix for the qualified layer names.
    """

    def __init__(
        self,
        config: ModelConfig,
        rng: Optional[np.random.Generator] = None,
        name: str = "predictor",
    ):
        if rng is None:
            rng = np.random.default_rng(config.seed)
        dtype = config.numpy_dtype
        self.name = name
        self.config = config
        self.kind = PredictorKind(getattr(config.predictor, "value", config.predictor))
        self.user_dim = config.user_dim
        self.ad_dim = config.embed_dim
        self.layer: Optional[LayerParams] = None
        if self.kind is PredictorKind.DENSE:
            self.layer = dense_layer(
                f"{name}.dense", self.user_dim + self.ad_dim, 1, rng, dtype=dtype
            )
        elif self.kind is PredictorKind.OUTER:
            self.layer = dense_layer(
                f"{name}.outer", self.user_dim * self.ad_dim, 1, rng, dtype=dtype
            )
        elif self.kind is PredictorKind.FM:
            features = self.user_dim + self.ad_dim
            self.layer = LayerParams(
                f"{name}.fm",
                LayerKind.FACTORIZATION_MACHINE,
                {
                    "bias": np.zeros(1, dtype=dtype),
                    "linear": np.zeros(features, dtype=dtype),
                    "factors": uniform(rng, (features, config.fm_factors), dtype=dtype),
                },
            )

    @property
    def layers(self) -> List[LayerParams]:
        return [] if self.layer is None else [self.layer]

    def _check(self, u: np.ndarray, d: np.ndarray) -> None:
        if u.ndim != 2 or d.ndim != 2 or u.shape[0] != d.shape[0]:
            raise ShapeError(
                f"Expected batches of user and ad embeddings, got {u.shape} and {d.shape}."
            )
        if u.shape[1] != self.user_dim or d.shape[1] != self.ad_dim:
            raise ShapeError(
                f"The {self.kind.value} predictor expects user dim {self.user_dim} and"
                f" ad dim {self.ad_dim}, got {u.shape[1]} and {d.shape[1]}."
            )

    def predict_batch(
        self, u: np.ndarray, d: np.ndarray, tape: Optional[ForwardTape] = None
    ) -> np.ndarray:
        """Click probabilities for a batch of pairs.

        Args:
            u: User embeddings, shape ``(batch, user_dim)``.
            d: Ad embeddings, shape ``(batch, ad_dim)``.
            tape: Optional tape on which to record the forward pass.

        Returns:
            An array of shape ``(batch,)``.
        """
        u = np.asarray(u)
        d = np.asarray(d)
        self._check(u, d)
        cache = {"u": u, "d": d}
        if self.kind is PredictorKind.DOT:
            score = np.sum(u * d, axis=1)
        elif self.kind is PredictorKind.DENSE:
            score = dense(np.concatenate([u, d], axis=1), self.layer, tape=tape)[:, 0]
        elif self.kind is PredictorKind.OUTER:
            pairs = (u[:, :, None] * d[:, None, :]).reshape(u.shape[0], -1)
            score = dense(pairs, self.layer, tape=tape)[:, 0]
        else:
            x = np.concatenate([u, d], axis=1)
            factors = self.layer["factors"]
            sums = x @ factors
            squares = (x * x) @ (factors * factors)
            score = (
                self.layer["bias"][0]
                + x @ self.layer["linear"]
                + 0.5 * np.sum(sums * sums - squares, axis=1)
            )
            cache.update(x=x, sums=sums)
        y_hat = expit(score)
        if tape is not None:
            tape.push("predict", self.layer, y_hat=y_hat, **cache)
        return y_hat

    def predict(
        self, u: np.ndarray, d: np.ndarray, tape: Optional[ForwardTape] = None
    ) -> float:
        """Click probability of a single pair."""
        return float(self.predict_batch(np.asarray(u)[None], np.asarray(d)[None], tape)[0])

    def backward_batch(
        self, tape: ForwardTape, grad_y_hat: np.ndarray
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Accumulates gradients of the predictor parameters.

        Args:
            tape: The tape of one :meth:`CtrPredictor.predict_batch` call.
            grad_y_hat: Gradient of the objective with respect to each probability.

        Returns:
            The gradients with respect to ``u`` and ``d``.
        """
        cursor = tape.replay()
        record = cursor.pop("predict", self.layer)
        u, d, y_hat = record.cache["u"], record.cache["d"], record.cache["y_hat"]
        grad_score = np.asarray(grad_y_hat) * y_hat * (1 - y_hat)
        if grad_score.shape != y_hat.shape:
            raise ShapeError(
                f"Expected a gradient of shape {y_hat.shape}, got {grad_score.shape}."
            )
        if self.kind is PredictorKind.DOT:
            grad_u = grad_score[:, None] * d
            grad_d = grad_score[:, None] * u
        elif self.kind is PredictorKind.DENSE:
            grad_x = dense_backward(self.layer, cursor, grad_score[:, None])
            grad_u, grad_d = grad_x[:, : self.user_dim], grad_x[:, self.user_dim :]
        elif self.kind is PredictorKind.OUTER:
            grad_pairs = dense_backward(self.layer, cursor, grad_score[:, None])
            grad_pairs = grad_pairs.reshape(u.shape[0], self.user_dim, self.ad_dim)
            grad_u = np.einsum("bij,bj->bi", grad_pairs, d)
            grad_d = np.einsum("bij,bi->bj", grad_pairs, u)
        else:
            x, sums = record.cache["x"], record.cache["sums"]
            factors = self.layer["factors"]
            self.layer.grads["bias"] += grad_score.sum(keepdims=True)
            self.layer.grads["linear"] += x.T @ grad_score
            self.layer.grads["factors"] += x.T @ (grad_score[:, None] * sums)
            self.layer.grads["factors"] -= factors * ((x * x).T @ grad_score)[:, None]
            grad_x = grad_score[:, None] * (
                self.layer["linear"] + sums @ factors.T - x * np.sum(factors**2, axis=1)
            )
            grad_u, grad_d = grad_x[:, : self.user_dim], grad_x[:, self.user_dim :]
        cursor.finish()
        return grad_u, grad_d

    def backward(
        self, tape: ForwardTape, grad_y_hat: float
    ) -> Tuple[np.ndarray, np.ndarray]:
        grad_u, grad_d = self.backward_batch(tape, np.array([grad_y_hat]))
        return grad_u[0], grad_d[0]
