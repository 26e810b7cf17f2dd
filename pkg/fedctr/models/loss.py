from typing import Tuple, Union

import numpy as np

CLAMP = 1e-12


def bce_loss(
    y_hat: Union[float, np.ndarray], y: Union[int, np.ndarray]
) -> Tuple[Union[float, np.ndarray], Union[float, np.ndarray]]:
    """Binary cross-entropy and its gradient with respect to ``y_hat``.

    ``y_hat`` is clamped to ``[CLAMP, 1 - CLAMP]`` before evaluation.

    Args:
        y_hat: Predicted click probabilities.
        y: Labels in ``{0, 1}``.

    Returns:
        ``(loss, grad)``, elementwise, with the shape of the inputs.
    """
    labels = np.asarray(y, dtype=np.float64)
    if not np.all((labels == 0) | (labels == 1)):
        raise ValueError(f"Labels must be 0 or 1 (got {y!r}).")
    p = np.clip(np.asarray(y_hat, dtype=np.float64), CLAMP, 1 - CLAMP)
    loss = -(labels * np.log(p) + (1 - labels) * np.log(1 - p))
    grad = (p - labels) / (p * (1 - p))
    if loss.ndim == 0:
        return float(loss), float(grad)
    return loss, grad


def mean_bce_loss(y_hat: np.ndarray, y: np.ndarray) -> Tuple[float, np.ndarray]:
    """Batch-mean binary cross-entropy and its gradient with respect to each ``y_hat``."""
    loss, grad = bce_loss(np.atleast_1d(y_hat), np.atleast_1d(y))
    if loss.size == 0:
        raise ValueError("Cannot compute the loss of an empty batch.")
    return float(loss.mean()), grad / loss.size
