from typing import Dict, Iterable, Tuple, Union

import numpy as np

from ..nnkit import LayerParams
from .options import ModelConfigError, OptimizerKind


class Optimizer:
    """Updates parameters in place from their accumulated gradients.

    After every :meth:`Optimizer.step` the gradients of the updated layers are zero.

    Args:
        learning_rate: The step size.
    """

    def __init__(self, learning_rate: float):
        if learning_rate <= 0:
            raise ModelConfigError(f"learning_rate must be > 0 (got {learning_rate}).")
        self.learning_rate = learning_rate

    def update(self, layer: LayerParams, key: str, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def step(self, layers: Iterable[LayerParams]) -> None:
        for layer in layers:
            for key, value in layer.items():
                value -= self.update(layer, key, layer.grads[key])
            layer.zero_grads()


class SGD(Optimizer):
    """Plain stochastic gradient descent, ``theta <- theta - eta * g``."""

    def update(self, layer, key, grad):
        return self.learning_rate * grad


class Adam(Optimizer):
    """Adam with bias-corrected moment estimates.

    Moments are tracked per ``(layer name, block name)``. Each block counts
    its own steps, so layers that receive no update in a step are unaffected.
    """

    def __init__(
        self,
        learning_rate: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        super().__init__(learning_rate)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.state: Dict[Tuple[str, str], Tuple[int, np.ndarray, np.ndarray]] = {}

    def update(self, layer, key, grad):
        step, m, v = self.state.get(
            (layer.name, key), (0, np.zeros_like(grad), np.zeros_like(grad))
        )
        step += 1
        m = self.beta1 * m + (1 - self.beta1) * grad
        v = self.beta2 * v + (1 - self.beta2) * grad * grad
        self.state[(layer.name, key)] = (step, m, v)
        m_hat = m / (1 - self.beta1**step)
        v_hat = v / (1 - self.beta2**step)
        return self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)


def make_optimizer(kind: Union[OptimizerKind, str], learning_rate: float) -> Optimizer:
    kind = OptimizerKind(getattr(kind, "value", kind))
    if kind is OptimizerKind.SGD:
        return SGD(learning_rate)
    return Adam(learning_rate)


def apply_sgd(layers: Iterable[LayerParams], eta: float) -> None:
    """One plain SGD step on ``layers``, zeroing their gradients afterwards."""
    SGD(eta).step(layers)
