from enum import Enum
from typing import Any, Dict, Iterator, Optional, Tuple

import numpy as np


class ShapeError(ValueError):
    pass


class TokenIndexError(IndexError):
    """Raised when a token id does not index a row of an embedding table.

    Args:
        index: The offending token id.
        position: The position of the offending id in the looked-up sequence.
        rows: The number of rows in the table.
    """

    def __init__(self, index: int, position: int, rows: int):
        self.index = index
        self.position = position
        self.rows = rows
        super().__init__(
            f"Token id {index} at position {position} is out of range"
            f" for a table with {rows} rows."
        )


class LayerKind(Enum):
    """The kinds of parameterized layers."""

    EMBEDDING: str = "embedding"
    POSITION_EMBEDDING: str = "position-embedding"
    DENSE: str = "dense"
    SELF_ATTENTION: str = "multi-head-self-attention"
    ATTENTIVE_POOLING: str = "attentive-pooling"
    FACTORIZATION_MACHINE: str = "factorization-machine"
    PARAMETER: str = "parameter"


class LayerParams:
    """Named parameter blocks of one layer, with matching gradient accumulators.

    Every parameter block has a gradient block of identical shape and dtype.
    Gradients accumulate additively across backward passes until
    :meth:`LayerParams.zero_grads` is called.

    Args:
        name: A qualified name for the layer, unique within the owning model.
        kind: The :class:`LayerKind` of the layer.
        blocks: A dict of ``{block_name: array}``.
        config: Layer hyperparameters that are not trained, e.g. the number of heads.
    """

    __slots__ = ("name", "kind", "params", "grads", "config")

    def __init__(
        self,
        name: str,
        kind: LayerKind,
        blocks: Dict[str, np.ndarray],
        config: Optional[Dict[str, Any]] = None,
    ):
        if isinstance(kind, str):
            kind = LayerKind(kind)
        self.name = name
        self.kind = kind
        self.params: Dict[str, np.ndarray] = {
            key: np.array(value, copy=True) for key, value in blocks.items()
        }
        self.grads: Dict[str, np.ndarray] = {
            key: np.zeros_like(value) for key, value in self.params.items()
        }
        self.config: Dict[str, Any] = dict(config or {})

    @classmethod
    def parameter(cls, name: str, value: np.ndarray) -> "LayerParams":
        """Wraps a single free-standing array as a trainable block named ``"value"``."""
        return cls(name, LayerKind.PARAMETER, {"value": np.asarray(value)})

    def __getitem__(self, key: str) -> np.ndarray:
        return self.params[key]

    def __contains__(self, key: str) -> bool:
        return key in self.params

    def items(self) -> Iterator[Tuple[str, np.ndarray]]:
        return iter(self.params.items())

    @property
    def num_parameters(self) -> int:
        return int(sum(value.size for value in self.params.values()))

    def zero_grads(self) -> None:
        """Resets every gradient accumulator to zero."""
        for grad in self.grads.values():
            grad.fill(0)

    def accumulate(self, key: str, grad: np.ndarray) -> None:
        block = self.grads[key]
        if block.shape != np.shape(grad):
            raise ShapeError(
                f"Gradient for {self.name}.{key} has shape {np.shape(grad)},"
                f" expected {block.shape}."
            )
        block += grad

    def copy(self) -> "LayerParams":
        """Returns a deep copy, including the current gradients."""
        new = LayerParams(self.name, self.kind, self.params, self.config)
        for key, grad in self.grads.items():
            new.grads[key][:] = grad
        return new

    def load_state(self, other: "LayerParams") -> None:
        """Copies the parameter values of ``other`` into this layer in place."""
        if set(other.params) != set(self.params):
            raise ShapeError(
                f"Cannot load {other.name!r} into {self.name!r}: block names differ."
            )
        for key, value in other.params.items():
            if value.shape != self.params[key].shape:
                raise ShapeError(
                    f"Block {self.name}.{key} has shape {self.params[key].shape},"
                    f" got {value.shape}."
                )
            self.params[key][...] = value

    def __eq__(self, other: Any) -> bool:
        if other is self:
            return True
        if not isinstance(other, LayerParams):
            return False
        return (
            self.name == other.name
            and self.kind is other.kind
            and self.config == other.config
            and set(self.params) == set(other.params)
            and all(
                self.params[key].shape == other.params[key].shape
                and np.array_equal(self.params[key], other.params[key])
                for key in self.params
            )
        )

    def __repr__(self) -> str:
        shapes = ", ".join(f"{key}={value.shape}" for key, value in self.params.items())
        return f"{self.__class__.__name__}({self.name!r}, {self.kind.value}, {shapes})"
