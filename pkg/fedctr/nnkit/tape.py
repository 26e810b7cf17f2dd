from typing import Any, Dict, List, NamedTuple, Optional

import numpy as np

from .params import LayerParams


class TapeError(RuntimeError):
    pass


def seed_sequence(seed=None) -> np.random.SeedSequence:
    """Wraps ``seed`` in a :class:`numpy.random.SeedSequence` unless it already is one."""
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


class TapeRecord(NamedTuple):
    """One cached forward operation.

    op: The name of the operation, e.g. ``"dense"``.
    layer: The :class:`LayerParams` used by the operation, or ``None``.
    cache: Intermediate activations needed by the backward pass.
    """

    op: str
    layer: Optional[LayerParams]
    cache: Dict[str, Any]


class ForwardTape:
    """An ordered record of cached activations produced by a forward pass.

    Backward passes replay the tape in reverse through a :class:`TapeCursor`,
    which visits every record exactly once. Once :meth:`ForwardTape.freeze`
    has been called no further records may be appended.

    Args:
        training: Whether stochastic layers (dropout) are active.
        seed: Seed for the dropout mask stream.
    """

    def __init__(self, training: bool = False, seed: Optional[int] = None):
        self.training = training
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self._records: List[TapeRecord] = []
        self._frozen = False

    @property
    def frozen(self) -> bool:
        return self._frozen

    def __len__(self) -> int:
        return len(self._records)

    def records(self) -> List[TapeRecord]:
        return list(self._records)

    def push(self, op: str, layer: Optional[LayerParams], **cache) -> None:
        if self._frozen:
            raise TapeError("Cannot record on a frozen tape.")
        self._records.append(TapeRecord(op, layer, cache))

    def freeze(self) -> "ForwardTape":
        self._frozen = True
        return self

    def replay(self) -> "TapeCursor":
        """Freezes the tape and returns a cursor positioned at the last record."""
        self.freeze()
        return TapeCursor(self._records)

    def attention_weights(self, op: Optional[str] = None) -> List[np.ndarray]:
        """Returns the attention weights cached by attention-style operations,
        in forward order, optionally restricted to a single operation name.
        """
        weights = []
        for record in self._records:
            if op is not None and record.op != op:
                continue
            if "weights" in record.cache:
                weights.append(record.cache["weights"])
        return weights


class TapeCursor:
    """Reverse iterator over the records of a frozen :class:`ForwardTape`."""

    def __init__(self, records: List[TapeRecord]):
        self._records = records
        self._position = len(records)

    @property
    def remaining(self) -> int:
        return self._position

    def pop(self, op: str, layer: Optional[LayerParams] = None) -> TapeRecord:
        """Consumes the most recent unconsumed record.

        Raises:
            TapeError: If the tape is exhausted or the record does not match
                the expected operation and layer.
        """
        if self._position == 0:
            raise TapeError(f"Tape exhausted while expecting {op!r}.")
        record = self._records[self._position - 1]
        if record.op != op:
            raise TapeError(f"Tape mismatch: expected {op!r}, found {record.op!r}.")
        if layer is not None and record.layer is not layer:
            found = None if record.layer is None else record.layer.name
            raise TapeError(
                f"Tape mismatch for {op!r}: expected layer {layer.name!r},"
                f" found {found!r}."
            )
        self._position -= 1
        return record

    def peek(self) -> Optional[TapeRecord]:
        if self._position == 0:
            return None
        return self._records[self._position - 1]

    def finish(self) -> None:
        """Asserts that every record has been consumed."""
        if self._position:
            raise TapeError(f"{self._position} tape record(s) were not consumed.")
