import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .messages import (
    MESSAGE_TYPES,
    EmbeddingRequest,
    FedMessage,
    PartyId,
    encode_frame,
    message_arrays,
)

logger = logging.getLogger(__name__)


class UnknownPartyError(KeyError):
    pass


class DeliveryError(RuntimeError):
    """Raised by a party that cannot handle a message, e.g. because it is offline."""


@dataclass(frozen=True)
class DeliveryReceipt:
    """The outcome of :meth:`InProcessTransport.send`.

    Args:
        sequence: Position of the message in the transport's delivery order.
        sender: The sending party.
        receiver: The receiving party.
        reply: The synchronous reply of the receiver, if any.
    """

    sequence: int
    sender: PartyId
    receiver: PartyId
    reply: Optional[FedMessage] = None


@dataclass(frozen=True)
class MessageLogEntry:
    """What a recording transport keeps of one message: never the values."""

    sequence: int
    kind: str
    sender: str
    receiver: str
    request_id: str
    arrays: Tuple[Tuple[str, str, Tuple[int, ...]], ...]
    nbytes: int


class InProcessTransport:
    """Synchronous delivery between parties living in one process.

    ``send`` calls the receiver's ``handle(message, sender)`` immediately and
    returns its reply in the receipt. Replies count as messages from the
    receiver back to the sender. Delivery order is the call order.
    """

    def __init__(self):
        self._parties: Dict[PartyId, object] = {}
        self._sequence = 0

    def register(self, party) -> None:
        self._parties[party.party_id] = party

    @property
    def parties(self) -> List[PartyId]:
        return list(self._parties)

    @property
    def message_count(self) -> int:
        return self._sequence

    def _check(self, party_id: PartyId) -> None:
        if party_id not in self._parties:
            raise UnknownPartyError(f"Unknown party {party_id}.")

    def _deliver(self, sender: PartyId, receiver: PartyId, message: FedMessage) -> int:
        sequence = self._sequence
        self._sequence += 1
        return sequence

    def send(
        self, sender: PartyId, receiver: PartyId, message: FedMessage
    ) -> DeliveryReceipt:
        """Delivers ``message`` from ``sender`` to ``receiver``.

        Raises:
            UnknownPartyError: If either party is not registered.
            DeliveryError: If the receiver cannot handle the message.
        """
        self._check(sender)
        self._check(receiver)
        if not isinstance(message, MESSAGE_TYPES):
            raise TypeError(f"Not a federation message: {type(message).__name__}.")
        sequence = self._deliver(sender, receiver, message)
        reply = self._parties[receiver].handle(message, sender)
        if reply is not None:
            self._deliver(receiver, sender, reply)
        return DeliveryReceipt(sequence, sender, receiver, reply)


class RecordingTransport(InProcessTransport):
    """An :class:`InProcessTransport` that logs every message for auditing.

    Each message is encoded to its wire frame to measure its size. The log
    keeps kinds, parties, array dtypes and shapes, and byte counts.
    """

    def __init__(self):
        super().__init__()
        self.log: List[MessageLogEntry] = []

    def _deliver(self, sender, receiver, message):
        sequence = super()._deliver(sender, receiver, message)
        frame = encode_frame(message, sender)
        arrays = tuple(
            (name, array.dtype.str, tuple(array.shape))
            for name, array in message_arrays(message).items()
        )
        entry = MessageLogEntry(
            sequence,
            message.kind.value,
            str(sender),
            str(receiver),
            message.request_id.hex(),
            arrays,
            len(frame),
        )
        self.log.append(entry)
        logger.debug(
            f"#{sequence} {entry.kind} {entry.sender} -> {entry.receiver}"
            f" ({entry.nbytes} bytes)"
        )
        return sequence

    def clear(self) -> None:
        self.log.clear()

    @property
    def total_bytes(self) -> int:
        return sum(entry.nbytes for entry in self.log)


# Array fields each message kind may carry, with their allowed dtypes.
_ALLOWED_ARRAYS = {
    EmbeddingRequest.kind.value: {"user_ids": ("<u4", "|u4"), "timestamps": ("<i8",)},
    "local-embedding": {"vectors": ("<f8",), "cold_start": ("|b1",)},
    "aggregated-embedding": {"vectors": ("<f8",)},
    "user-gradient": {"gradients": ("<f8",)},
    "local-gradient": {"gradients": ("<f8",)},
    "discard-tape": {},
}


@dataclass
class AuditReport:
    messages: int = 0
    violations: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations


def audit_privacy_boundary(log: List[MessageLogEntry]) -> AuditReport:
    """Checks a transport log for anything other than embeddings, gradients and
    embedding requests.

    Only the six message kinds are allowed. Requests may carry user ids and
    timestamps and discard notices carry nothing. Every other array must be a
    float64 matrix, or the boolean cold-start flags. Any other field, such as
    token ids or text, is a violation.
    """
    report = AuditReport(messages=len(log))
    for entry in log:
        allowed = _ALLOWED_ARRAYS.get(entry.kind)
        if allowed is None:
            report.violations.append(f"#{entry.sequence}: unknown kind {entry.kind!r}.")
            continue
        for name, dtype, shape in entry.arrays:
            if name not in allowed:
                report.violations.append(
                    f"#{entry.sequence}: unexpected field {name!r} in {entry.kind}."
                )
            elif dtype not in allowed[name]:
                report.violations.append(
                    f"#{entry.sequence}: field {name!r} of {entry.kind} has dtype {dtype}."
                )
            elif name in ("vectors", "gradients") and len(shape) != 2:
                report.violations.append(
                    f"#{entry.sequence}: field {name!r} of {entry.kind} is not a matrix."
                )
    return report
