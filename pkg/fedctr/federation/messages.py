"""The message vocabulary exchanged between parties, and its wire encoding.

A frame is a little-endian ``u32`` byte count followed by that many bytes: a
fixed header ``{version: u8, kind: u8, request_id: 16 bytes, party: u16}``
and a kind-specific payload. Array dimensions are ``u32``; vectors are
``float64``; user ids are ``u32``; timestamps are ``i64``; flags are ``u8``.
``party`` is the sender, ``role_code << 14 | index``.
"""

import hashlib
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np

WIRE_VERSION = 1
REQUEST_ID_BYTES = 16

#: Timestamp meaning "no cutoff": every behavior of the user is used.
NO_CUTOFF = np.iinfo(np.int64).max


class ProtocolError(RuntimeError):
    pass


class FrameError(ValueError):
    pass


class Role(Enum):
    """The three party roles."""

    AD_PLATFORM: str = "ad_platform"
    USER_SERVER: str = "user_server"
    BEHAVIOR_PLATFORM: str = "behavior_platform"


_ROLE_CODES = {Role.AD_PLATFORM: 0, Role.USER_SERVER: 1, Role.BEHAVIOR_PLATFORM: 2}


@dataclass(frozen=True)
class PartyId:
    """Identifies a party. Behavior platforms have indices ``1 ... K``; the
    other roles have index 0.
    """

    role: Role
    index: int = 0

    def __post_init__(self):
        if self.role is Role.BEHAVIOR_PLATFORM:
            if not 1 <= self.index < 2**14:
                raise ValueError(f"Invalid behavior platform index {self.index}.")
        elif self.index != 0:
            raise ValueError(f"{self.role.value} must have index 0.")

    @classmethod
    def ad_platform(cls) -> "PartyId":
        return cls(Role.AD_PLATFORM)

    @classmethod
    def user_server(cls) -> "PartyId":
        return cls(Role.USER_SERVER)

    @classmethod
    def behavior_platform(cls, index: int) -> "PartyId":
        return cls(Role.BEHAVIOR_PLATFORM, index)

    @property
    def code(self) -> int:
        return _ROLE_CODES[self.role] << 14 | self.index

    @classmethod
    def from_code(cls, code: int) -> "PartyId":
        roles = {value: key for key, value in _ROLE_CODES.items()}
        role_code = code >> 14
        if role_code not in roles:
            raise FrameError(f"Unknown party code {code}.")
        return cls(roles[role_code], code & (2**14 - 1))

    def __str__(self) -> str:
        if self.role is Role.BEHAVIOR_PLATFORM:
            return f"{self.role.value}_{self.index}"
        return self.role.value


class MessageKind(Enum):
    EMBEDDING_REQUEST: str = "embedding-request"
    LOCAL_EMBEDDING: str = "local-embedding"
    AGGREGATED_EMBEDDING: str = "aggregated-embedding"
    USER_GRADIENT: str = "user-gradient"
    LOCAL_GRADIENT: str = "local-gradient"
    DISCARD_TAPE: str = "discard-tape"


def make_request_id(step: int, user_ids: Sequence[int], *columns: Sequence[int]) -> bytes:
    """A 16 byte request id: the step counter followed by a hash of the batch."""
    digest = hashlib.blake2b(digest_size=8)
    for column in (user_ids,) + columns:
        digest.update(np.asarray(column, dtype="<i8").tobytes())
    return int(step).to_bytes(8, "little") + digest.digest()


def _check_request_id(request_id: bytes) -> None:
    if not isinstance(request_id, bytes) or len(request_id) != REQUEST_ID_BYTES:
        raise ValueError(f"request_id must be {REQUEST_ID_BYTES} bytes.")


@dataclass(frozen=True, eq=False)
class EmbeddingRequest:
    """Asks for the embeddings of a batch of users, each at a point in time.

    Args:
        request_id: The id every reply and gradient of this batch carries.
        user_ids: The users, shape ``(batch,)``.
        timestamps: Only behaviors strictly earlier than these are used.
        training: Whether the embeddings take part in a training step.
    """

    request_id: bytes
    user_ids: np.ndarray
    timestamps: np.ndarray
    training: bool = False

    kind = MessageKind.EMBEDDING_REQUEST

    def __post_init__(self):
        _check_request_id(self.request_id)
        object.__setattr__(self, "user_ids", np.asarray(self.user_ids, dtype=np.uint32))
        object.__setattr__(self, "timestamps", np.asarray(self.timestamps, dtype=np.int64))
        if self.user_ids.shape != self.timestamps.shape or self.user_ids.ndim != 1:
            raise ValueError("user_ids and timestamps must be 1D arrays of equal length.")

    @property
    def batch_size(self) -> int:
        return self.user_ids.size


@dataclass(frozen=True, eq=False)
class LocalEmbedding:
    """A behavior platform's (perturbed) local user embeddings for a request."""

    request_id: bytes
    platform: int
    vectors: np.ndarray
    cold_start: np.ndarray

    kind = MessageKind.LOCAL_EMBEDDING

    def __post_init__(self):
        _check_request_id(self.request_id)
        object.__setattr__(self, "vectors", np.asarray(self.vectors, dtype=np.float64))
        object.__setattr__(self, "cold_start", np.asarray(self.cold_start, dtype=bool))
        if self.vectors.ndim != 2 or self.cold_start.shape != self.vectors.shape[:1]:
            raise ValueError("Expected (batch, dim) vectors and (batch,) cold-start flags.")


@dataclass(frozen=True, eq=False)
class AggregatedEmbedding:
    """The user server's (perturbed) aggregated user embeddings for a request."""

    request_id: bytes
    vectors: np.ndarray

    kind = MessageKind.AGGREGATED_EMBEDDING

    def __post_init__(self):
        _check_request_id(self.request_id)
        object.__setattr__(self, "vectors", np.asarray(self.vectors, dtype=np.float64))
        if self.vectors.ndim != 2:
            raise ValueError("Expected (batch, dim) vectors.")


@dataclass(frozen=True, eq=False)
class UserGradient:
    """Gradient of the batch loss with respect to the aggregated user embeddings."""

    request_id: bytes
    gradients: np.ndarray

    kind = MessageKind.USER_GRADIENT

    def __post_init__(self):
        _check_request_id(self.request_id)
        object.__setattr__(self, "gradients", np.asarray(self.gradients, dtype=np.float64))
        if self.gradients.ndim != 2:
            raise ValueError("Expected (batch, dim) gradients.")


@dataclass(frozen=True, eq=False)
class LocalGradient:
    """Gradient of the batch loss with respect to one platform's local embeddings."""

    request_id: bytes
    platform: int
    gradients: np.ndarray

    kind = MessageKind.LOCAL_GRADIENT

    def __post_init__(self):
        _check_request_id(self.request_id)
        object.__setattr__(self, "gradients", np.asarray(self.gradients, dtype=np.float64))
        if self.gradients.ndim != 2:
            raise ValueError("Expected (batch, dim) gradients.")


@dataclass(frozen=True)
class DiscardTape:
    """Tells a behavior platform to drop the forward tape of an aborted request.

    Carries no payload beyond the request id in the header.
    """

    request_id: bytes

    kind = MessageKind.DISCARD_TAPE

    def __post_init__(self):
        _check_request_id(self.request_id)


FedMessage = Union[
    EmbeddingRequest,
    LocalEmbedding,
    AggregatedEmbedding,
    UserGradient,
    LocalGradient,
    DiscardTape,
]

MESSAGE_TYPES = (
    EmbeddingRequest,
    LocalEmbedding,
    AggregatedEmbedding,
    UserGradient,
    LocalGradient,
    DiscardTape,
)

_KIND_CODES: Dict[MessageKind, int] = {
    cls.kind: code for code, cls in enumerate(MESSAGE_TYPES, start=1)
}
_TYPES_BY_CODE = {code: cls for code, cls in enumerate(MESSAGE_TYPES, start=1)}

HEADER_DTYPE = np.dtype(
    [
        ("version", "u1"),
        ("kind", "u1"),
        ("request_id", f"V{REQUEST_ID_BYTES}"),
        ("party", "<u2"),
    ]
)


def message_arrays(message: FedMessage) -> Dict[str, np.ndarray]:
    """The array-valued fields of a message."""
    if isinstance(message, EmbeddingRequest):
        return {"user_ids": message.user_ids, "timestamps": message.timestamps}
    if isinstance(message, LocalEmbedding):
        return {"vectors": message.vectors, "cold_start": message.cold_start}
    if isinstance(message, AggregatedEmbedding):
        return {"vectors": message.vectors}
    if isinstance(message, DiscardTape):
        return {}
    return {"gradients": message.gradients}


def _u32(*values: int) -> bytes:
    return np.array(values, dtype="<u4").tobytes()


def _matrix(array: np.ndarray) -> bytes:
    return _u32(*array.shape) + np.ascontiguousarray(array, dtype="<f8").tobytes()


def encode_frame(message: FedMessage, sender: PartyId) -> bytes:
    """Serializes ``message``, sent by ``sender``, into a length-prefixed frame."""
    if not isinstance(message, MESSAGE_TYPES):
        raise FrameError(f"Cannot encode {type(message).__name__}.")
    header = np.zeros((), dtype=HEADER_DTYPE)
    header["version"] = WIRE_VERSION
    header["kind"] = _KIND_CODES[message.kind]
    header["request_id"] = np.void(message.request_id)
    header["party"] = sender.code
    if isinstance(message, EmbeddingRequest):
        payload = (
            _u32(message.batch_size, int(message.training))
            + message.user_ids.astype("<u4").tobytes()
            + message.timestamps.astype("<i8").tobytes()
        )
    elif isinstance(message, LocalEmbedding):
        payload = (
            _u32(message.platform)
            + _matrix(message.vectors)
            + message.cold_start.astype("u1").tobytes()
        )
    elif isinstance(message, AggregatedEmbedding):
        payload = _matrix(message.vectors)
    elif isinstance(message, UserGradient):
        payload = _matrix(message.gradients)
    elif isinstance(message, DiscardTape):
        payload = b""
    else:
        payload = _u32(message.platform) + _matrix(message.gradients)
    body = header.tobytes() + payload
    return _u32(len(body)) + body


class _Reader:
    def __init__(self, buffer: bytes, offset: int = 0):
        self.buffer = buffer
        self.offset = offset

    def read(self, dtype: str, count: int) -> np.ndarray:
        dtype = np.dtype(dtype)
        end = self.offset + dtype.itemsize * count
        if end > len(self.buffer):
            raise FrameError("Truncated frame.")
        values = np.frombuffer(self.buffer, dtype=dtype, count=count, offset=self.offset)
        self.offset = end
        return values.copy()

    def u32(self, count: int = 1) -> List[int]:
        return [int(v) for v in self.read("<u4", count)]

    def matrix(self) -> np.ndarray:
        rows, cols = self.u32(2)
        return self.read("<f8", rows * cols).astype(np.float64).reshape(rows, cols)


def decode_frame(frame: bytes) -> Tuple[FedMessage, PartyId]:
    """Inverse of :func:`encode_frame`.

    Returns:
        ``(message, sender)``
    """
    reader = _Reader(frame)
    (length,) = reader.u32()
    if length != len(frame) - 4:
        raise FrameError(f"Frame declares {length} bytes but holds {len(frame) - 4}.")
    header = reader.read(HEADER_DTYPE, 1)[0]
    if int(header["version"]) != WIRE_VERSION:
        raise FrameError(f"Unsupported wire version {int(header['version'])}.")
    kind = int(header["kind"])
    if kind not in _TYPES_BY_CODE:
        raise FrameError(f"Unknown message kind {kind}.")
    request_id = header["request_id"].tobytes()
    sender = PartyId.from_code(int(header["party"]))
    cls = _TYPES_BY_CODE[kind]
    if cls is EmbeddingRequest:
        batch, training = reader.u32(2)
        message = EmbeddingRequest(
            request_id,
            reader.read("<u4", batch),
            reader.read("<i8", batch),
            training=bool(training),
        )
    elif cls is LocalEmbedding:
        (platform,) = reader.u32()
        vectors = reader.matrix()
        cold_start = reader.read("u1", vectors.shape[0]).astype(bool)
        message = LocalEmbedding(request_id, platform, vectors, cold_start)
    elif cls is LocalGradient:
        (platform,) = reader.u32()
        message = LocalGradient(request_id, platform, reader.matrix())
    elif cls is DiscardTape:
        message = DiscardTape(request_id)
    else:
        message = cls(request_id, reader.matrix())
    if reader.offset != len(frame):
        raise FrameError(f"{len(frame) - reader.offset} trailing bytes in frame.")
    return message, sender
