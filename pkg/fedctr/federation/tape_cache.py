import logging
from collections import OrderedDict
from typing import Any

from .messages import ProtocolError

logger = logging.getLogger(__name__)


class TapeCache:
    """Forward state a party keeps until the matching gradient message arrives.

    Entries are keyed by request id and consumed exactly once. When more than
    ``capacity`` requests are outstanding, the least recently stored entry is
    evicted.

    Args:
        capacity: Maximum number of outstanding requests.
        owner: Name of the owning party, used in log and error messages.
    """

    def __init__(self, capacity: int = 64, owner: str = ""):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1 (got {capacity}).")
        self.capacity = capacity
        self.owner = owner
        self._entries: "OrderedDict[bytes, Any]" = OrderedDict()

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, request_id: bytes) -> bool:
        return request_id in self._entries

    def put(self, request_id: bytes, entry: Any) -> None:
        if request_id in self._entries:
            raise ProtocolError(
                f"{self.owner}: request {request_id.hex()} is already outstanding."
            )
        self._entries[request_id] = entry
        while len(self._entries) > self.capacity:
            evicted, _ = self._entries.popitem(last=False)
            logger.warning(f"{self.owner}: evicted the tape of request {evicted.hex()}.")

    def take(self, request_id: bytes) -> Any:
        """Removes and returns the entry of ``request_id``.

        Raises:
            ProtocolError: If the request is unknown or was evicted.
        """
        try:
            return self._entries.pop(request_id)
        except KeyError:
            raise ProtocolError(
                f"{self.owner}: no tape for request {request_id.hex()}"
                " (unknown, already consumed, or evicted)."
            ) from None

    def discard(self, request_id: bytes) -> bool:
        """Drops the entry of ``request_id`` if present. Returns whether it was."""
        if self._entries.pop(request_id, None) is None:
            return False
        logger.debug(f"{self.owner}: discarded the tape of request {request_id.hex()}.")
        return True

    def clear(self) -> None:
        self._entries.clear()
