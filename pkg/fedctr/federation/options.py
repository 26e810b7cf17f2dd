from dataclasses import dataclass
from enum import Enum
from typing import Optional, Union

from ..models.options import OptimizerKind


class FederationOptionsError(ValueError):
    pass


class FailurePolicy(Enum):
    """What the user server does when a behavior platform does not respond."""

    ABORT: str = "abort"
    RENORMALIZE: str = "renormalize"


@dataclass
class FederationOptions:
    """Options for federated training and inference.

    Args:
        batch_size: Number of impressions per training step and per inference
            request.
        learning_rate: The optimizer step size, shared by all parties.
        optimizer: ``"sgd"`` or ``"adam"``. Every party runs its own instance.
        failure_policy: ``"abort"`` raises on a non-responding behavior platform;
            ``"renormalize"`` aggregates over the platforms that responded.
        tape_cache_capacity: Maximum number of outstanding training requests whose
            forward tapes a party keeps.
        progress: Show a progress bar while training.
        seed: Seed of mini-batch shuffling and of the parties' dropout streams.
    """

    batch_size: int = 30
    learning_rate: float = 1e-3
    optimizer: Union[OptimizerKind, str] = OptimizerKind.ADAM
    failure_policy: Union[FailurePolicy, str] = FailurePolicy.ABORT
    tape_cache_capacity: int = 64
    progress: bool = True
    seed: Optional[int] = None

    def validate(self) -> None:
        if int(self.batch_size) != self.batch_size or self.batch_size < 1:
            raise FederationOptionsError(
                f"batch_size must be a positive integer (got {self.batch_size})."
            )
        if not self.learning_rate > 0:
            raise FederationOptionsError(
                f"learning_rate must be > 0 (got {self.learning_rate})."
            )
        if self.tape_cache_capacity < 1:
            raise FederationOptionsError(
                f"tape_cache_capacity must be >= 1 (got {self.tape_cache_capacity})."
            )
        try:
            self.optimizer = OptimizerKind(
                str(getattr(self.optimizer, "value", self.optimizer)).lower()
            )
        except ValueError:
            raise FederationOptionsError(
                f"optimizer must be 'sgd' or 'adam' (got {self.optimizer!r})."
            )
        try:
            self.failure_policy = FailurePolicy(
                str(getattr(self.failure_policy, "value", self.failure_policy)).lower()
            )
        except ValueError:
            raise FederationOptionsError(
                "failure_policy must be 'abort' or 'renormalize'"
                f" (got {self.failure_policy!r})."
            )
