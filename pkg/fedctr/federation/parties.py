"""The three party roles of a federation.

Each party owns its models, optimizer, noise mechanism and outstanding
forward tapes. Parties talk to each other only through a transport, by
exchanging the messages of :mod:`fedctr.federation.messages`.
"""

import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..dataio import AdRecord, PlatformBehaviors, TrainingSample
from ..models import AdModel, Aggregator, CtrPredictor, Optimizer, UserModel, mean_bce_loss
from ..nnkit import ForwardTape, LayerParams, seed_sequence
from ..privacy import LaplaceMechanism
from .messages import (
    NO_CUTOFF,
    AggregatedEmbedding,
    DiscardTape,
    EmbeddingRequest,
    FedMessage,
    LocalEmbedding,
    LocalGradient,
    PartyId,
    ProtocolError,
    UserGradient,
    make_request_id,
)
from .options import FailurePolicy
from .tape_cache import TapeCache
from .transport import DeliveryError, InProcessTransport

logger = logging.getLogger(__name__)


def _unexpected(party: PartyId, message: FedMessage, sender: PartyId) -> ProtocolError:
    return ProtocolError(
        f"{party} does not accept {message.kind.value} messages (sent by {sender})."
    )


class BehaviorPlatform:
    """A behavior platform: holds one behavior log and the user model trained on it.

    On an :class:`EmbeddingRequest` it encodes each requested user's behaviors
    before the request timestamp and replies with the LDP-perturbed local
    embeddings. On a :class:`LocalGradient` it back-propagates through the
    cached forward tape of the matching request and updates its user model.
    A :class:`DiscardTape` drops that tape without an update.

    Args:
        index: The 1-based platform index.
        behaviors: The platform's behavior log.
        model: The platform's user model.
        mechanism: The local perturbation, applied to every outgoing embedding.
        optimizer: The optimizer of the user model.
        tape_cache_capacity: Maximum number of outstanding training requests.
        seed: Seed of the dropout streams.
    """

    def __init__(
        self,
        index: int,
        behaviors: PlatformBehaviors,
        model: UserModel,
        mechanism: LaplaceMechanism,
        optimizer: Optimizer,
        tape_cache_capacity: int = 64,
        seed=None,
    ):
        self.party_id = PartyId.behavior_platform(index)
        self.index = index
        self.behaviors = behaviors
        self.model = model
        self.mechanism = mechanism
        self.optimizer = optimizer
        self.tapes = TapeCache(tape_cache_capacity, owner=str(self.party_id))
        self.available = True
        self._seeds = seed_sequence(seed)

    @property
    def layers(self) -> List[LayerParams]:
        return self.model.layers

    def histories(self, user_ids: Sequence[int], timestamps: Sequence[int]) -> List[list]:
        """The behaviors of each user strictly before the matching timestamp."""
        return [
            self.behaviors.history(int(user), None if t == NO_CUTOFF else int(t))
            for user, t in zip(user_ids, timestamps)
        ]

    def handle(self, message: FedMessage, sender: PartyId) -> Optional[FedMessage]:
        if not self.available:
            raise DeliveryError(f"{self.party_id} is unavailable.")
        if isinstance(message, EmbeddingRequest):
            return self._embed(message)
        if isinstance(message, LocalGradient):
            self._update(message)
            return None
        if isinstance(message, DiscardTape):
            self.tapes.discard(message.request_id)
            return None
        raise _unexpected(self.party_id, message, sender)

    def _embed(self, request: EmbeddingRequest) -> LocalEmbedding:
        histories = self.histories(request.user_ids, request.timestamps)
        if request.training:
            tape = ForwardTape(training=True, seed=self._seeds.spawn(1)[0])
            vectors = self.model.forward_batch(histories, tape)
            self.tapes.put(request.request_id, tape)
        else:
            vectors = self.model.forward_batch(histories)
        cold_start = [not self.model.prepare_history(history) for history in histories]
        return LocalEmbedding(
            request.request_id, self.index, self.mechanism(vectors), cold_start
        )

    def _update(self, message: LocalGradient) -> None:
        if message.platform != self.index:
            raise ProtocolError(
                f"{self.party_id} received the gradient of platform {message.platform}."
            )
        tape = self.tapes.take(message.request_id)
        self.model.backward_batch(tape, message.gradients)
        self.optimizer.step(self.model.layers)


class UserServer:
    """The user server: aggregates local user embeddings and routes their gradients.

    Args:
        aggregator: The aggregation model.
        mechanism: The perturbation applied to every outgoing aggregated embedding.
        optimizer: The optimizer of the aggregator.
        platforms: The behavior platforms to query, in platform order.
        transport: The transport used to reach the platforms.
        failure_policy: What to do when a platform does not respond.
        tape_cache_capacity: Maximum number of outstanding training requests.
    """

    def __init__(
        self,
        aggregator: Aggregator,
        mechanism: LaplaceMechanism,
        optimizer: Optimizer,
        platforms: Sequence[PartyId],
        transport: InProcessTransport,
        failure_policy: FailurePolicy = FailurePolicy.ABORT,
        tape_cache_capacity: int = 64,
    ):
        self.party_id = PartyId.user_server()
        self.aggregator = aggregator
        self.mechanism = mechanism
        self.optimizer = optimizer
        self.platforms = list(platforms)
        self.transport = transport
        self.failure_policy = FailurePolicy(
            getattr(failure_policy, "value", failure_policy)
        )
        self.tapes = TapeCache(tape_cache_capacity, owner=str(self.party_id))
        # The local embeddings of the last request, as received.
        self.observed_local: Optional[np.ndarray] = None
        self.observed_cold_start: Optional[np.ndarray] = None

    @property
    def layers(self) -> List[LayerParams]:
        return self.aggregator.layers

    def handle(self, message: FedMessage, sender: PartyId) -> Optional[FedMessage]:
        if isinstance(message, EmbeddingRequest):
            return self._aggregate(message)
        if isinstance(message, UserGradient):
            self._route_gradients(message)
            return None
        raise _unexpected(self.party_id, message, sender)

    def _collect(self, request: EmbeddingRequest) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        replied: List[PartyId] = []
        try:
            return self._collect_from(request, replied)
        except ProtocolError:
            if request.training:
                self._discard(request.request_id, replied)
            raise

    def _collect_from(
        self, request: EmbeddingRequest, replied: List[PartyId]
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        num_platforms = len(self.platforms)
        local = np.zeros((request.batch_size, num_platforms, self.aggregator.dim))
        cold_start = np.zeros((request.batch_size, num_platforms), dtype=bool)
        responders = np.ones(num_platforms, dtype=bool)
        for k, platform in enumerate(self.platforms):
            try:
                reply = self.transport.send(self.party_id, platform, request).reply
            except DeliveryError as error:
                if self.failure_policy is FailurePolicy.ABORT:
                    raise ProtocolError(f"{platform} did not respond: {error}") from error
                logger.warning(f"{platform} did not respond; aggregating without it.")
                responders[k] = False
                continue
            replied.append(platform)
            if not isinstance(reply, LocalEmbedding):
                raise ProtocolError(f"{platform} did not reply with a local embedding.")
            if reply.request_id != request.request_id:
                raise ProtocolError(
                    f"{platform} replied to request {reply.request_id.hex()}"
                    f" instead of {request.request_id.hex()}."
                )
            local[:, k] = reply.vectors
            cold_start[:, k] = reply.cold_start
        if not responders.any():
            raise ProtocolError("No behavior platform responded.")
        return local, cold_start, responders

    def _discard(self, request_id: bytes, platforms: Sequence[PartyId]) -> None:
        for platform in platforms:
            try:
                self.transport.send(self.party_id, platform, DiscardTape(request_id))
            except DeliveryError:
                logger.warning(f"{platform} did not receive the discard notice.")
        if platforms:
            logger.info(
                f"Aborted request {request_id.hex()}; discarded the tapes of"
                f" {len(platforms)} platform(s)."
            )

    def _aggregate(self, request: EmbeddingRequest) -> AggregatedEmbedding:
        local, cold_start, responders = self._collect(request)
        self.observed_local = local
        self.observed_cold_start = cold_start
        tape = ForwardTape() if request.training else None
        u = self.aggregator.aggregate_batch(local, tape, responders)
        if request.training:
            self.tapes.put(request.request_id, (tape, responders))
        return AggregatedEmbedding(request.request_id, self.mechanism(u))

    def _route_gradients(self, message: UserGradient) -> None:
        tape, responders = self.tapes.take(message.request_id)
        grad_local = self.aggregator.backward_batch(tape, message.gradients)
        self.optimizer.step(self.aggregator.layers)
        for k, platform in enumerate(self.platforms):
            if not responders[k]:
                continue
            gradient = LocalGradient(message.request_id, platform.index, grad_local[:, k])
            self.transport.send(self.party_id, platform, gradient)


class AdPlatform:
    """The ad platform: holds the ads, the click labels, the ad model and the predictor.

    It starts every inference and training step by asking the user server for
    the user embeddings of a batch.

    Args:
        ad_model: The ad model.
        predictor: The CTR predictor.
        ads: Ad records keyed by ad id.
        optimizer: The optimizer of the ad model and the predictor.
        transport: The transport used to reach the user server.
        seed: Seed of the dropout streams.
    """

    def __init__(
        self,
        ad_model: AdModel,
        predictor: CtrPredictor,
        ads: Dict[int, AdRecord],
        optimizer: Optimizer,
        transport: InProcessTransport,
        seed=None,
    ):
        self.party_id = PartyId.ad_platform()
        self.ad_model = ad_model
        self.predictor = predictor
        self.ads = ads
        self.optimizer = optimizer
        self.transport = transport
        self.requests = 0
        self._seeds = seed_sequence(seed)

    @property
    def layers(self) -> List[LayerParams]:
        return self.ad_model.layers + self.predictor.layers

    def handle(self, message: FedMessage, sender: PartyId) -> Optional[FedMessage]:
        raise _unexpected(self.party_id, message, sender)

    def ad(self, ad_id: int) -> AdRecord:
        """The record of ``ad_id``; unknown ads have neither title nor description."""
        return self.ads.get(ad_id, AdRecord(ad_id, (), ()))

    def request_user_embeddings(
        self,
        user_ids: Sequence[int],
        timestamps: Optional[Sequence[int]] = None,
        training: bool = False,
    ) -> Tuple[bytes, np.ndarray]:
        """Asks the user server for the aggregated embeddings of ``user_ids``.

        Returns:
            ``(request_id, embeddings)``
        """
        if timestamps is None:
            timestamps = np.full(len(user_ids), NO_CUTOFF, dtype=np.int64)
        request_id = make_request_id(self.requests, user_ids, timestamps)
        self.requests += 1
        request = EmbeddingRequest(request_id, user_ids, timestamps, training=training)
        reply = self.transport.send(self.party_id, PartyId.user_server(), request).reply
        if not isinstance(reply, AggregatedEmbedding) or reply.request_id != request_id:
            raise ProtocolError("The user server did not answer the embedding request.")
        return request_id, reply.vectors

    def score_candidates(
        self, user_id: int, candidates: Sequence[AdRecord], timestamp: Optional[int] = None
    ) -> np.ndarray:
        """Click probabilities of one user for each candidate ad."""
        timestamps = None if timestamp is None else [timestamp]
        _, u = self.request_user_embeddings([user_id], timestamps)
        if not len(candidates):
            return np.zeros(0)
        d = self.ad_model.forward_batch(candidates)
        return self.predictor.predict_batch(np.repeat(u, len(candidates), axis=0), d)

    def score(self, samples: Sequence[TrainingSample]) -> np.ndarray:
        """Click probabilities of a batch of impressions."""
        user_ids = [sample.user_id for sample in samples]
        timestamps = [sample.timestamp for sample in samples]
        _, u = self.request_user_embeddings(user_ids, timestamps)
        d = self.ad_model.forward_batch([self.ad(sample.ad_id) for sample in samples])
        return self.predictor.predict_batch(u, d)

    def train(self, samples: Sequence[TrainingSample]) -> float:
        """One training step on a batch of impressions.

        Updates the ad model and the predictor, then sends the gradient of the
        user embeddings to the user server, which continues the backward pass.

        Returns:
            The mean binary cross-entropy of the batch.
        """
        if not len(samples):
            raise ValueError("Cannot train on an empty batch.")
        user_ids = [sample.user_id for sample in samples]
        timestamps = [sample.timestamp for sample in samples]
        labels = np.array([sample.label for sample in samples])
        request_id, u = self.request_user_embeddings(user_ids, timestamps, training=True)

        ad_tape = ForwardTape(training=True, seed=self._seeds.spawn(1)[0])
        d = self.ad_model.forward_batch([self.ad(s.ad_id) for s in samples], ad_tape)
        predictor_tape = ForwardTape()
        y_hat = self.predictor.predict_batch(u, d, predictor_tape)
        loss, grad_y_hat = mean_bce_loss(y_hat, labels)

        grad_u, grad_d = self.predictor.backward_batch(predictor_tape, grad_y_hat)
        self.ad_model.backward_batch(ad_tape, grad_d)
        self.optimizer.step(self.layers)
        self.transport.send(
            self.party_id, PartyId.user_server(), UserGradient(request_id, grad_u)
        )
        return loss
