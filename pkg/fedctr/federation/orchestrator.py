import logging
from dataclasses import replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..dataio import AdRecord, Dataset, TrainingSample
from ..evaluation.metrics import MetricError, auc, average_precision
from ..models import (
    AdModel,
    Aggregator,
    CtrPredictor,
    ModelConfig,
    ModelConfigError,
    UserModel,
    load_checkpoint,
    make_optimizer,
    save_checkpoint,
)
from ..nnkit import LayerParams
from ..privacy import LaplaceMechanism, PrivacyConfig
from .options import FederationOptions
from .parties import AdPlatform, BehaviorPlatform, UserServer
from .runner import EpochRecord, Runner, TrainingHistory
from .transport import InProcessTransport

logger = logging.getLogger(__name__)

ParameterGroups = Dict[str, List[LayerParams]]
FederationState = Dict[str, Dict[str, Dict[str, np.ndarray]]]

# Spawn keys separating the noise and training streams from the model streams.
NOISE_STREAMS = 101
TRAINING_STREAMS = 102


def fit_config(config: ModelConfig, dataset: Dataset) -> ModelConfig:
    """A validated copy of ``config`` with ``num_platforms`` taken from ``dataset``.

    Raises:
        ModelConfigError: If the vocabulary does not fit into the word tables.
    """
    config = replace(config, num_platforms=dataset.num_platforms)
    config.validate()
    if len(dataset.vocab) > config.vocab_size:
        raise ModelConfigError(
            f"The dataset vocabulary has {len(dataset.vocab)} tokens but"
            f" vocab_size is {config.vocab_size}."
        )
    return config


def build_models(
    config: ModelConfig,
) -> Tuple[List[UserModel], Aggregator, AdModel, CtrPredictor]:
    """Initializes the models of every party from ``config.seed``.

    Each model draws from its own child stream, so a federation and a
    centralized model built from the same config start from identical
    parameters.

    Returns:
        ``(user_models, aggregator, ad_model, predictor)``, with one user model
        per platform.
    """
    num_platforms = config.num_platforms
    streams = [
        np.random.default_rng(seed)
        for seed in np.random.SeedSequence(config.seed).spawn(num_platforms + 3)
    ]
    user_models = [
        UserModel(config, streams[i], name=f"user_model_{i + 1}")
        for i in range(num_platforms)
    ]
    aggregator = Aggregator(config, streams[num_platforms])
    ad_model = AdModel(config, streams[num_platforms + 1])
    predictor = CtrPredictor(config, streams[num_platforms + 2])
    return user_models, aggregator, ad_model, predictor


def snapshot(groups: ParameterGroups) -> FederationState:
    return {
        group: {layer.name: {k: v.copy() for k, v in layer.items()} for layer in layers}
        for group, layers in groups.items()
    }


def restore_snapshot(groups: ParameterGroups, state: FederationState) -> None:
    for group, layers in groups.items():
        for layer in layers:
            for key, value in state[group][layer.name].items():
                layer.params[key][...] = value


def evaluate_scores(scores: np.ndarray, labels: Sequence[int]) -> Tuple[float, float]:
    """``(auc, ap)`` of scores; ``(None, None)`` when a class is missing."""
    try:
        return auc(scores, labels), average_precision(scores, labels)
    except MetricError as error:
        logger.warning(f"Cannot evaluate: {error}")
        return None, None


class Federation:
    """A federation of one ad platform, one user server and K behavior platforms.

    All parties live in one process and talk through ``transport``. Party
    models are built from ``model_config.seed``; the noise streams are
    derived from ``privacy.seed`` and the shuffling and dropout streams from
    ``options.seed``.

    Args:
        dataset: The dataset. Behavior platform ``i`` receives only
            ``dataset.platform(i)``; the ad platform receives the ads.
        model_config: Model hyperparameters. ``num_platforms`` is taken from
            the dataset.
        privacy: The perturbation settings.
        options: Training and protocol options.
        transport: The transport. Defaults to an :class:`InProcessTransport`.
    """

    def __init__(
        self,
        dataset: Dataset,
        model_config: ModelConfig,
        privacy: Optional[PrivacyConfig] = None,
        options: Optional[FederationOptions] = None,
        transport: Optional[InProcessTransport] = None,
    ):
        if dataset.num_platforms < 1:
            raise ValueError("A federation needs at least one behavior platform.")
        self.privacy = privacy if privacy is not None else PrivacyConfig()
        self.privacy.validate()
        self.options = options if options is not None else FederationOptions()
        self.options.validate()
        self.config = fit_config(model_config, dataset)
        self.dataset = dataset
        self.transport = transport if transport is not None else InProcessTransport()

        num_platforms = dataset.num_platforms
        user_models, aggregator, ad_model, predictor = build_models(self.config)
        noise_seeds = np.random.SeedSequence(
            self.privacy.seed, spawn_key=(NOISE_STREAMS,)
        ).spawn(num_platforms + 1)
        train_seeds = np.random.SeedSequence(
            self.options.seed, spawn_key=(TRAINING_STREAMS,)
        ).spawn(num_platforms + 2)

        def optimizer():
            return make_optimizer(self.options.optimizer, self.options.learning_rate)

        self.platforms = [
            BehaviorPlatform(
                i,
                dataset.platform(i),
                user_models[i - 1],
                LaplaceMechanism(
                    self.privacy.lambda_ldp,
                    self.privacy.clip_norm,
                    np.random.default_rng(noise_seeds[i - 1]),
                ),
                optimizer(),
                self.options.tape_cache_capacity,
                seed=train_seeds[i - 1],
            )
            for i in range(1, num_platforms + 1)
        ]
        self.user_server = UserServer(
            aggregator,
            LaplaceMechanism(
                self.privacy.lambda_dp,
                self.privacy.clip_norm,
                np.random.default_rng(noise_seeds[num_platforms]),
            ),
            optimizer(),
            [platform.party_id for platform in self.platforms],
            self.transport,
            self.options.failure_policy,
            self.options.tape_cache_capacity,
        )
        self.ad_platform = AdPlatform(
            ad_model,
            predictor,
            dataset.ads,
            optimizer(),
            self.transport,
            seed=train_seeds[num_platforms],
        )
        self._shuffle_rng = np.random.default_rng(train_seeds[num_platforms + 1])
        self.steps = 0

        self.transport.register(self.ad_platform)
        self.transport.register(self.user_server)
        for platform in self.platforms:
            self.transport.register(platform)

    @property
    def num_platforms(self) -> int:
        return len(self.platforms)

    def platform(self, index: int) -> BehaviorPlatform:
        """The 1-based behavior platform ``index``."""
        if not 1 <= index <= self.num_platforms:
            raise IndexError(f"No behavior platform {index}.")
        return self.platforms[index - 1]

    def parameter_groups(self) -> ParameterGroups:
        groups = {
            "ad_platform": self.ad_platform.layers,
            "user_server": self.user_server.layers,
        }
        for platform in self.platforms:
            groups[str(platform.party_id)] = platform.layers
        return groups

    @property
    def num_parameters(self) -> int:
        return sum(
            layer.num_parameters
            for layers in self.parameter_groups().values()
            for layer in layers
        )

    def state(self) -> FederationState:
        """A copy of every party's parameters."""
        return snapshot(self.parameter_groups())

    def restore(self, state: FederationState) -> None:
        restore_snapshot(self.parameter_groups(), state)

    def save(self, path: str) -> None:
        """Writes every party's parameters to an HDF5 checkpoint."""
        save_checkpoint(path, self.parameter_groups())

    def load(self, path: str) -> None:
        """Loads a checkpoint written by :meth:`Federation.save` in place."""
        load_checkpoint(path, self.parameter_groups())

    def infer_ctr(
        self,
        user_id: int,
        candidates: Sequence[AdRecord],
        timestamp: Optional[int] = None,
    ) -> np.ndarray:
        """Click probabilities of one user for each candidate ad.

        Args:
            user_id: The user.
            candidates: The candidate ads.
            timestamp: If given, only behaviors before it are used.

        Returns:
            One probability per candidate, in candidate order.
        """
        return self.ad_platform.score_candidates(user_id, candidates, timestamp)

    def predict(self, samples: Sequence[TrainingSample]) -> np.ndarray:
        """Click probabilities of impressions, scored in batches through the protocol."""
        size = self.options.batch_size
        scores = [
            self.ad_platform.score(samples[start : start + size])
            for start in range(0, len(samples), size)
        ]
        return np.concatenate(scores) if scores else np.zeros(0)

    def evaluate(self, samples: Sequence[TrainingSample]) -> Tuple[float, float]:
        """``(auc, ap)`` of the federated predictions on ``samples``."""
        scores = self.predict(samples)
        return evaluate_scores(scores, [sample.label for sample in samples])

    def train_step(self, batch: Sequence[TrainingSample]) -> float:
        """Runs the full training protocol on one batch.

        Returns:
            The batch loss.
        """
        loss = self.ad_platform.train(batch)
        self.steps += 1
        return loss

    def train_epochs(
        self,
        train: Sequence[TrainingSample],
        epochs: int,
        val: Optional[Sequence[TrainingSample]] = None,
        eval_hook: Optional[Callable[[EpochRecord], None]] = None,
    ) -> TrainingHistory:
        """Trains on shuffled mini-batches for ``epochs`` epochs.

        If ``val`` is given, the validation AUC and AP are recorded after every
        epoch and the parameters of the best epoch are restored at the end.
        """
        runner = Runner(
            self.train_step,
            self.options.batch_size,
            self._shuffle_rng,
            evaluate=(lambda: self.evaluate(val)) if val else None,
            snapshot=self.state,
            restore=self.restore,
            progress=self.options.progress,
        )
        return runner.run(train, epochs, hook=eval_hook)

    def user_embeddings(
        self, user_ids: Sequence[int], timestamps: Optional[Sequence[int]] = None
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Runs the inference protocol for ``user_ids``.

        Returns:
            ``(local, aggregated)``: the local embeddings as received by the
            user server, shape ``(batch, K, dim)``, and the aggregated
            embeddings as received by the ad platform.
        """
        _, aggregated = self.ad_platform.request_user_embeddings(user_ids, timestamps)
        return self.user_server.observed_local.copy(), aggregated

    def encode_behavior(self, behavior) -> np.ndarray:
        """Encodes a behavior with the encoder of the platform it belongs to."""
        return self.platform(behavior.platform).model.encode_behavior(behavior)
