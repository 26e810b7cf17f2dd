from typing import List, Optional, Sequence

import numpy as np

from ..dataio import AdRecord, Dataset, TrainingSample
from ..models import ModelConfig, OptimizerKind, make_optimizer, mean_bce_loss
from ..nnkit import ForwardTape, LayerParams, seed_sequence
from .orchestrator import build_models, fit_config


class CentralizedModel:
    """The four models of a federation composed in one process, without noise.

    It runs the same forward and backward code as the parties, with a single
    optimizer over every parameter, and serves as the reference for the
    federated protocol.

    Args:
        dataset: The dataset, with every behavior log visible.
        model_config: Model hyperparameters. ``num_platforms`` is taken from
            the dataset.
        learning_rate: The optimizer step size.
        optimizer: ``"sgd"`` or ``"adam"``.
        seed: Seed of the dropout streams.
    """

    def __init__(
        self,
        dataset: Dataset,
        model_config: ModelConfig,
        learning_rate: float = 1e-3,
        optimizer=OptimizerKind.SGD,
        seed: Optional[int] = None,
    ):
        self.dataset = dataset
        self.config = fit_config(model_config, dataset)
        (
            self.user_models,
            self.aggregator,
            self.ad_model,
            self.predictor,
        ) = build_models(self.config)
        self.optimizer = make_optimizer(optimizer, learning_rate)
        self._seeds = seed_sequence(seed)

    @property
    def layers(self) -> List[LayerParams]:
        layers = self.ad_model.layers + self.predictor.layers + self.aggregator.layers
        for model in self.user_models:
            layers += model.layers
        return layers

    def _ad(self, ad_id: int) -> AdRecord:
        return self.dataset.ads.get(ad_id, AdRecord(ad_id, (), ()))

    def _histories(self, platform, samples: Sequence[TrainingSample]) -> List[list]:
        return [platform.history(s.user_id, s.timestamp) for s in samples]

    def _tape(self, training: bool) -> Optional[ForwardTape]:
        if not training:
            return None
        return ForwardTape(training=True, seed=self._seeds.spawn(1)[0])

    def forward(self, samples: Sequence[TrainingSample], training: bool = False):
        user_tapes = [self._tape(training) for _ in self.user_models]
        local = np.stack(
            [
                model.forward_batch(self._histories(platform, samples), tape)
                for model, platform, tape in zip(
                    self.user_models, self.dataset.platforms, user_tapes
                )
            ],
            axis=1,
        )
        aggregator_tape = ForwardTape() if training else None
        u = self.aggregator.aggregate_batch(local, aggregator_tape)
        ad_tape = self._tape(training)
        d = self.ad_model.forward_batch([self._ad(s.ad_id) for s in samples], ad_tape)
        predictor_tape = ForwardTape() if training else None
        y_hat = self.predictor.predict_batch(u, d, predictor_tape)
        return y_hat, (user_tapes, aggregator_tape, ad_tape, predictor_tape)

    def predict(self, samples: Sequence[TrainingSample]) -> np.ndarray:
        return self.forward(samples)[0]

    def train_step(self, batch: Sequence[TrainingSample]) -> float:
        labels = np.array([sample.label for sample in batch])
        y_hat, (user_tapes, aggregator_tape, ad_tape, predictor_tape) = self.forward(
            batch, training=True
        )
        loss, grad_y_hat = mean_bce_loss(y_hat, labels)
        grad_u, grad_d = self.predictor.backward_batch(predictor_tape, grad_y_hat)
        self.ad_model.backward_batch(ad_tape, grad_d)
        grad_local = self.aggregator.backward_batch(aggregator_tape, grad_u)
        for k, (model, tape) in enumerate(zip(self.user_models, user_tapes)):
            model.backward_batch(tape, grad_local[:, k])
        self.optimizer.step(self.layers)
        return loss
