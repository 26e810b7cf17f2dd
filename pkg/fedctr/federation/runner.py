import logging
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from tqdm import TqdmWarning, tqdm

from ..dataio import TrainingSample

logger = logging.getLogger(__name__)


@dataclass
class EpochRecord:
    """Scalars recorded at the end of an epoch.

    Args:
        epoch: The 1-based epoch number.
        loss: Mean training loss over the epoch's batches.
        val_auc: Validation AUC, if a validation set was given.
        val_ap: Validation average precision, if a validation set was given.
        seconds: Wall-clock duration of the epoch.
    """

    epoch: int
    loss: float
    val_auc: Optional[float] = None
    val_ap: Optional[float] = None
    seconds: float = 0.0


@dataclass
class TrainingHistory:
    """Per-epoch records of a training run.

    ``best_epoch`` is the epoch whose parameters were kept: the one with the
    highest validation AUC, or the last epoch when no epoch has one.
    """

    epochs: List[EpochRecord] = field(default_factory=list)
    best_epoch: Optional[int] = None
    batch_losses: List[float] = field(default_factory=list)
    cancelled: bool = False

    def __len__(self) -> int:
        return len(self.epochs)

    def append(self, record: EpochRecord) -> None:
        self.epochs.append(record)

    @property
    def losses(self) -> List[float]:
        return [record.loss for record in self.epochs]

    @property
    def best(self) -> Optional[EpochRecord]:
        for record in self.epochs:
            if record.epoch == self.best_epoch:
                return record
        return None

    def to_rows(self) -> List[Dict[str, object]]:
        return [vars(record).copy() for record in self.epochs]


class Runner:
    """The training loop: shuffled mini-batches, per-epoch validation and
    best-on-validation parameter retention.

    Args:
        step: Runs one training step on a batch and returns its loss.
        batch_size: Number of impressions per batch.
        rng: Generator used to shuffle the training set every epoch.
        evaluate: Returns ``(auc, ap)`` on the validation set.
        snapshot: Returns a copy of every trainable parameter.
        restore: Restores a snapshot.
        progress: Show a progress bar.
    """

    def __init__(
        self,
        step: Callable[[Sequence[TrainingSample]], float],
        batch_size: int,
        rng: np.random.Generator,
        evaluate: Optional[Callable[[], tuple]] = None,
        snapshot: Optional[Callable[[], object]] = None,
        restore: Optional[Callable[[object], None]] = None,
        progress: bool = True,
    ):
        self.step = step
        self.batch_size = batch_size
        self.rng = rng
        self.evaluate = evaluate
        self.snapshot = snapshot
        self.restore = restore
        self.progress = progress

    def batches(self, samples: Sequence[TrainingSample]) -> List[List[TrainingSample]]:
        order = self.rng.permutation(len(samples))
        return [
            [samples[i] for i in order[start : start + self.batch_size]]
            for start in range(0, len(samples), self.batch_size)
        ]

    def run(
        self,
        samples: Sequence[TrainingSample],
        epochs: int,
        hook: Optional[Callable[[EpochRecord], None]] = None,
    ) -> TrainingHistory:
        """Trains for ``epochs`` epochs.

        Args:
            samples: The training impressions.
            epochs: Number of passes over ``samples``.
            hook: Called with the record of every finished epoch.

        Returns:
            The :class:`TrainingHistory` of the run.
        """
        if epochs < 0:
            raise ValueError(f"epochs must be >= 0 (got {epochs}).")
        if not len(samples):
            raise ValueError("Cannot train on an empty dataset.")
        history = TrainingHistory()
        best_auc = -np.inf
        best_state = None
        num_batches = -(-len(samples) // self.batch_size)
        with warnings.catch_warnings():
            warnings.filterwarnings("ignore", category=TqdmWarning)
            with tqdm(
                total=epochs * num_batches,
                desc="Training",
                disable=not self.progress,
                unit="batch",
                dynamic_ncols=True,
            ) as pbar:
                for epoch in range(1, epochs + 1):
                    start = time.perf_counter()
                    losses = []
                    try:
                        for batch in self.batches(samples):
                            losses.append(self.step(batch))
                            pbar.set_postfix(loss=f"{losses[-1]:.4f}")
                            pbar.update(1)
                    except KeyboardInterrupt:
                        logger.warning(f"Cancelling training in epoch {epoch}.")
                        history.cancelled = True
                        break
                    history.batch_losses.extend(losses)
                    record = EpochRecord(epoch, float(np.mean(losses)))
                    if self.evaluate is not None:
                        record.val_auc, record.val_ap = self.evaluate()
                    record.seconds = time.perf_counter() - start
                    history.append(record)
                    msg = f"Epoch {epoch}/{epochs}: loss={record.loss:.5f}"
                    if record.val_auc is not None:
                        msg += f", val_auc={record.val_auc:.4f}, val_ap={record.val_ap:.4f}"
                    logger.info(msg)
                    if hook is not None:
                        hook(record)
                    if (
                        self.snapshot is not None
                        and record.val_auc is not None
                        and record.val_auc > best_auc
                    ):
                        best_auc = record.val_auc
                        history.best_epoch = epoch
                        best_state = self.snapshot()
        if best_state is None:
            # Nothing to compare: keep the last finished epoch.
            history.best_epoch = len(history) or None
        elif history.best_epoch != len(history):
            logger.info(f"Restoring the parameters of epoch {history.best_epoch}.")
            self.restore(best_state)
        return history
