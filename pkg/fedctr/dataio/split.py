from typing import List, Optional, Sequence, Tuple

import numpy as np

from .records import DatasetError, TrainingSample


def chronological_split(
    impressions: Sequence[TrainingSample],
    test_window: int,
    val_fraction: float = 0.1,
    seed: Optional[int] = None,
) -> Tuple[List[TrainingSample], List[TrainingSample], List[TrainingSample]]:
    """Splits impressions into train, validation and test sets.

    The test set holds every impression with ``timestamp > t_max - test_window``.
    A seeded random ``round(val_fraction * n)`` of the remaining ``n`` impressions
    forms the validation set. Every set keeps the input order.

    Args:
        impressions: The impressions to split.
        test_window: Length of the final time window reserved for testing.
        val_fraction: Fraction of the pre-window impressions used for validation.
        seed: Seed of the validation draw.

    Returns:
        ``(train, val, test)``
    """
    if not impressions:
        raise DatasetError("Cannot split an empty set of impressions.")
    if not 0 < val_fraction < 1:
        raise ValueError(f"val_fraction must be in (0, 1) (got {val_fraction}).")
    timestamps = np.array([sample.timestamp for sample in impressions])
    t_min, t_max = int(timestamps.min()), int(timestamps.max())
    if test_window < 0 or test_window > t_max - t_min:
        raise DatasetError(
            f"Test window {test_window} must be in [0, {t_max - t_min}],"
            " the time span of the impressions."
        )
    is_test = timestamps > t_max - test_window
    rest = np.flatnonzero(~is_test)
    num_val = int(round(val_fraction * rest.size))
    rng = np.random.default_rng(seed)
    is_val = np.zeros(len(impressions), dtype=bool)
    is_val[rng.permutation(rest)[:num_val]] = True
    train, val, test = [], [], []
    for sample, test_flag, val_flag in zip(impressions, is_test, is_val):
        if test_flag:
            test.append(sample)
        elif val_flag:
            val.append(sample)
        else:
            train.append(sample)
    return train, val, test


def subsample(
    samples: Sequence[TrainingSample], fraction: float, seed: Optional[int] = None
) -> List[TrainingSample]:
    """A seeded random ``round(fraction * n)`` of ``samples``, in input order."""
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must be in (0, 1] (got {fraction}).")
    if fraction == 1:
        return list(samples)
    count = int(round(fraction * len(samples)))
    keep = np.sort(np.random.default_rng(seed).permutation(len(samples))[:count])
    return [samples[i] for i in keep]
