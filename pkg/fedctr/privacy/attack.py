"""Behavior-inference attack on user embeddings.

The attacker holds a user embedding and a behavior encoder. Given ten candidate
behaviors, one from the user's own history and nine from other users, it ranks
the candidates by the dot product of their encodings with the embedding. The
attack AUC is the fraction of negatives ranked below the positive, counting
ties as one half, averaged over instances. Lower is more private.
"""

from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..nnkit import ShapeError

NUM_NEGATIVES = 9


@dataclass(frozen=True, eq=False)
class AttackInstance:
    """One ranking task of the attacker.

    Args:
        target: The attacked embedding.
        candidates: The candidate behaviors, one of them the positive.
        positive_index: Index of the positive in ``candidates``.
        user_id: The attacked user.
        target_kind: ``"local_<i>"`` or ``"aggregated"``.
    """

    target: np.ndarray
    candidates: Tuple
    positive_index: int
    user_id: int = -1
    target_kind: str = "aggregated"

    @property
    def positive(self):
        return self.candidates[self.positive_index]

    @property
    def negatives(self) -> List:
        return [c for i, c in enumerate(self.candidates) if i != self.positive_index]


def build_attack_instances(
    targets: Dict[int, np.ndarray],
    platforms: Sequence,
    target_kind: str,
    num_instances: Optional[int] = None,
    seed: Optional[int] = None,
    num_negatives: int = NUM_NEGATIVES,
) -> List[AttackInstance]:
    """Draws attack instances.

    For each drawn user, the positive is a random behavior of the user on a
    random platform among ``platforms`` where the user has behaviors; the
    negatives are random behaviors of other users on the same platform.

    Args:
        targets: The attacked embedding of each user, keyed by user id.
        platforms: The :class:`fedctr.dataio.PlatformBehaviors` the candidates
            are drawn from.
        target_kind: Label of the attacked embeddings.
        num_instances: Number of instances. Defaults to one per eligible user.
            Users are drawn without replacement while possible.
        seed: Seed of the draws.
        num_negatives: Number of negatives per instance.

    Returns:
        A list of :class:`AttackInstance`.
    """
    rng = np.random.default_rng(seed)
    pools = [list(platform.records()) for platform in platforms]
    eligible = sorted(
        user
        for user in targets
        if any(platform.history(user) for platform in platforms)
    )
    if not eligible:
        return []
    if num_instances is None:
        num_instances = len(eligible)
    users = []
    while len(users) < num_instances:
        order = rng.permutation(len(eligible))
        users.extend(eligible[i] for i in order[: num_instances - len(users)])

    instances = []
    for user in users:
        options = [i for i, platform in enumerate(platforms) if platform.history(user)]
        index = options[rng.integers(len(options))]
        history = platforms[index].history(user)
        positive = history[rng.integers(len(history))]
        pool = pools[index]
        if len(pool) - len(history) < num_negatives:
            continue
        negatives = []
        while len(negatives) < num_negatives:
            record = pool[rng.integers(len(pool))]
            if record.user_id != user:
                negatives.append(record)
        position = int(rng.integers(num_negatives + 1))
        candidates = negatives[:position] + [positive] + negatives[position:]
        instances.append(
            AttackInstance(
                np.asarray(targets[user]), tuple(candidates), position, user, target_kind
            )
        )
    return instances


def instance_auc(scores: Sequence[float], positive_index: int) -> float:
    """Fraction of negatives scored strictly below the positive, ties counting one half."""
    scores = np.asarray(scores, dtype=np.float64)
    positive = scores[positive_index]
    negatives = np.delete(scores, positive_index)
    below = np.count_nonzero(negatives < positive)
    ties = np.count_nonzero(negatives == positive)
    return (below + 0.5 * ties) / negatives.size


def run_attack(
    encoder: Callable[[object], np.ndarray], instances: Sequence[AttackInstance]
) -> float:
    """Mean attack AUC of ``encoder`` over ``instances``.

    Encodings are cached per candidate, so ``encoder`` must be deterministic.
    """
    if not instances:
        raise ValueError("run_attack requires at least one instance.")
    cache: Dict[object, np.ndarray] = {}

    def encode(candidate):
        if candidate not in cache:
            cache[candidate] = np.asarray(encoder(candidate))
        return cache[candidate]

    aucs = []
    for instance in instances:
        encoded = [encode(candidate) for candidate in instance.candidates]
        for vector in encoded:
            if vector.shape != instance.target.shape:
                raise ShapeError(
                    f"Encoder output of shape {vector.shape} does not match the"
                    f" target embedding of shape {instance.target.shape}."
                )
        scores = [float(instance.target @ vector) for vector in encoded]
        aucs.append(instance_auc(scores, instance.positive_index))
    return float(np.mean(aucs))
