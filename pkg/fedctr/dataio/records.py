import bisect
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .vocab import Vocab


class DatasetError(ValueError):
    """Raised for malformed or inconsistent datasets.

    Args:
        message: Description of the problem.
        path: Optional file in which the problem was found.
        line: Optional 1-based line number.
    """

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        location = ""
        if path is not None:
            location = f"{path}" + (f", line {line}" if line is not None else "") + ": "
        super().__init__(location + message)


@dataclass(frozen=True)
class BehaviorRecord:
    """One user behavior held by a behavior platform, e.g. a search query.

    Args:
        platform: The 1-based index of the owning platform.
        user_id: The user.
        timestamp: Integer time of the behavior.
        tokens: Token ids of the behavior text.
    """

    platform: int
    user_id: int
    timestamp: int
    tokens: Tuple[int, ...]


@dataclass(frozen=True)
class AdRecord:
    """An ad: its ID and the token ids of its title and description."""

    ad_id: int
    title: Tuple[int, ...]
    description: Tuple[int, ...]


@dataclass(frozen=True)
class TrainingSample:
    """One labeled impression: ad ``ad_id`` was shown to ``user_id`` at ``timestamp``."""

    user_id: int
    ad_id: int
    label: int
    timestamp: int


class PlatformBehaviors:
    """The behavior log of one platform, indexed by user.

    Histories are kept in chronological order (stable for equal timestamps).

    Args:
        platform: The 1-based platform index.
        records: The behavior records of the platform.
        name: A display name, e.g. ``"search"``.
    """

    def __init__(self, platform: int, records: Iterable[BehaviorRecord], name: str = ""):
        self.platform = platform
        self.name = name or f"platform_{platform}"
        by_user: Dict[int, List[BehaviorRecord]] = defaultdict(list)
        for record in records:
            if record.platform != platform:
                raise DatasetError(
                    f"Record of platform {record.platform} given to platform {platform}."
                )
            by_user[record.user_id].append(record)
        self._by_user = {
            user: sorted(history, key=lambda r: r.timestamp)
            for user, history in sorted(by_user.items())
        }
        self._timestamps = {
            user: [r.timestamp for r in history] for user, history in self._by_user.items()
        }

    def __len__(self) -> int:
        return sum(len(history) for history in self._by_user.values())

    def users(self) -> List[int]:
        return list(self._by_user)

    def history(self, user_id: int, before: Optional[int] = None) -> List[BehaviorRecord]:
        """The user's behaviors, oldest first, optionally only those with
        ``timestamp < before``.
        """
        history = self._by_user.get(user_id, [])
        if before is None:
            return list(history)
        end = bisect.bisect_left(self._timestamps[user_id], before) if history else 0
        return history[:end]

    def records(self) -> Iterator[BehaviorRecord]:
        """Every record, ordered by user and then by time."""
        for history in self._by_user.values():
            yield from history

    def keep_recent(self, fraction: float) -> "PlatformBehaviors":
        """A copy keeping the most recent ``ceil(fraction * n)`` behaviors of each user."""
        if not 0 < fraction <= 1:
            raise ValueError(f"fraction must be in (0, 1] (got {fraction}).")
        kept = []
        for history in self._by_user.values():
            count = int(np.ceil(fraction * len(history)))
            kept.extend(history[len(history) - count :])
        return PlatformBehaviors(self.platform, kept, name=self.name)

    def __repr__(self) -> str:
        return (
            f"{self.__class__.__name__}(platform={self.platform}, name={self.name!r},"
            f" users={len(self._by_user)}, records={len(self)})"
        )


@dataclass
class Dataset:
    """A multi-platform CTR dataset.

    The behavior logs of the platforms are kept separate; only the owning
    behavior platform reads its log.

    Args:
        vocab: The shared token vocabulary.
        ads: Ad records keyed by ad id.
        impressions: Labeled impressions, in chronological order.
        platforms: One :class:`PlatformBehaviors` per platform, platform 1 first.
        meta: Free-form ``key -> value`` metadata.
        latent: Generator-side ground truth of synthetic data. Never saved.
    """

    vocab: Vocab
    ads: Dict[int, AdRecord]
    impressions: List[TrainingSample]
    platforms: List[PlatformBehaviors]
    meta: Dict[str, str] = field(default_factory=dict)
    latent: Optional[Dict[str, Any]] = field(default=None, repr=False, compare=False)

    @property
    def num_platforms(self) -> int:
        return len(self.platforms)

    @property
    def platform_names(self) -> List[str]:
        return [platform.name for platform in self.platforms]

    @property
    def num_ads(self) -> int:
        return max(self.ads, default=-1) + 1

    def platform(self, index: int) -> PlatformBehaviors:
        """Returns the behaviors of the 1-based platform ``index``."""
        if not 1 <= index <= self.num_platforms:
            raise DatasetError(
                f"Unknown platform {index}; the dataset has {self.num_platforms}."
            )
        return self.platforms[index - 1]

    def users(self) -> List[int]:
        users = {sample.user_id for sample in self.impressions}
        for platform in self.platforms:
            users.update(platform.users())
        return sorted(users)

    def select_platforms(self, indices: Sequence[int]) -> "Dataset":
        """A dataset restricted to the given 1-based platforms, renumbered in the given order."""
        platforms = []
        for new_index, index in enumerate(indices, start=1):
            source = self.platform(index)
            records = [
                BehaviorRecord(new_index, r.user_id, r.timestamp, r.tokens)
                for r in source.records()
            ]
            platforms.append(PlatformBehaviors(new_index, records, name=source.name))
        return Dataset(
            self.vocab, self.ads, self.impressions, platforms, dict(self.meta), self.latent
        )

    def with_behavior_fraction(self, fraction: float) -> "Dataset":
        """A dataset keeping the most recent ``fraction`` of every user's history."""
        if fraction == 1:
            return self
        platforms = [platform.keep_recent(fraction) for platform in self.platforms]
        return Dataset(
            self.vocab, self.ads, self.impressions, platforms, dict(self.meta), self.latent
        )

    def stats(self) -> Dict[str, float]:
        """Summary statistics of the dataset."""
        clicks = sum(sample.label for sample in self.impressions)
        ads = list(self.ads.values())
        num_users = len(self.users())
        stats = {
            "users": num_users,
            "ads": len(ads),
            "impressions": len(self.impressions),
            "clicks": clicks,
            "non_clicks": len(self.impressions) - clicks,
            "avg_title_words": float(np.mean([len(a.title) for a in ads])) if ads else 0.0,
            "avg_description_words": (
                float(np.mean([len(a.description) for a in ads])) if ads else 0.0
            ),
        }
        for platform in self.platforms:
            key = f"platform_{platform.platform}"
            lengths = [len(r.tokens) for r in platform.records()]
            stats[f"{key}_behaviors"] = len(lengths)
            stats[f"{key}_avg_behaviors_per_user"] = (
                len(lengths) / num_users if num_users else 0.0
            )
            stats[f"{key}_avg_words_per_behavior"] = (
                float(np.mean(lengths)) if lengths else 0.0
            )
        return stats
