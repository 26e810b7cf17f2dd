"""Synthetic multi-platform CTR data with planted topic structure.

Every user has a topic-interest vector. Each behavior platform only sees a
subset of the topics: a behavior whose topic the platform cannot see consists
of background words. A platform's behaviors therefore reveal only part of a
user's interests. Ads have topic mixtures of their own, and a click is drawn
with probability ``sigmoid(beta * affinity + bias)``, where the affinity is the
scaled inner product of user interests and ad topics and the bias centers
the click rate at one half.
"""

import json
import logging
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Union

import numpy as np
from scipy.special import expit

from .records import (
    AdRecord,
    BehaviorRecord,
    Dataset,
    DatasetError,
    PlatformBehaviors,
    TrainingSample,
)
from .vocab import OOV_ID, Vocab

logger = logging.getLogger(__name__)

DEFAULT_PLATFORM_NAMES = ("search", "browsing", "shopping", "news", "video", "mail")


@dataclass
class SyntheticSpec:
    """Parameters of the synthetic data generator.

    Args:
        num_users: Number of users.
        num_platforms: Number of behavior platforms K.
        num_topics: Number of latent topics T.
        vocab_size: Number of distinct words the generator can emit.
        num_ads: Number of ads.
        behaviors_per_user: Mean (Poisson) number of behaviors per user and platform.
        words_per_behavior: Mean length of a behavior text (at least one word).
        words_per_title: Mean length of an ad title.
        words_per_description: Mean length of an ad description.
        impressions_per_user: Number of impressions per user.
        topic_word_fraction: Fraction of the vocabulary split into per-topic
            word groups. The rest are background words shared by all topics.
        visibility: For every platform, the topics it can observe. Defaults to
            disjoint round-robin masks, topic ``t`` visible on platform ``t % K + 1``.
        informativeness: For every platform, the probability that a behavior
            word comes from the behavior's topic rather than the background.
            Defaults to 0.8 on every platform.
        ad_purity: The same probability for ad titles and descriptions.
        interest_concentration: Dirichlet concentration of user interests.
        ad_concentration: Dirichlet concentration of ad topics.
        beta: Sharpness of the click model. 0 makes labels independent of
            everything else.
        history_span: Behaviors have timestamps in ``[0, history_span)``.
        impression_span: Impressions have timestamps in
            ``[history_span, history_span + impression_span)``.
        platform_names: Display names of the platforms.
        seed: Seed of every random draw.
    """

    num_users: int = 2000
    num_platforms: int = 2
    num_topics: int = 20
    vocab_size: int = 5000
    num_ads: int = 500
    behaviors_per_user: float = 30.0
    words_per_behavior: float = 5.0
    words_per_title: float = 8.0
    words_per_description: float = 16.0
    impressions_per_user: int = 10
    topic_word_fraction: float = 0.8
    visibility: Optional[List[List[int]]] = None
    informativeness: Optional[List[float]] = None
    ad_purity: float = 0.8
    interest_concentration: float = 0.2
    ad_concentration: float = 0.2
    beta: float = 4.0
    history_span: int = 1000
    impression_span: int = 200
    platform_names: Optional[List[str]] = None
    seed: int = 0

    def topic_visibility(self) -> np.ndarray:
        """Boolean array of shape ``(num_platforms, num_topics)``."""
        mask = np.zeros((self.num_platforms, self.num_topics), dtype=bool)
        if self.visibility is None:
            for topic in range(self.num_topics):
                mask[topic % self.num_platforms, topic] = True
            return mask
        for platform, topics in enumerate(self.visibility):
            mask[platform, list(topics)] = True
        return mask

    def platform_informativeness(self) -> List[float]:
        if self.informativeness is None:
            return [0.8] * self.num_platforms
        return list(self.informativeness)

    def names(self) -> List[str]:
        if self.platform_names is not None:
            return list(self.platform_names)
        names = list(DEFAULT_PLATFORM_NAMES[: self.num_platforms])
        names += [f"platform_{i}" for i in range(len(names) + 1, self.num_platforms + 1)]
        return names

    def validate(self) -> None:
        for name in (
            "num_users",
            "num_platforms",
            "num_topics",
            "num_ads",
            "impressions_per_user",
            "history_span",
            "impression_span",
        ):
            if getattr(self, name) < 1:
                raise DatasetError(f"{name} must be >= 1 (got {getattr(self, name)}).")
        for name in ("words_per_behavior", "words_per_title", "words_per_description"):
            if getattr(self, name) < 1:
                raise DatasetError(f"{name} must be >= 1 (got {getattr(self, name)}).")
        if self.behaviors_per_user < 0:
            raise DatasetError(
                f"behaviors_per_user must be >= 0 (got {self.behaviors_per_user})."
            )
        if self.beta < 0:
            raise DatasetError(f"beta must be >= 0 (got {self.beta}).")
        if not 0 < self.topic_word_fraction < 1:
            raise DatasetError(
                f"topic_word_fraction must be in (0, 1) (got {self.topic_word_fraction})."
            )
        group = int(self.vocab_size * self.topic_word_fraction) // self.num_topics
        if group < 1 or self.vocab_size - group * self.num_topics < 1:
            raise DatasetError(
                f"vocab_size {self.vocab_size} is too small for {self.num_topics} topics."
            )
        for name in ("interest_concentration", "ad_concentration"):
            if getattr(self, name) <= 0:
                raise DatasetError(f"{name} must be > 0 (got {getattr(self, name)}).")
        if self.visibility is not None:
            if len(self.visibility) != self.num_platforms:
                raise DatasetError(
                    f"visibility must list topics for {self.num_platforms} platforms."
                )
            for topics in self.visibility:
                if any(not 0 <= t < self.num_topics for t in topics):
                    raise DatasetError(f"Unknown topic in visibility {topics!r}.")
        hidden = np.flatnonzero(~self.topic_visibility().any(axis=0))
        if hidden.size:
            raise DatasetError(
                f"Topics {hidden.tolist()} are not visible on any platform."
            )
        informativeness = self.platform_informativeness()
        if len(informativeness) != self.num_platforms:
            raise DatasetError(
                f"informativeness must have {self.num_platforms} entries."
            )
        for value in informativeness + [self.ad_purity]:
            if not 0 <= value <= 1:
                raise DatasetError(f"Word purities must be in [0, 1] (got {value}).")
        if len(self.names()) != self.num_platforms:
            raise DatasetError(
                f"platform_names must have {self.num_platforms} entries."
            )

    def to_meta(self) -> Dict[str, str]:
        return {
            f"generator.{key}": json.dumps(value)
            for key, value in asdict(self).items()
        }


class _WordSampler:
    def __init__(self, spec: SyntheticSpec, rng: np.random.Generator):
        self.rng = rng
        self.group = int(spec.vocab_size * spec.topic_word_fraction) // spec.num_topics
        self.num_topic_words = self.group * spec.num_topics
        self.num_background = spec.vocab_size - self.num_topic_words
        self.words = [
            f"t{t}w{j}" for t in range(spec.num_topics) for j in range(self.group)
        ] + [f"bg{j}" for j in range(self.num_background)]

    def sample(
        self, topics: np.ndarray, purity: Union[float, np.ndarray]
    ) -> np.ndarray:
        """One word index per entry of ``topics``. ``purity`` may be given per entry."""
        rng = self.rng
        count = topics.size
        topical = rng.random(count) < purity
        topic_words = topics * self.group + rng.integers(self.group, size=count)
        background = self.num_topic_words + rng.integers(self.num_background, size=count)
        return np.where(topical, topic_words, background)


def _lengths(rng: np.random.Generator, mean: float, size: int) -> np.ndarray:
    return 1 + rng.poisson(mean - 1, size=size)


def generate_synthetic(spec: Optional[SyntheticSpec] = None) -> Dataset:
    """Generates a dataset from ``spec``. Output is fully determined by ``spec.seed``.

    The latent interests, ad topics, affinities and click probabilities are
    returned in ``Dataset.latent``.
    """
    if spec is None:
        spec = SyntheticSpec()
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    sampler = _WordSampler(spec, rng)
    num_topics = spec.num_topics
    visibility = spec.topic_visibility()
    informativeness = spec.platform_informativeness()

    interests = rng.dirichlet(
        np.full(num_topics, spec.interest_concentration), size=spec.num_users
    )
    ad_topics = rng.dirichlet(np.full(num_topics, spec.ad_concentration), size=spec.num_ads)

    # Word indices of every text, encoded once the vocabulary is known.
    behavior_texts = []
    for platform in range(spec.num_platforms):
        counts = rng.poisson(spec.behaviors_per_user, size=spec.num_users)
        for user in range(spec.num_users):
            n = counts[user]
            if n == 0:
                continue
            topics = rng.choice(num_topics, size=n, p=interests[user])
            purity = np.where(
                visibility[platform, topics], informativeness[platform], 0.0
            )
            lengths = _lengths(rng, spec.words_per_behavior, n)
            timestamps = np.sort(rng.integers(spec.history_span, size=n))
            words = sampler.sample(
                np.repeat(topics, lengths), np.repeat(purity, lengths)
            )
            for timestamp, text in zip(timestamps, np.split(words, np.cumsum(lengths)[:-1])):
                behavior_texts.append((platform + 1, user, int(timestamp), text))

    ad_texts = []
    for ad in range(spec.num_ads):
        texts = []
        for mean in (spec.words_per_title, spec.words_per_description):
            length = _lengths(rng, mean, 1)[0]
            topics = rng.choice(num_topics, size=length, p=ad_topics[ad])
            texts.append(sampler.sample(topics, spec.ad_purity))
        ad_texts.append(texts)

    users = np.repeat(np.arange(spec.num_users), spec.impressions_per_user)
    ads = rng.integers(spec.num_ads, size=users.size)
    timestamps = spec.history_span + rng.integers(spec.impression_span, size=users.size)
    affinity = num_topics * np.sum(interests[users] * ad_topics[ads], axis=1)
    bias = -spec.beta * np.median(affinity)
    click_probability = expit(spec.beta * affinity + bias)
    labels = (rng.random(users.size) < click_probability).astype(int)
    order = np.lexsort((ads, users, timestamps))

    all_words = [text for *_, text in behavior_texts]
    all_words.extend(text for texts in ad_texts for text in texts)
    counts = np.bincount(np.concatenate(all_words), minlength=len(sampler.words))
    used = [i for i in range(len(sampler.words)) if counts[i] > 0]
    used.sort(key=lambda i: (-counts[i], sampler.words[i]))
    vocab = Vocab([sampler.words[i] for i in used])
    token_ids = np.full(len(sampler.words), OOV_ID, dtype=np.int64)
    token_ids[used] = vocab.encode([sampler.words[i] for i in used])

    def encode(text):
        return tuple(token_ids[text].tolist())

    records = [[] for _ in range(spec.num_platforms)]
    for platform, user, timestamp, text in behavior_texts:
        records[platform - 1].append(BehaviorRecord(platform, user, timestamp, encode(text)))
    names = spec.names()
    platforms = [
        PlatformBehaviors(i + 1, platform_records, name=names[i])
        for i, platform_records in enumerate(records)
    ]
    ad_records = {
        ad: AdRecord(ad, encode(title), encode(description))
        for ad, (title, description) in enumerate(ad_texts)
    }
    impressions = [
        TrainingSample(int(users[i]), int(ads[i]), int(labels[i]), int(timestamps[i]))
        for i in order
    ]
    latent = {
        "interests": interests,
        "ad_topics": ad_topics,
        "visibility": visibility,
        "affinity": affinity[order],
        "click_probability": click_probability[order],
    }
    meta = {"seed": str(spec.seed), "platform_order": ",".join(names)}
    meta.update(spec.to_meta())
    dataset = Dataset(vocab, ad_records, impressions, platforms, meta, latent)
    logger.info(
        f"Generated {len(impressions)} impressions ({int(labels.sum())} clicks),"
        f" {spec.num_ads} ads and {len(behavior_texts)} behaviors on"
        f" {spec.num_platforms} platforms."
    )
    return dataset
