"""Run configuration of experiments, and its ``key = value`` text format.

A configuration file holds one ``key = value`` pair per line. Blank lines
and lines starting with ``#`` are ignored. List values are comma-separated,
``none`` stands for an unset optional value, and booleans are ``true`` or
``false``. For example::

    # two platforms, no noise
    epochs = 5
    lambda_ldp = 0
    lambda_dp = 0
    platforms = 2,1
"""

import typing
from dataclasses import asdict, dataclass, fields
from typing import Any, Dict, Iterable, List, Optional, Union

from ..dataio import Dataset, SyntheticSpec
from ..federation import FederationOptions
from ..models import ModelConfig
from ..privacy import PrivacyConfig


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """Everything needed to rerun an experiment.

    Args:
        experiment: Name of the experiment, used in report file names.
        data: Directory of a saved dataset. If ``None``, a synthetic dataset is
            generated from the ``synthetic_*`` options.
        data_seed: Seed of the synthetic data generator.
        synthetic_users: Number of synthetic users.
        synthetic_platforms: Number of synthetic behavior platforms.
        synthetic_topics: Number of synthetic topics.
        synthetic_vocab: Number of distinct synthetic words.
        synthetic_ads: Number of synthetic ads.
        synthetic_behaviors: Mean number of behaviors per user and platform.
        synthetic_impressions: Number of impressions per user.
        synthetic_beta: Sharpness of the synthetic click model.
        synthetic_informativeness: Word purity of each synthetic platform.
        platforms: The 1-based platforms to use, in order. Defaults to all.
        word_dim: Word embedding dimension.
        num_heads: Number of self-attention heads.
        head_dim: Dimension of each head.
        pooling_dim: Hidden dimension of attentive pooling.
        id_dim: Ad-ID embedding dimension.
        max_tokens: Maximum tokens per text.
        max_behaviors: Maximum behaviors per user and platform.
        dropout: Dropout rate.
        predictor: Predictor variant.
        aggregator: Aggregator variant.
        lambda_ldp: Laplace scale of the local embeddings.
        lambda_dp: Laplace scale of the aggregated embedding.
        clip_norm: Optional L2 bound of perturbed embeddings.
        epochs: Number of training epochs.
        batch_size: Impressions per step.
        lr: Learning rate.
        optimizer: ``"sgd"`` or ``"adam"``.
        failure_policy: ``"abort"`` or ``"renormalize"``.
        train_fraction: Fraction of the training impressions used.
        behavior_fraction: Fraction of every user's most recent behaviors kept.
        test_window: Length of the final time window used for testing.
            Defaults to the last fifth of the impressions' time span.
        val_fraction: Fraction of the remaining impressions used for validation.
        seed: Seed of model initialization, noise, shuffling and splitting.
        repeats: Number of repetitions of repeated runs, with seeds
            ``seed, seed + 1, ...``.
        attack_instances: Number of attack instances per attacked embedding.
        pretrained: Optional GloVe-style file loaded into every word table.
        n_jobs: Number of parallel runs in ablations.
        progress: Show progress bars.
    """

    experiment: str = "run"
    data: Optional[str] = None
    data_seed: int = 0
    synthetic_users: int = 300
    synthetic_platforms: int = 2
    synthetic_topics: int = 8
    synthetic_vocab: int = 400
    synthetic_ads: int = 100
    synthetic_behaviors: float = 10.0
    synthetic_impressions: int = 8
    synthetic_beta: float = 4.0
    synthetic_informativeness: Optional[List[float]] = None
    platforms: Optional[List[int]] = None
    word_dim: int = 32
    num_heads: int = 4
    head_dim: int = 8
    pooling_dim: int = 32
    id_dim: int = 16
    max_tokens: int = 16
    max_behaviors: int = 50
    dropout: float = 0.2
    predictor: str = "dot"
    aggregator: str = "attention"
    lambda_ldp: float = 0.01
    lambda_dp: float = 0.005
    clip_norm: Optional[float] = None
    epochs: int = 3
    batch_size: int = 30
    lr: float = 1e-3
    optimizer: str = "adam"
    failure_policy: str = "abort"
    train_fraction: float = 1.0
    behavior_fraction: float = 1.0
    test_window: Optional[int] = None
    val_fraction: float = 0.1
    seed: int = 0
    repeats: int = 5
    attack_instances: int = 1000
    pretrained: Optional[str] = None
    n_jobs: int = 1
    progress: bool = False

    def validate(self) -> None:
        for name in ("train_fraction", "behavior_fraction"):
            value = getattr(self, name)
            if not 0 < value <= 1:
                raise ConfigError(f"{name} must be in (0, 1] (got {value}).")
        if not 0 < self.val_fraction < 1:
            raise ConfigError(f"val_fraction must be in (0, 1) (got {self.val_fraction}).")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0 (got {self.epochs}).")
        if self.n_jobs == 0:
            raise ConfigError("n_jobs must not be 0.")
        for name in ("repeats", "attack_instances"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1 (got {getattr(self, name)}).")
        if self.platforms is not None:
            if not self.platforms:
                raise ConfigError("platforms must not be empty.")
            if len(set(self.platforms)) != len(self.platforms):
                raise ConfigError(f"platforms must be distinct (got {self.platforms}).")
        if self.test_window is not None and self.test_window < 0:
            raise ConfigError(f"test_window must be >= 0 (got {self.test_window}).")
        self.privacy_config().validate()
        self.federation_options().validate()
        ModelConfig(**self._model_kwargs(), vocab_size=3, num_ads=1).validate()

    def _model_kwargs(self) -> Dict[str, Any]:
        return dict(
            num_platforms=len(self.platforms) if self.platforms else self.synthetic_platforms,
            word_dim=self.word_dim,
            num_heads=self.num_heads,
            head_dim=self.head_dim,
            pooling_dim=self.pooling_dim,
            id_dim=self.id_dim,
            max_tokens=self.max_tokens,
            max_behaviors=self.max_behaviors,
            dropout=self.dropout,
            predictor=self.predictor,
            aggregator=self.aggregator,
            seed=self.seed,
        )

    def model_config(self, dataset: Dataset) -> ModelConfig:
        """The model hyperparameters, sized for ``dataset``."""
        kwargs = self._model_kwargs()
        kwargs["num_platforms"] = dataset.num_platforms
        return ModelConfig(vocab_size=len(dataset.vocab), num_ads=dataset.num_ads, **kwargs)

    def privacy_config(self) -> PrivacyConfig:
        return PrivacyConfig(
            lambda_ldp=self.lambda_ldp,
            lambda_dp=self.lambda_dp,
            clip_norm=self.clip_norm,
            seed=self.seed,
        )

    def federation_options(self) -> FederationOptions:
        return FederationOptions(
            batch_size=self.batch_size,
            learning_rate=self.lr,
            optimizer=self.optimizer,
            failure_policy=self.failure_policy,
            progress=self.progress,
            seed=self.seed,
        )

    def synthetic_spec(self) -> SyntheticSpec:
        return SyntheticSpec(
            num_users=self.synthetic_users,
            num_platforms=self.synthetic_platforms,
            num_topics=self.synthetic_topics,
            vocab_size=self.synthetic_vocab,
            num_ads=self.synthetic_ads,
            behaviors_per_user=self.synthetic_behaviors,
            impressions_per_user=self.synthetic_impressions,
            beta=self.synthetic_beta,
            informativeness=self.synthetic_informativeness,
            seed=self.data_seed,
        )

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def to_lines(self) -> List[str]:
        """The configuration in the ``key = value`` file format."""
        return [f"{key} = {format_value(value)}" for key, value in self.to_dict().items()]

    def update(self, values: Dict[str, Any]) -> "ExperimentConfig":
        """Sets the given options, parsing string values. Unknown keys raise
        :class:`ConfigError`.
        """
        hints = _field_types()
        for key, value in values.items():
            if key not in hints:
                raise ConfigError(f"Unknown configuration key {key!r}.")
            if isinstance(value, str):
                value = parse_value(hints[key], value, key)
            setattr(self, key, value)
        return self

    @classmethod
    def from_lines(cls, lines: Iterable[str], source: str = "<config>") -> "ExperimentConfig":
        values = {}
        for line_number, line in enumerate(lines, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(f"{source}:{line_number}: expected 'key = value'.")
            values[key.strip()] = value.strip()
        try:
            return cls().update(values)
        except ConfigError as e:
            raise ConfigError(f"{source}: {e}") from None

    @classmethod
    def from_file(cls, path: str) -> "ExperimentConfig":
        try:
            with open(path, "r", encoding="utf-8") as f:
                return cls.from_lines(f.read().splitlines(), source=path)
        except OSError as e:
            raise ConfigError(f"Cannot read configuration file {path!r}: {e}") from e


def _field_types() -> Dict[str, Any]:
    hints = typing.get_type_hints(ExperimentConfig)
    return {f.name: hints[f.name] for f in fields(ExperimentConfig)}


def format_value(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return ",".join(format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_value(hint: Any, text: str, key: str = "value") -> Any:
    """Parses ``text`` into the type described by the annotation ``hint``."""
    text = text.strip()
    args = typing.get_args(hint)
    if typing.get_origin(hint) is Union and type(None) in args:
        if text.lower() in ("none", ""):
            return None
        (hint,) = [arg for arg in args if arg is not type(None)]
    if typing.get_origin(hint) in (list, List):
        (item,) = typing.get_args(hint)
        return [parse_value(item, part, key) for part in text.split(",") if part.strip()]
    try:
        if hint is bool:
            if text.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return text.lower() in ("true", "1", "yes")
        if hint is int:
            return int(text)
        if hint is float:
            return float(text)
    except ValueError:
        raise ConfigError(f"Invalid value {text!r} for {key}.") from None
    return text
