from dataclasses import asdict, dataclass
from enum import Enum
from typing import Any, Dict, Optional, Union

import numpy as np


class ModelConfigError(ValueError):
    pass


class PredictorKind(Enum):
    """Supported CTR prediction functions."""

    DOT: str = "dot"
    DENSE: str = "dense"
    OUTER: str = "outer"
    FM: str = "fm"


class AggregatorKind(Enum):
    """Supported user-embedding aggregators."""

    ATTENTION: str = "attention"
    AVERAGE: str = "average"
    MAX: str = "max"
    CONCAT: str = "concat"


class OptimizerKind(Enum):
    """Supported parameter update rules."""

    SGD: str = "sgd"
    ADAM: str = "adam"


def _to_enum(value, enum_type, name):
    if isinstance(value, enum_type):
        return value
    try:
        return enum_type(str(value).lower())
    except ValueError:
        valid = [member.value for member in enum_type]
        raise ModelConfigError(f"{name} must be one of {valid!r}, got {value!r}.")


def is_legal_combination(
    predictor: Union[PredictorKind, str], aggregator: Union[AggregatorKind, str]
) -> bool:
    """Whether a predictor can consume the output of an aggregator.

    The concatenating aggregator produces a ``K * d`` dimensional user embedding,
    which the dot-product predictor cannot pair with a ``d`` dimensional
    ad embedding.
    """
    predictor = _to_enum(predictor, PredictorKind, "predictor")
    aggregator = _to_enum(aggregator, AggregatorKind, "aggregator")
    return not (
        predictor is PredictorKind.DOT and aggregator is AggregatorKind.CONCAT
    )


@dataclass
class ModelConfig:
    """Hyperparameters shared by the user model, ad model, aggregator and predictor.

    The user and ad embedding dimension is ``num_heads * head_dim``.

    Args:
        vocab_size: Number of rows in every word embedding table, including the
            reserved padding and out-of-vocabulary ids.
        num_ads: Number of known ad ids. The ad-ID table has one extra
            out-of-vocabulary row.
        num_platforms: Number of behavior platforms. Only the concatenating
            aggregator depends on it.
        word_dim: Word embedding dimension.
        num_heads: Number of self-attention heads.
        head_dim: Output dimension of each self-attention head.
        pooling_dim: Hidden dimension of the attentive pooling layers.
        id_dim: Ad-ID embedding dimension.
        max_tokens: Maximum number of tokens per text. Longer texts keep the
            leading tokens.
        max_behaviors: Maximum number of behaviors per user and platform.
            Longer histories keep the most recent behaviors.
        dropout: Dropout rate applied in training mode.
        predictor: One of ``"dot"``, ``"dense"``, ``"outer"``, or ``"fm"``.
        aggregator: One of ``"attention"``, ``"average"``, ``"max"``, or ``"concat"``.
        fm_factors: Number of latent factors of the factorization-machine predictor.
        dtype: Floating point precision, ``"float64"`` or ``"float32"``.
        seed: Seed for parameter initialization.
    """

    vocab_size: int = 5002
    num_ads: int = 1000
    num_platforms: int = 2
    word_dim: int = 300
    num_heads: int = 16
    head_dim: int = 16
    pooling_dim: int = 200
    id_dim: int = 64
    max_tokens: int = 16
    max_behaviors: int = 50
    dropout: float = 0.2
    predictor: Union[PredictorKind, str] = PredictorKind.DOT
    aggregator: Union[AggregatorKind, str] = AggregatorKind.ATTENTION
    fm_factors: int = 16
    dtype: str = "float64"
    seed: Optional[int] = None

    @property
    def embed_dim(self) -> int:
        """Dimension of local user embeddings and ad embeddings."""
        return self.num_heads * self.head_dim

    @property
    def user_dim(self) -> int:
        """Dimension of the aggregated user embedding."""
        if _to_enum(self.aggregator, AggregatorKind, "aggregator") is AggregatorKind.CONCAT:
            return self.num_platforms * self.embed_dim
        return self.embed_dim

    @property
    def numpy_dtype(self) -> np.dtype:
        return np.dtype(self.dtype)

    def validate(self) -> None:
        positive = (
            "vocab_size",
            "num_ads",
            "num_platforms",
            "word_dim",
            "num_heads",
            "head_dim",
            "pooling_dim",
            "id_dim",
            "max_tokens",
            "max_behaviors",
            "fm_factors",
        )
        for name in positive:
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ModelConfigError(f"{name} must be a positive integer (got {value}).")

        if self.vocab_size < 3:
            raise ModelConfigError(
                "vocab_size must leave room for the two reserved ids"
                f" (got {self.vocab_size})."
            )

        if not (0 <= self.dropout < 1):
            raise ModelConfigError(f"dropout must be in [0, 1) (got {self.dropout}).")

        if self.dtype not in ("float64", "float32"):
            raise ModelConfigError(
                f"dtype must be 'float64' or 'float32' (got {self.dtype!r})."
            )

        self.predictor = _to_enum(self.predictor, PredictorKind, "predictor")
        self.aggregator = _to_enum(self.aggregator, AggregatorKind, "aggregator")
        if not is_legal_combination(self.predictor, self.aggregator):
            raise ModelConfigError(
                "The concat aggregator produces embeddings of dimension"
                f" {self.num_platforms} * {self.embed_dim}, which the dot-product"
                " predictor cannot pair with ad embeddings."
            )

    def to_dict(self) -> Dict[str, Any]:
        """A flat dict of plain values, suitable for HDF5 attrs and reports."""
        values = asdict(self)
        for key in ("predictor", "aggregator"):
            if isinstance(values[key], Enum):
                values[key] = values[key].value
        return values
