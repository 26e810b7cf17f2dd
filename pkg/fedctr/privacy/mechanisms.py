from dataclasses import dataclass
from typing import Optional, Union

import numpy as np


class PrivacyConfigError(ValueError):
    pass


@dataclass
class PrivacyConfig:
    """Perturbation settings of the user embeddings.

    The scales are Laplace scale parameters ``b`` (density proportional to
    ``exp(-|x| / b)``). A scale of 0 disables the corresponding mechanism.

    Args:
        lambda_ldp: Scale of the noise each behavior platform adds to its local
            user embeddings.
        lambda_dp: Scale of the noise the user server adds to the aggregated
            user embedding.
        clip_norm: If given, embeddings are clipped to this L2 norm before noise
            is added.
        seed: Root seed of the parties' noise streams.
    """

    lambda_ldp: float = 0.01
    lambda_dp: float = 0.005
    clip_norm: Optional[float] = None
    seed: Optional[int] = None

    def validate(self) -> None:
        for name in ("lambda_ldp", "lambda_dp"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise PrivacyConfigError(f"{name} must be >= 0 (got {value}).")
        if self.clip_norm is not None and not self.clip_norm > 0:
            raise PrivacyConfigError(
                f"clip_norm must be None or > 0 (got {self.clip_norm})."
            )

    @property
    def disabled(self) -> bool:
        return self.lambda_ldp == 0 and self.lambda_dp == 0 and self.clip_norm is None


def laplace_noise(
    shape, scale: float, rng: np.random.Generator, dtype=np.float64
) -> np.ndarray:
    """Laplace(0, scale) samples drawn by inverting the CDF of uniform samples."""
    u = np.clip(rng.random(shape), np.finfo(np.float64).tiny, None)
    noise = np.where(u < 0.5, scale * np.log(2 * u), -scale * np.log(2 - 2 * u))
    return noise.astype(dtype, copy=False)


def laplace_perturb(
    x: np.ndarray, scale: float, rng: Optional[np.random.Generator] = None
) -> np.ndarray:
    """Adds i.i.d. Laplace(0, scale) noise to every entry of ``x``.

    A scale of 0 returns an unperturbed copy and draws nothing from ``rng``.
    """
    if not scale >= 0:
        raise PrivacyConfigError(f"Laplace scale must be >= 0 (got {scale}).")
    x = np.asarray(x)
    if scale == 0:
        return x.copy()
    if rng is None:
        rng = np.random.default_rng()
    return x + laplace_noise(x.shape, scale, rng, dtype=x.dtype)


def clip_l2(x: np.ndarray, bound: float) -> np.ndarray:
    """Rescales ``x`` (or each row of a 2D ``x``) to L2 norm at most ``bound``."""
    if not bound > 0:
        raise PrivacyConfigError(f"Clipping bound must be > 0 (got {bound}).")
    x = np.asarray(x)
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    factor = np.where(norms > bound, bound / np.where(norms > 0, norms, 1), 1.0)
    return x * factor


class LaplaceMechanism:
    """A party's perturbation step: optional clipping followed by Laplace noise.

    Each mechanism owns its random stream.

    Args:
        scale: The Laplace scale.
        clip_norm: Optional L2 bound applied before the noise.
        rng: The random stream, or a seed for a new one.
    """

    def __init__(
        self,
        scale: float,
        clip_norm: Optional[float] = None,
        rng: Union[np.random.Generator, int, None] = None,
    ):
        if not scale >= 0:
            raise PrivacyConfigError(f"Laplace scale must be >= 0 (got {scale}).")
        if clip_norm is not None and not clip_norm > 0:
            raise PrivacyConfigError(f"clip_norm must be > 0 (got {clip_norm}).")
        self.scale = scale
        self.clip_norm = clip_norm
        self.rng = np.random.default_rng(rng)

    @property
    def identity(self) -> bool:
        return self.scale == 0 and self.clip_norm is None

    def __call__(self, x: np.ndarray) -> np.ndarray:
        if self.clip_norm is not None:
            x = clip_l2(x, self.clip_norm)
        return laplace_perturb(x, self.scale, self.rng)

    def __repr__(self) -> str:
        return (
            f"{self.__class__.__name__}(scale={self.scale}, clip_norm={self.clip_norm})"
        )
