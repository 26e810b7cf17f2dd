"""Finite-difference verification of hand-derived backward passes."""

from typing import Callable, Dict, Iterable, Optional

import numpy as np

from .params import LayerParams


class GradCheckError(RuntimeError):
    pass


def relative_error(analytic: float, numeric: float, floor: float = 1e-6) -> float:
    """``|a - n| / max(|a| + |n|, floor)``."""
    return abs(analytic - numeric) / max(abs(analytic) + abs(numeric), floor)


def check_gradients(
    fn: Callable[[bool], float],
    params: Iterable[LayerParams],
    epsilon: float = 1e-5,
    floor: float = 1e-6,
    max_coords: Optional[int] = None,
    seed: Optional[int] = None,
) -> Dict[str, float]:
    """Compares analytic gradients against central finite differences.

    ``fn(compute_grad)`` must evaluate a scalar from the current parameter values.
    When ``compute_grad`` is ``True`` it must also run the backward pass,
    accumulating gradients into ``params``. Gradient accumulators are zeroed
    before the analytic pass.

    Args:
        fn: The scalar-valued computation.
        params: The layers whose parameters are checked.
        epsilon: The finite-difference step.
        floor: Lower bound on the denominator of the relative error.
        max_coords: If given, check at most this many randomly chosen coordinates
            per parameter block.
        seed: Seed for the choice of coordinates.

    Returns:
        A dict of ``{"<layer>.<block>": worst relative error}``.
    """
    if epsilon <= 0:
        raise ValueError(f"epsilon must be > 0 (got {epsilon}).")
    params = list(params)
    for layer in params:
        layer.zero_grads()
    reference = float(fn(True))
    for _ in range(2):
        repeat = float(fn(False))
        if repeat != reference:
            raise GradCheckError(
                "Repeated evaluations differ"
                f" ({reference!r} != {repeat!r}); is dropout enabled?"
            )

    rng = np.random.default_rng(seed)
    errors = {}
    for layer in params:
        for key, value in layer.items():
            analytic = layer.grads[key].copy()
            coords = np.arange(value.size)
            if max_coords is not None and value.size > max_coords:
                coords = np.sort(rng.choice(value.size, size=max_coords, replace=False))
            worst = 0.0
            for i in coords:
                original = value.flat[i]
                value.flat[i] = original + epsilon
                f_plus = float(fn(False))
                value.flat[i] = original - epsilon
                f_minus = float(fn(False))
                value.flat[i] = original
                numeric = (f_plus - f_minus) / (2 * epsilon)
                worst = max(worst, relative_error(analytic.flat[i], numeric, floor))
            errors[f"{layer.name}.{key}"] = worst
    return errors


def grad_check(
    fn: Callable[[bool], float],
    params: Iterable[LayerParams],
    epsilon: float = 1e-5,
    floor: float = 1e-6,
    max_coords: Optional[int] = None,
    seed: Optional[int] = None,
) -> float:
    """Returns the worst relative error of :func:`check_gradients` over all blocks."""
    errors = check_gradients(
        fn, params, epsilon=epsilon, floor=floor, max_coords=max_coords, seed=seed
    )
    return max(errors.values(), default=0.0)
