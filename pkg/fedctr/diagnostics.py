"""Finite-difference checks of every hand-derived backward pass.

:func:`gradient_suite` builds desk-scale models, evaluates a scalar objective
of each component in evaluation mode and compares the analytic gradients,
including those with respect to the component inputs, against central
differences.
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np

from .dataio import AdRecord
from .models import (
    AdModel,
    Aggregator,
    AggregatorKind,
    CtrPredictor,
    ModelConfig,
    PredictorKind,
    TextEncoder,
    UserModel,
    mean_bce_loss,
)
from .nnkit import (
    ForwardTape,
    LayerParams,
    add_position_embeddings,
    add_position_embeddings_backward,
    attentive_pooling,
    attentive_pooling_backward,
    attentive_pooling_layer,
    check_gradients,
    dense,
    dense_backward,
    dense_layer,
    embed_lookup,
    embed_lookup_backward,
    embedding_layer,
    multi_head_self_attention,
    multi_head_self_attention_backward,
    position_layer,
    self_attention_layer,
)

logger = logging.getLogger(__name__)

TOLERANCE = 1e-4


@dataclass(frozen=True)
class ComponentCheck:
    """The worst relative gradient error of one component.

    Args:
        component: Name of the checked component.
        max_error: The worst relative error over all checked blocks.
        worst_block: The ``"<layer>.<block>"`` with the worst error.
        tolerance: Errors below this value pass.
    """

    component: str
    max_error: float
    worst_block: str
    tolerance: float = TOLERANCE

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance


def diagnostic_config(**kwargs) -> ModelConfig:
    """A validated desk-scale :class:`ModelConfig` without dropout."""
    values = dict(
        vocab_size=40,
        num_ads=6,
        num_platforms=3,
        word_dim=8,
        num_heads=2,
        head_dim=4,
        pooling_dim=6,
        id_dim=4,
        max_tokens=6,
        max_behaviors=4,
        dropout=0.0,
        fm_factors=3,
        seed=0,
    )
    values.update(kwargs)
    config = ModelConfig(**values)
    config.validate()
    return config


Objective = Callable[[np.ndarray], tuple]


def projection_objective(rng: np.random.Generator, shape) -> Objective:
    """``sum(out * w)`` for a fixed random ``w``."""
    weights = rng.standard_normal(shape)

    def objective(out):
        return float(np.sum(out * weights)), weights

    return objective


def check_component(
    name: str,
    forward: Callable[[Optional[ForwardTape]], np.ndarray],
    backward: Callable[[ForwardTape, np.ndarray], None],
    params: Sequence[LayerParams],
    objective: Optional[Objective] = None,
    max_coords: Optional[int] = 12,
    epsilon: float = 1e-5,
    seed: int = 0,
) -> ComponentCheck:
    """Checks the gradients of one component.

    Args:
        name: Name of the component.
        forward: Runs the forward pass, recording on the tape if one is given.
        backward: Consumes the whole tape given the gradient of the objective
            with respect to the forward output.
        params: Parameters and inputs to perturb.
        objective: Maps the forward output to ``(value, gradient)``.
            Defaults to a random projection.
        max_coords: Coordinates checked per block.
        epsilon: The finite-difference step.
        seed: Seed for the projection and the choice of coordinates.

    Returns:
        A :class:`ComponentCheck`.
    """
    rng = np.random.default_rng(seed)
    if objective is None:
        objective = projection_objective(rng, np.shape(forward(None)))

    def fn(compute_grad: bool) -> float:
        tape = ForwardTape(training=False) if compute_grad else None
        value, grad = objective(forward(tape))
        if compute_grad:
            backward(tape, grad)
        return value

    errors = check_gradients(
        fn, params, epsilon=epsilon, max_coords=max_coords, seed=seed
    )
    worst_block = max(errors, key=errors.get)
    check = ComponentCheck(name, errors[worst_block], worst_block)
    logger.debug(f"{name}: max relative error {check.max_error:.2e} ({worst_block})")
    return check


def _input(name: str, rng: np.random.Generator, shape) -> LayerParams:
    return LayerParams.parameter(name, rng.standard_normal(shape))


def _replayed(fn):
    """Adapts a cursor-level backward function to consume a whole tape."""

    def backward(tape, grad):
        cursor = tape.replay()
        fn(cursor, grad)
        cursor.finish()

    return backward


def _layer_checks(config: ModelConfig, rng: np.random.Generator, **kwargs):
    length, dim = 5, config.word_dim
    tokens = [3, 7, 7, 1, 12]

    table = embedding_layer("embedding", config.vocab_size, dim, rng)
    position = position_layer("position", config.max_tokens, dim, rng)

    def embed(tape):
        return add_position_embeddings(embed_lookup(table, tokens, tape), position, tape)

    def embed_backward(cursor, grad):
        grad = add_position_embeddings_backward(position, cursor, grad)
        embed_lookup_backward(table, cursor, grad)

    yield check_component(
        "embedding", embed, _replayed(embed_backward), [table, position], **kwargs
    )

    attention = self_attention_layer(
        "self_attention", dim, config.num_heads, config.head_dim, rng
    )
    x = _input("self_attention.input", rng, (length, dim))
    yield check_component(
        "self_attention",
        lambda tape: multi_head_self_attention(x["value"], attention, tape),
        _replayed(
            lambda cursor, grad: x.accumulate(
                "value", multi_head_self_attention_backward(attention, cursor, grad)
            )
        ),
        [attention, x],
        **kwargs,
    )

    pooling = attentive_pooling_layer("attentive_pooling", dim, config.pooling_dim, rng)
    x = _input("attentive_pooling.input", rng, (length, dim))
    yield check_component(
        "attentive_pooling",
        lambda tape: attentive_pooling(x["value"], pooling, tape),
        _replayed(
            lambda cursor, grad: x.accumulate(
                "value", attentive_pooling_backward(pooling, cursor, grad)
            )
        ),
        [pooling, x],
        **kwargs,
    )

    for activation in ("tanh", "sigmoid"):
        layer = dense_layer(f"dense_{activation}", dim, 4, rng, activation=activation)
        x = _input(f"dense_{activation}.input", rng, (length, dim))
        yield check_component(
            f"dense.{activation}",
            lambda tape, x=x, layer=layer: dense(x["value"], layer, tape=tape),
            _replayed(
                lambda cursor, grad, x=x, layer=layer: x.accumulate(
                    "value", dense_backward(layer, cursor, grad)
                )
            ),
            [layer, x],
            **kwargs,
        )


def _model_checks(config: ModelConfig, rng: np.random.Generator, **kwargs):
    encoder = TextEncoder("text_encoder", config, rng)
    tokens = [4, 9, 2, 30, 9, 17, 5]
    yield check_component(
        "text_encoder",
        lambda tape: encoder.forward(tokens, tape),
        _replayed(encoder.backward),
        encoder.layers,
        **kwargs,
    )

    user_model = UserModel(config, rng)
    # The second user has no history and exercises the cold-start vector.
    histories = [[[5, 6, 7], [8, 9], [10, 11, 12, 13]], [], [[14, 15, 16]]]
    yield check_component(
        "user_model",
        lambda tape: user_model.forward_batch(histories, tape),
        user_model.backward_batch,
        user_model.layers,
        **kwargs,
    )

    ad_model = AdModel(config, rng)
    ads = [
        AdRecord(1, (3, 4, 5), (6, 7, 8, 9)),
        AdRecord(2, (10, 11), ()),
        AdRecord(config.num_ads + 5, (), (12, 13)),
    ]
    yield check_component(
        "ad_model",
        lambda tape: ad_model.forward_batch(ads, tape),
        ad_model.backward_batch,
        ad_model.layers,
        **kwargs,
    )


def _aggregator_checks(config: ModelConfig, rng: np.random.Generator, **kwargs):
    batch, dim = 4, config.embed_dim
    responders = [k != 1 for k in range(config.num_platforms)]
    for kind in AggregatorKind:
        config_k = _with(config, aggregator=kind, predictor="dense")
        aggregator = Aggregator(config_k, rng)
        local = _input("local", rng, (batch, config.num_platforms, dim))
        yield check_component(
            f"aggregator.{kind.value}",
            lambda tape, a=aggregator, x=local: a.aggregate_batch(
                x["value"], tape, responders
            ),
            lambda tape, grad, a=aggregator, x=local: x.accumulate(
                "value", a.backward_batch(tape, grad)
            ),
            aggregator.layers + [local],
            **kwargs,
        )


def _predictor_checks(config: ModelConfig, rng: np.random.Generator, **kwargs):
    batch, dim = 6, config.embed_dim
    labels = np.array([1, 0, 0, 1, 1, 0])
    for kind in PredictorKind:
        config_k = _with(config, predictor=kind, aggregator="attention")
        predictor = CtrPredictor(config_k, rng)
        u = _input("user_embedding", rng, (batch, dim))
        d = _input("ad_embedding", rng, (batch, dim))

        def backward(tape, grad, predictor=predictor, u=u, d=d):
            grad_u, grad_d = predictor.backward_batch(tape, grad)
            u.accumulate("value", grad_u)
            d.accumulate("value", grad_d)

        yield check_component(
            f"predictor.{kind.value}",
            lambda tape, p=predictor, u=u, d=d: p.predict_batch(
                u["value"], d["value"], tape
            ),
            backward,
            predictor.layers + [u, d],
            objective=lambda y_hat: mean_bce_loss(y_hat, labels),
            **kwargs,
        )


def _with(config: ModelConfig, **changes) -> ModelConfig:
    values = config.to_dict()
    values.update(changes)
    return diagnostic_config(**values)


def gradient_suite(
    config: Optional[ModelConfig] = None,
    max_coords: Optional[int] = 12,
    epsilon: float = 1e-5,
    seed: int = 0,
) -> List[ComponentCheck]:
    """Checks the gradients of every layer, model, aggregator and predictor.

    Args:
        config: Model dimensions. Defaults to :func:`diagnostic_config`.
            Dropout is disabled for the checks.
        max_coords: Coordinates checked per parameter block, or ``None`` for all.
        epsilon: The finite-difference step.
        seed: Seed for initialization, inputs and coordinate choice.

    Returns:
        One :class:`ComponentCheck` per component.
    """
    if config is None:
        config = diagnostic_config(seed=seed)
    else:
        config = _with(config, dropout=0.0)
    rng = np.random.default_rng(seed)
    kwargs = dict(max_coords=max_coords, epsilon=epsilon, seed=seed)
    checks = []
    for group in (_layer_checks, _model_checks, _aggregator_checks, _predictor_checks):
        checks.extend(group(config, rng, **kwargs))
    failed = [check.component for check in checks if not check.passed]
    if failed:
        logger.warning(f"Gradient check failed for: {', '.join(failed)}")
    return checks


def format_checks(checks: Sequence[ComponentCheck]) -> str:
    """A plain-text table of component, max relative error and status."""
    width = max(len("Component"), *(len(check.component) for check in checks))
    lines = [f"{'Component':<{width}}  Max rel. error  Status"]
    lines.append("-" * len(lines[0]))
    for check in checks:
        status = "ok" if check.passed else "FAIL"
        lines.append(f"{check.component:<{width}}  {check.max_error:14.2e}  {status}")
    return "\n".join(lines)
