import numpy as np
import pytest

from fedctr.dataio import BehaviorRecord, PlatformBehaviors
from fedctr.diagnostics import diagnostic_config
from fedctr.models import UserModel
from fedctr.nnkit import ShapeError
from fedctr.privacy import (
    AttackInstance,
    LaplaceMechanism,
    PrivacyConfig,
    PrivacyConfigError,
    build_attack_instances,
    clip_l2,
    instance_auc,
    laplace_noise,
    laplace_perturb,
    run_attack,
)
from fedctr.privacy.attack import NUM_NEGATIVES


@pytest.mark.parametrize("scale", [0.01, 0.5, 2.0])
def test_laplace_moments(scale):
    rng = np.random.default_rng(0)
    samples = laplace_noise(1_000_000, scale, rng)
    assert abs(samples.mean()) < 5 * scale * np.sqrt(2 / 1e6)
    assert samples.var() == pytest.approx(2 * scale**2, rel=0.02)
    assert np.median(np.abs(samples)) == pytest.approx(scale * np.log(2), rel=0.02)


def test_laplace_perturb_zero_scale():
    x = np.random.default_rng(0).standard_normal((4, 3))
    rng = np.random.default_rng(1)
    state = rng.bit_generator.state
    out = laplace_perturb(x, 0.0, rng)
    assert out is not x
    assert np.array_equal(out, x)
    # No randomness is consumed.
    assert rng.bit_generator.state == state

    with pytest.raises(PrivacyConfigError):
        laplace_perturb(x, -1.0, rng)


def test_laplace_perturb_seeded():
    x = np.zeros((2, 5))
    first = laplace_perturb(x, 0.1, np.random.default_rng(3))
    second = laplace_perturb(x, 0.1, np.random.default_rng(3))
    assert np.array_equal(first, second)
    assert not np.array_equal(first, x)


def test_clip_l2():
    x = np.array([[3.0, 4.0], [0.3, 0.4], [0.0, 0.0]])
    clipped = clip_l2(x, 1.0)
    assert np.allclose(np.linalg.norm(clipped, axis=1), [1.0, 0.5, 0.0])
    assert np.allclose(clipped[0], [0.6, 0.8])
    assert np.array_equal(clipped[1], x[1])
    assert np.allclose(clip_l2(np.array([6.0, 8.0]), 5.0), [3.0, 4.0])
    with pytest.raises(PrivacyConfigError):
        clip_l2(x, 0.0)


def test_mechanism():
    identity = LaplaceMechanism(0.0)
    assert identity.identity
    x = np.ones((2, 3))
    assert np.array_equal(identity(x), x)

    clipping = LaplaceMechanism(0.0, clip_norm=1.0)
    assert not clipping.identity
    assert np.allclose(np.linalg.norm(clipping(x), axis=1), 1.0)

    noisy = LaplaceMechanism(0.1, rng=4)
    assert not np.array_equal(noisy(x), x)
    with pytest.raises(PrivacyConfigError):
        LaplaceMechanism(-0.1)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(lambda_ldp=-0.1),
        dict(lambda_dp=np.inf),
        dict(clip_norm=0.0),
    ],
)
def test_privacy_config_invalid(kwargs):
    with pytest.raises(PrivacyConfigError):
        PrivacyConfig(**kwargs).validate()


def test_privacy_config_disabled():
    assert not PrivacyConfig().disabled
    assert PrivacyConfig(0, 0).disabled
    assert not PrivacyConfig(0, 0, clip_norm=1.0).disabled


def test_instance_auc():
    assert instance_auc([5, 1, 2, 3], 0) == 1.0
    assert instance_auc([0, 1, 2, 3], 0) == 0.0
    assert instance_auc([1, 1, 0, 2], 1) == pytest.approx((1 + 0.5) / 3)


@pytest.fixture(scope="module")
def behaviors():
    rng = np.random.default_rng(0)
    records = [
        BehaviorRecord(1, user, t, tuple(rng.integers(2, 50, size=3).tolist()))
        for user in range(200)
        for t in range(5)
    ]
    return PlatformBehaviors(1, records)


def test_build_attack_instances(behaviors):
    targets = {user: np.zeros(4) for user in range(200)}
    instances = build_attack_instances(targets, [behaviors], "local_1", 50, seed=0)
    assert len(instances) == 50
    assert len({instance.user_id for instance in instances}) == 50
    for instance in instances:
        assert len(instance.candidates) == NUM_NEGATIVES + 1
        assert instance.positive.user_id == instance.user_id
        assert all(c.user_id != instance.user_id for c in instance.negatives)
        assert instance.target_kind == "local_1"

    again = build_attack_instances(targets, [behaviors], "local_1", 50, seed=0)
    assert [i.candidates for i in again] == [i.candidates for i in instances]

    # Users are reused once every eligible user has been drawn.
    assert len(build_attack_instances(targets, [behaviors], "x", 450, seed=0)) == 450
    assert build_attack_instances({999: np.zeros(4)}, [behaviors], "x", seed=0) == []


def test_null_attack(behaviors):
    # Targets unrelated to the behaviors give an attack AUC of about one half.
    rng = np.random.default_rng(1)
    table = rng.standard_normal((50, 8))
    targets = {user: rng.standard_normal(8) for user in range(200)}
    instances = build_attack_instances(targets, [behaviors], "local_1", 4000, seed=2)

    def encoder(record):
        return table[list(record.tokens)].sum(axis=0)

    assert run_attack(encoder, instances) == pytest.approx(0.5, abs=0.02)


def test_oracle_attack(behaviors):
    # A target equal to the positive's encoding ranks it first.
    rng = np.random.default_rng(1)
    table = rng.standard_normal((50, 8))

    def encoder(record):
        return table[list(record.tokens)].sum(axis=0)

    targets = {user: np.zeros(8) for user in range(200)}
    instances = build_attack_instances(targets, [behaviors], "aggregated", 100, seed=3)
    oracle = [
        AttackInstance(
            encoder(instance.positive) * 100,
            instance.candidates,
            instance.positive_index,
            instance.user_id,
        )
        for instance in instances
    ]
    assert run_attack(encoder, oracle) > 0.95


def test_run_attack_errors(behaviors):
    targets = {user: np.zeros(3) for user in range(10)}
    instances = build_attack_instances(targets, [behaviors], "local_1", 5, seed=0)
    with pytest.raises(ShapeError):
        run_attack(lambda record: np.zeros(4), instances)
    with pytest.raises(ValueError):
        run_attack(lambda record: np.zeros(3), [])


def test_null_attack_on_user_model():
    # Random user embeddings against a real behavior encoder.
    config = diagnostic_config(vocab_size=60)
    model = UserModel(config, np.random.default_rng(0))
    rng = np.random.default_rng(5)
    records = [
        BehaviorRecord(1, user, t, tuple(rng.integers(2, 60, size=3).tolist()))
        for user in range(1000)
        for t in range(2)
    ]
    targets = {user: rng.standard_normal(config.embed_dim) for user in range(1000)}
    instances = build_attack_instances(
        targets, [PlatformBehaviors(1, records)], "local_1", 5000, seed=6
    )
    assert len(instances) == 5000
    assert run_attack(model.encode_behavior, instances) == pytest.approx(0.5, abs=0.02)
