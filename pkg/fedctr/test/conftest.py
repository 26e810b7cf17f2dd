import os

import pytest

import fedctr
from fedctr.diagnostics import diagnostic_config

RUN_SLOW = os.environ.get("FEDCTR_SLOW", "") not in ("", "0")


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "slow: statistical checks over many seeds, run with FEDCTR_SLOW=1"
    )


def pytest_collection_modifyitems(config, items):
    if RUN_SLOW:
        return
    skip = pytest.mark.skip(reason="set FEDCTR_SLOW=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(scope="package")
def small_dataset():
    spec = fedctr.SyntheticSpec(
        num_users=30,
        num_platforms=2,
        num_topics=4,
        vocab_size=60,
        num_ads=10,
        behaviors_per_user=4.0,
        words_per_behavior=3.0,
        words_per_title=3.0,
        words_per_description=4.0,
        impressions_per_user=4,
        seed=0,
    )
    dataset = fedctr.generate_synthetic(spec)

    assert dataset.num_platforms == 2
    assert len(dataset.impressions) == 30 * 4
    assert dataset.num_ads == 10
    return dataset


@pytest.fixture(scope="package")
def small_config(small_dataset):
    return diagnostic_config(
        vocab_size=len(small_dataset.vocab),
        num_ads=small_dataset.num_ads,
        num_platforms=small_dataset.num_platforms,
        max_behaviors=5,
    )
