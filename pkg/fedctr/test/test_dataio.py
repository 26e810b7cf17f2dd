import filecmp
import os
import tempfile

import numpy as np
import pytest

from fedctr.dataio import (
    OOV_ID,
    PAD_ID,
    AdRecord,
    BehaviorRecord,
    DatasetError,
    PlatformBehaviors,
    SyntheticSpec,
    TrainingSample,
    Vocab,
    apply_pretrained_embeddings,
    chronological_split,
    generate_synthetic,
    load_dataset,
    load_pretrained_embeddings,
    save_dataset,
    subsample,
    tokenize,
)
from fedctr.nnkit import LayerParams


@pytest.fixture(scope="module")
def tempdir():
    tmp = tempfile.TemporaryDirectory()
    yield tmp.__enter__()
    tmp.cleanup()


def test_tokenize():
    assert tokenize("Cheap Flights to NYC!") == ["cheap", "flights", "to", "nyc"]
    assert tokenize("  a--b_c  ") == ["a", "b", "c"]
    assert tokenize("") == []


def test_vocab():
    vocab = Vocab.build([["b", "a", "c"], ["a", "c"], ["a"]])
    assert vocab.tokens == ["<pad>", "<oov>", "a", "c", "b"]
    assert len(vocab) == 5
    assert vocab.encode(["a", "b", "zebra"]) == [2, 4, OOV_ID]
    assert vocab.decode([PAD_ID, 3]) == ["<pad>", "c"]
    assert vocab.encode_text("A c!") == [2, 3]
    assert "a" in vocab and "zebra" not in vocab

    assert Vocab.build([["b", "a", "c"], ["a", "c"]], max_size=3).tokens[2:] == ["a"]
    assert Vocab.build([["b", "a", "c"], ["a", "c"]], min_count=2).tokens[2:] == ["a", "c"]
    with pytest.raises(ValueError):
        Vocab(["a", "a"])


@pytest.fixture(scope="module")
def behaviors():
    records = [
        BehaviorRecord(1, 7, 30, (2, 3)),
        BehaviorRecord(1, 7, 10, (4,)),
        BehaviorRecord(1, 7, 20, (5,)),
        BehaviorRecord(1, 8, 20, (6,)),
    ]
    return PlatformBehaviors(1, records, name="search")


def test_platform_history(behaviors):
    assert len(behaviors) == 4
    assert behaviors.users() == [7, 8]
    assert [r.timestamp for r in behaviors.history(7)] == [10, 20, 30]
    # The cutoff is strict.
    assert [r.timestamp for r in behaviors.history(7, before=20)] == [10]
    assert [r.timestamp for r in behaviors.history(7, before=21)] == [10, 20]
    assert behaviors.history(7, before=10) == []
    assert behaviors.history(99) == []
    assert behaviors.history(99, before=5) == []
    assert [r.user_id for r in behaviors.records()] == [7, 7, 7, 8]

    with pytest.raises(DatasetError):
        PlatformBehaviors(2, [BehaviorRecord(1, 7, 0, ())])


def test_keep_recent(behaviors):
    recent = behaviors.keep_recent(0.5)
    assert [r.timestamp for r in recent.history(7)] == [20, 30]
    assert len(recent.history(8)) == 1
    assert recent.name == "search"
    assert len(behaviors.keep_recent(1.0)) == 4
    with pytest.raises(ValueError):
        behaviors.keep_recent(0)


def test_dataset(small_dataset):
    assert small_dataset.platform_names == ["search", "browsing"]
    with pytest.raises(DatasetError):
        small_dataset.platform(0)
    with pytest.raises(DatasetError):
        small_dataset.platform(3)

    swapped = small_dataset.select_platforms([2, 1])
    assert swapped.platform_names == ["browsing", "search"]
    assert swapped.platform(1).platform == 1
    assert [r.tokens for r in swapped.platform(1).records()] == [
        r.tokens for r in small_dataset.platform(2).records()
    ]
    assert small_dataset.select_platforms([1]).num_platforms == 1

    stats = small_dataset.stats()
    assert stats["impressions"] == 120
    assert stats["clicks"] + stats["non_clicks"] == 120
    assert stats["ads"] == 10
    assert stats["platform_1_behaviors"] == len(small_dataset.platform(1))

    half = small_dataset.with_behavior_fraction(0.5)
    assert len(half.platform(1)) <= len(small_dataset.platform(1))
    assert half.impressions is small_dataset.impressions
    assert small_dataset.with_behavior_fraction(1) is small_dataset


def test_synthetic_data():
    spec = SyntheticSpec(
        num_users=20, num_platforms=3, num_topics=6, vocab_size=80, num_ads=8, seed=4
    )
    first = generate_synthetic(spec)
    second = generate_synthetic(spec)
    assert first.impressions == second.impressions
    assert first.vocab == second.vocab
    assert first.platform_names == ["search", "browsing", "shopping"]
    assert first.latent["visibility"].sum(axis=0).tolist() == [1] * 6

    timestamps = [s.timestamp for s in first.impressions]
    assert timestamps == sorted(timestamps)
    assert min(timestamps) >= spec.history_span
    assert max(timestamps) < spec.history_span + spec.impression_span
    for platform in first.platforms:
        for record in platform.records():
            assert 0 <= record.timestamp < spec.history_span
            assert record.tokens
            assert all(2 <= t < len(first.vocab) for t in record.tokens)

    other = generate_synthetic(SyntheticSpec(num_users=20, num_platforms=3, seed=5))
    assert other.impressions != first.impressions


def test_synthetic_visibility():
    spec = SyntheticSpec(
        num_users=40,
        num_platforms=2,
        num_topics=4,
        vocab_size=80,
        num_ads=8,
        informativeness=[1.0, 1.0],
        seed=2,
    )
    dataset = generate_synthetic(spec)
    visibility = dataset.latent["visibility"]
    for k, platform in enumerate(dataset.platforms):
        topic_words = background = 0
        for record in platform.records():
            words = dataset.vocab.decode(record.tokens)
            # A behavior is all topic words of one visible topic, or all background.
            if words[0].startswith("bg"):
                assert all(word.startswith("bg") for word in words)
                background += 1
            else:
                topics = {int(word[1 : word.index("w")]) for word in words}
                assert len(topics) == 1
                assert visibility[k, topics.pop()]
                topic_words += 1
        assert topic_words > 0
        assert background > 0


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(num_users=0),
        dict(vocab_size=10, num_topics=20),
        dict(num_platforms=2, visibility=[[0]]),
        dict(num_topics=2, num_platforms=2, visibility=[[0], [0]]),
        dict(informativeness=[0.5]),
        dict(beta=-1.0),
    ],
)
def test_synthetic_spec_invalid(kwargs):
    with pytest.raises(DatasetError):
        SyntheticSpec(**kwargs).validate()


def test_chronological_split(small_dataset):
    impressions = small_dataset.impressions
    t_max = max(s.timestamp for s in impressions)
    train, val, test = chronological_split(impressions, 40, val_fraction=0.2, seed=0)
    assert len(train) + len(val) + len(test) == len(impressions)
    assert all(s.timestamp > t_max - 40 for s in test)
    assert all(s.timestamp <= t_max - 40 for s in train + val)
    assert len(val) == round(0.2 * (len(train) + len(val)))
    assert (train, val, test) == chronological_split(impressions, 40, 0.2, seed=0)
    assert train == sorted(train, key=lambda s: s.timestamp)

    with pytest.raises(DatasetError):
        chronological_split(impressions, 10_000)
    with pytest.raises(DatasetError):
        chronological_split([], 10)
    with pytest.raises(ValueError):
        chronological_split(impressions, 40, val_fraction=1.0)


def test_subsample(small_dataset):
    impressions = small_dataset.impressions
    half = subsample(impressions, 0.5, seed=1)
    assert len(half) == 60
    assert half == subsample(impressions, 0.5, seed=1)
    positions = [impressions.index(s) for s in half]
    assert positions == sorted(positions)
    assert subsample(impressions, 1.0) == impressions
    with pytest.raises(ValueError):
        subsample(impressions, 0.0)


def test_save_and_load(small_dataset, tempdir):
    path = os.path.join(tempdir, "data")
    save_dataset(small_dataset, path)
    loaded = load_dataset(path)
    assert loaded.vocab == small_dataset.vocab
    assert loaded.ads == small_dataset.ads
    assert loaded.impressions == small_dataset.impressions
    assert loaded.platform_names == small_dataset.platform_names
    assert loaded.meta == small_dataset.meta
    assert loaded.latent is None
    for ours, theirs in zip(loaded.platforms, small_dataset.platforms):
        assert list(ours.records()) == list(theirs.records())

    # Saving is deterministic.
    again = os.path.join(tempdir, "again")
    save_dataset(loaded, again)
    names = sorted(os.listdir(path))
    match, mismatch, errors = filecmp.cmpfiles(path, again, names, shallow=False)
    assert match == names


def write_dataset(path, impressions="0\t0\t1\t5\n"):
    os.makedirs(path, exist_ok=True)
    files = {
        "meta.txt": "num_platforms=1\nplatform_names=search\n",
        "vocab.txt": "0\t<pad>\n1\t<oov>\n2\tcar\n",
        "ads.txt": "# ad_id\ttitle\tdescription\n0\t2\t2 2\n",
        "impressions.txt": impressions,
        "behaviors_platform_1.txt": "0\t1\t2\n",
    }
    for name, text in files.items():
        with open(os.path.join(path, name), "w") as f:
            f.write(text)


def test_load_minimal_dataset(tempdir):
    path = os.path.join(tempdir, "minimal")
    write_dataset(path)
    dataset = load_dataset(path)
    assert dataset.ads == {0: AdRecord(0, (2,), (2, 2))}
    assert dataset.impressions == [TrainingSample(0, 0, 1, 5)]
    assert dataset.platform_names == ["search"]


@pytest.mark.parametrize(
    "impressions, line",
    [
        ("0\t0\t1\t5\n0\t0\t2\t6\n", 2),
        ("# header\n0\t0\t1\n", 2),
        ("0\t9\t1\t5\n", 1),
        ("0\tx\t1\t5\n", 1),
    ],
)
def test_load_errors(tempdir, impressions, line):
    path = os.path.join(tempdir, f"bad-{line}-{len(impressions)}")
    write_dataset(path, impressions)
    with pytest.raises(DatasetError) as excinfo:
        load_dataset(path)
    assert excinfo.value.line == line
    assert excinfo.value.path.endswith("impressions.txt")
    assert f"line {line}" in str(excinfo.value)


def test_load_missing_file(tempdir):
    path = os.path.join(tempdir, "missing")
    write_dataset(path)
    os.remove(os.path.join(path, "behaviors_platform_1.txt"))
    with pytest.raises(DatasetError):
        load_dataset(path)
    with pytest.raises(DatasetError):
        load_dataset(os.path.join(tempdir, "nowhere"))


def test_pretrained_embeddings(tempdir):
    vocab = Vocab(["car", "boat", "plane"])
    path = os.path.join(tempdir, "vectors.txt")
    with open(path, "w") as f:
        f.write("car 1 2\nunknown 5 5\nboat 3 4\ncar 9 9\n")
    table = np.zeros((len(vocab), 2))
    new_table, coverage = load_pretrained_embeddings(path, vocab, table)
    assert coverage == pytest.approx(2 / 3)
    assert np.array_equal(new_table[vocab.token_id("car")], [1, 2])
    assert np.array_equal(new_table[vocab.token_id("boat")], [3, 4])
    assert not new_table[vocab.token_id("plane")].any()
    assert not table.any()

    layer = LayerParams("words", "embedding", {"table": np.zeros((len(vocab), 2))})
    assert apply_pretrained_embeddings(path, vocab, [layer]) == pytest.approx(2 / 3)
    assert np.array_equal(layer["table"][2], [1, 2])

    with pytest.raises(DatasetError):
        load_pretrained_embeddings(path, vocab, np.zeros((len(vocab), 3)))
    with open(path, "a") as f:
        f.write("plane 1\n")
    with pytest.raises(DatasetError):
        load_pretrained_embeddings(path, vocab, table)
