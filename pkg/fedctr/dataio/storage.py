"""Reading and writing dataset directories.

A dataset directory holds tab-separated text files. Lines starting with ``#``
are comments; token lists are space-separated token ids (possibly empty).

``vocab.txt``
    ``<id>\\t<token>``, one line per id, ids ``0, 1, 2, ...`` in order.
``ads.txt``
    ``<ad id>\\t<title token ids>\\t<description token ids>``
``impressions.txt``
    ``<user id>\\t<ad id>\\t<label>\\t<timestamp>``
``behaviors_platform_<i>.txt``
    ``<user id>\\t<timestamp>\\t<token ids>``, for platforms ``i = 1 ... K``.
``meta.txt``
    ``<key>=<value>`` lines. ``num_platforms`` and ``platform_names`` are required.
"""

import logging
import os
import re
from typing import Dict, List, Tuple

from .records import (
    AdRecord,
    BehaviorRecord,
    Dataset,
    DatasetError,
    PlatformBehaviors,
    TrainingSample,
)
from .vocab import RESERVED, Vocab

logger = logging.getLogger(__name__)

BEHAVIOR_FILE_PATTERN = re.compile(r"^behaviors_platform_(\d+)\.txt$")


def behavior_file_name(platform: int) -> str:
    return f"behaviors_platform_{platform}.txt"


def _format_tokens(tokens) -> str:
    return " ".join(map(str, tokens))


def _write_lines(path: str, header: str, lines: List[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"# {header}\n")
        for line in lines:
            f.write(line + "\n")


def _read_rows(path: str, num_fields: int) -> List[Tuple[int, List[str]]]:
    if not os.path.exists(path):
        raise DatasetError("Missing file.", path)
    rows = []
    with open(path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != num_fields:
                raise DatasetError(
                    f"Expected {num_fields} tab-separated fields, got {len(fields)}.",
                    path,
                    line_number,
                )
            rows.append((line_number, fields))
    return rows


def _parse_int(value: str, what: str, path: str, line: int) -> int:
    try:
        return int(value)
    except ValueError:
        raise DatasetError(f"Invalid {what} {value!r}.", path, line) from None


def _parse_tokens(value: str, vocab_size: int, path: str, line: int) -> Tuple[int, ...]:
    tokens = tuple(_parse_int(v, "token id", path, line) for v in value.split())
    for token in tokens:
        if not 0 <= token < vocab_size:
            raise DatasetError(
                f"Token id {token} outside the vocabulary of size {vocab_size}.",
                path,
                line,
            )
    return tokens


def save_dataset(dataset: Dataset, path: str) -> None:
    """Writes ``dataset`` to the directory ``path``. Output is byte-deterministic."""
    os.makedirs(path, exist_ok=True)
    _write_lines(
        os.path.join(path, "vocab.txt"),
        "id\ttoken",
        [f"{i}\t{token}" for i, token in enumerate(dataset.vocab.tokens)],
    )
    _write_lines(
        os.path.join(path, "ads.txt"),
        "ad_id\ttitle\tdescription",
        [
            f"{ad.ad_id}\t{_format_tokens(ad.title)}\t{_format_tokens(ad.description)}"
            for _, ad in sorted(dataset.ads.items())
        ],
    )
    _write_lines(
        os.path.join(path, "impressions.txt"),
        "user_id\tad_id\tlabel\ttimestamp",
        [
            f"{s.user_id}\t{s.ad_id}\t{s.label}\t{s.timestamp}"
            for s in dataset.impressions
        ],
    )
    for platform in dataset.platforms:
        _write_lines(
            os.path.join(path, behavior_file_name(platform.platform)),
            "user_id\ttimestamp\ttokens",
            [
                f"{r.user_id}\t{r.timestamp}\t{_format_tokens(r.tokens)}"
                for r in platform.records()
            ],
        )
    meta = dict(dataset.meta)
    meta["num_platforms"] = str(dataset.num_platforms)
    meta["platform_names"] = ",".join(dataset.platform_names)
    for key, value in dataset.stats().items():
        meta[f"stats.{key}"] = str(value)
    _write_lines(
        os.path.join(path, "meta.txt"),
        "key=value",
        [f"{key}={value}" for key, value in meta.items()],
    )
    logger.info(f"Saved dataset with {len(dataset.impressions)} impressions to {path}.")


def read_meta(path: str) -> Dict[str, str]:
    meta = {}
    meta_path = os.path.join(path, "meta.txt")
    if not os.path.exists(meta_path):
        raise DatasetError("Missing file.", meta_path)
    with open(meta_path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DatasetError("Expected a key=value line.", meta_path, line_number)
            key, value = line.split("=", 1)
            meta[key.strip()] = value.strip()
    return meta


def load_dataset(path: str) -> Dataset:
    """Loads and validates a dataset directory written by :func:`save_dataset`.

    Raises:
        DatasetError: If a file is missing or violates the schema. The message
            names the file and the 1-based line number.
    """
    meta = read_meta(path)
    meta_path = os.path.join(path, "meta.txt")
    if "num_platforms" not in meta:
        raise DatasetError("Missing key 'num_platforms'.", meta_path)
    num_platforms = _parse_int(meta["num_platforms"], "platform count", meta_path, None)
    names = meta.get("platform_names", "")
    names = names.split(",") if names else []
    if len(names) != num_platforms:
        names = [f"platform_{i}" for i in range(1, num_platforms + 1)]

    vocab_path = os.path.join(path, "vocab.txt")
    tokens = []
    for line, (token_id, token) in _read_rows(vocab_path, 2):
        if _parse_int(token_id, "token id", vocab_path, line) != len(tokens):
            raise DatasetError("Token ids must be consecutive from 0.", vocab_path, line)
        tokens.append(token)
    if tuple(tokens[: len(RESERVED)]) != RESERVED:
        raise DatasetError(f"The first tokens must be {RESERVED!r}.", vocab_path)
    vocab = Vocab(tokens[len(RESERVED) :])
    vocab_size = len(vocab)

    ads_path = os.path.join(path, "ads.txt")
    ads = {}
    for line, (ad_id, title, description) in _read_rows(ads_path, 3):
        ad_id = _parse_int(ad_id, "ad id", ads_path, line)
        if ad_id < 0 or ad_id in ads:
            raise DatasetError(f"Invalid or duplicate ad id {ad_id}.", ads_path, line)
        ads[ad_id] = AdRecord(
            ad_id,
            _parse_tokens(title, vocab_size, ads_path, line),
            _parse_tokens(description, vocab_size, ads_path, line),
        )

    impressions_path = os.path.join(path, "impressions.txt")
    impressions = []
    for line, fields in _read_rows(impressions_path, 4):
        user_id, ad_id, label, timestamp = (
            _parse_int(value, what, impressions_path, line)
            for value, what in zip(fields, ("user id", "ad id", "label", "timestamp"))
        )
        if label not in (0, 1):
            raise DatasetError(f"Label must be 0 or 1, got {label}.", impressions_path, line)
        if ad_id not in ads:
            raise DatasetError(f"Unknown ad id {ad_id}.", impressions_path, line)
        impressions.append(TrainingSample(user_id, ad_id, label, timestamp))
    if not impressions:
        raise DatasetError("No impressions.", impressions_path)

    for name in sorted(os.listdir(path)):
        match = BEHAVIOR_FILE_PATTERN.match(name)
        if match and not 1 <= int(match.group(1)) <= num_platforms:
            raise DatasetError(
                f"Unknown platform {int(match.group(1))}; meta.txt declares"
                f" {num_platforms} platforms.",
                os.path.join(path, name),
            )

    platforms = []
    for index in range(1, num_platforms + 1):
        behaviors_path = os.path.join(path, behavior_file_name(index))
        records = []
        for line, (user_id, timestamp, token_ids) in _read_rows(behaviors_path, 3):
            records.append(
                BehaviorRecord(
                    index,
                    _parse_int(user_id, "user id", behaviors_path, line),
                    _parse_int(timestamp, "timestamp", behaviors_path, line),
                    _parse_tokens(token_ids, vocab_size, behaviors_path, line),
                )
            )
        platforms.append(PlatformBehaviors(index, records, name=names[index - 1]))

    meta = {
        key: value
        for key, value in meta.items()
        if key not in ("num_platforms", "platform_names") and not key.startswith("stats.")
    }
    dataset = Dataset(vocab, ads, impressions, platforms, meta)
    logger.info(
        f"Loaded dataset from {path}: {len(impressions)} impressions,"
        f" {len(ads)} ads, {num_platforms} platforms."
    )
    return dataset
