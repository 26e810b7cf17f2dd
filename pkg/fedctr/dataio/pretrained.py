import logging
from typing import Dict, Iterable, Tuple

import numpy as np

from ..nnkit import LayerParams
from .records import DatasetError
from .vocab import RESERVED, Vocab

logger = logging.getLogger(__name__)


def read_word_vectors(path: str, vocab: Vocab) -> Dict[int, np.ndarray]:
    """Reads a GloVe-style text file, keeping the vectors of tokens in ``vocab``.

    Every line holds a token followed by its vector components, separated by
    whitespace. The first occurrence of a token wins.

    Returns:
        A dict of ``{token id: vector}``.
    """
    vectors = {}
    dim = None
    with open(path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            fields = line.split()
            if not fields:
                continue
            token, values = fields[0], fields[1:]
            if dim is None:
                dim = len(values)
            elif len(values) != dim:
                raise DatasetError(
                    f"Expected {dim} components, got {len(values)}.", path, line_number
                )
            if token in RESERVED or token not in vocab:
                continue
            token_id = vocab.token_id(token)
            if token_id in vectors:
                continue
            try:
                vectors[token_id] = np.array(values, dtype=np.float64)
            except ValueError:
                raise DatasetError("Invalid vector component.", path, line_number) from None
    return vectors


def load_pretrained_embeddings(
    path: str, vocab: Vocab, table: np.ndarray
) -> Tuple[np.ndarray, float]:
    """Overlays pretrained vectors on a word embedding table.

    Args:
        path: A GloVe-style text file.
        vocab: The vocabulary indexing the rows of ``table``.
        table: The current table, shape ``(len(vocab), dim)``.

    Returns:
        A new table with the rows of covered tokens replaced, and the coverage,
        the fraction of non-reserved vocabulary tokens found in the file.
    """
    table = np.array(table, copy=True)
    vectors = read_word_vectors(path, vocab)
    for token_id, vector in vectors.items():
        if vector.shape != (table.shape[1],):
            raise DatasetError(
                f"Pretrained vectors have dimension {vector.size} but the embedding"
                f" table has dimension {table.shape[1]}.",
                path,
            )
        table[token_id] = vector
    num_tokens = len(vocab) - len(RESERVED)
    coverage = len(vectors) / num_tokens if num_tokens else 0.0
    return table, coverage


def apply_pretrained_embeddings(
    path: str, vocab: Vocab, tables: Iterable[LayerParams]
) -> float:
    """Loads pretrained vectors into every given word embedding layer in place.

    Returns:
        The coverage, as in :func:`load_pretrained_embeddings`.
    """
    coverage = 0.0
    for layer in tables:
        table, coverage = load_pretrained_embeddings(path, vocab, layer["table"])
        layer.params["table"][...] = table
    logger.info(f"Pretrained embeddings from {path} cover {coverage:.1%} of the vocabulary.")
    return coverage
