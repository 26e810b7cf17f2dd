import re
from collections import Counter
from typing import Dict, Iterable, List, Optional, Sequence

PAD_ID = 0
OOV_ID = 1
PAD_TOKEN = "<pad>"
OOV_TOKEN = "<oov>"
RESERVED = (PAD_TOKEN, OOV_TOKEN)

_TOKEN_PATTERN = re.compile(r"[^\W_]+")


def tokenize(text: str) -> List[str]:
    """Lowercases ``text`` and splits it on runs of non-alphanumeric characters."""
    return _TOKEN_PATTERN.findall(text.lower())


class Vocab:
    """A bijective map between tokens and integer ids.

    Id 0 is padding and id 1 is the out-of-vocabulary token. The remaining
    tokens get ids ``2, 3, ...`` in the order given.

    Args:
        tokens: The non-reserved tokens, in id order.
    """

    def __init__(self, tokens: Sequence[str]):
        self._tokens: List[str] = list(RESERVED) + list(tokens)
        self._ids: Dict[str, int] = {}
        for i, token in enumerate(self._tokens):
            if token in self._ids:
                raise ValueError(f"Duplicate token {token!r} in vocabulary.")
            self._ids[token] = i

    @classmethod
    def build(
        cls,
        texts: Iterable[Sequence[str]],
        max_size: Optional[int] = None,
        min_count: int = 1,
    ) -> "Vocab":
        """Builds a vocabulary from tokenized texts.

        Tokens are ordered by descending frequency, ties broken lexicographically.

        Args:
            texts: Tokenized texts.
            max_size: Optional bound on the vocabulary size, reserved ids included.
            min_count: Minimum number of occurrences for a token to be kept.
        """
        counts = Counter()
        for tokens in texts:
            counts.update(tokens)
        ordered = sorted(
            (token for token, count in counts.items() if count >= min_count),
            key=lambda token: (-counts[token], token),
        )
        ordered = [token for token in ordered if token not in RESERVED]
        if max_size is not None:
            ordered = ordered[: max(max_size - len(RESERVED), 0)]
        return cls(ordered)

    def __len__(self) -> int:
        return len(self._tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self._tokens == other._tokens

    @property
    def tokens(self) -> List[str]:
        """Every token in id order, reserved tokens included."""
        return list(self._tokens)

    def token_id(self, token: str) -> int:
        return self._ids.get(token, OOV_ID)

    def token(self, token_id: int) -> str:
        return self._tokens[token_id]

    def encode(self, tokens: Sequence[str]) -> List[int]:
        return [self._ids.get(token, OOV_ID) for token in tokens]

    def decode(self, ids: Sequence[int]) -> List[str]:
        return [self._tokens[i] for i in ids]

    def encode_text(self, text: str) -> List[int]:
        return self.encode(tokenize(text))

    def __repr__(self) -> str:
        return f"{self.__class__.__name__}(size={len(self)})"
