"""Named tokenizers used for budgeting, usage estimates and truncation.

Every tokenizer can split text into string pieces whose concatenation is the
original text, so token-level slicing (middle truncation, budget cuts) maps
back to text without a vocabulary file.
"""

from __future__ import annotations

import math
import re
from typing import Callable

from .errors import UnknownTokenizer

DEFAULT_TOKENIZER = "chars4"


class Tokenizer:
    def __init__(self, name: str, split: Callable[[str], list[str]], count: Callable[[str], int] | None = None):
        self.name = name
        self._split = split
        self._count = count

    def encode(self, text: str) -> list[str]:
        return self._split(text)

    def decode(self, pieces) -> str:
        return "".join(pieces)

    def count(self, text: str) -> int:
        if self._count is not None:
            return self._count(text)
        return len(self._split(text))

    def __repr__(self) -> str:
        return f"Tokenizer({self.name!r})"


def _split_chars4(text: str) -> list[str]:
    return [text[i:i + 4] for i in range(0, len(text), 4)]


_WORD = re.compile(r"\s*\S+")


def _split_words(text: str) -> list[str]:
    pieces = _WORD.findall(text)
    consumed = sum(len(p) for p in pieces)
    if consumed < len(text):
        # trailing whitespace rides on the last piece
        if pieces:
            pieces[-1] += text[consumed:]
        else:
            return []
    return pieces


_REGISTRY: dict[str, Tokenizer] = {
    "chars4": Tokenizer("chars4", _split_chars4, lambda s: math.ceil(len(s) / 4)),
    "whitespace": Tokenizer("whitespace", _split_words, lambda s: len(s.split())),
    "chars": Tokenizer("chars", list, len),
}


def register_tokenizer(tokenizer: Tokenizer) -> None:
    """Make a tokenizer available by name (e.g. a wrapper over tiktoken)."""
    _REGISTRY[tokenizer.name] = tokenizer


def get_tokenizer(name: str | None = None) -> Tokenizer:
    key = name or DEFAULT_TOKENIZER
    try:
        return _REGISTRY[key]
    except KeyError:
        raise UnknownTokenizer(f"unknown tokenizer {key!r}; known: {sorted(_REGISTRY)}") from None


def count_tokens(text: str, tokenizer: str | None = None) -> int:
    return get_tokenizer(tokenizer).count(text)


def estimate_tokens_from_bytes(byte_size: int) -> int:
    """File-level length estimate: one token per four bytes, rounded up."""
    return math.ceil(byte_size / 4)


def truncate_to_tokens(text: str, budget: int, tokenizer: str | None = None) -> tuple[str, bool]:
    """Longest token prefix of ``text`` within ``budget``; returns (text, cut)."""
    tok = get_tokenizer(tokenizer)
    if tok.count(text) <= budget:
        return text, False
    pieces = tok.encode(text)
    kept = tok.decode(pieces[:max(budget, 0)])
    # count() and encode() can disagree for custom tokenizers
    while kept and tok.count(kept) > budget:
        kept = kept[:-1]
    return kept, True
