"""Tokenization and n-gram counting shared by all metrics.

All functions are pure and operate on immutable token tuples, so they are
safe to call from any thread.
"""

from __future__ import annotations

from collections import Counter
from typing import Sequence

TokenSeq = tuple[str, ...]
NGram = tuple[str, ...]


def tokenize(text: str, normalize: bool = False) -> TokenSeq:
    """Split ``text`` on runs of whitespace; lowercase first if ``normalize``.

    No punctuation splitting is performed: input corpora are expected to be
    pre-tokenized, so anything fancier would make scores irreproducible.
    Empty or whitespace-only input yields an empty tuple.
    """
    if normalize:
        text = text.lower()
    return tuple(text.split())


def extract_ngrams(tokens: Sequence[str], n: int) -> Counter:
    """Count the contiguous n-grams of order ``n`` in ``tokens``.

    Keys are token tuples of length ``n``; a sequence shorter than ``n``
    yields an empty counter. Rejects ``n < 1``.
    """
    if n < 1:
        raise ValueError(f"n-gram order must be >= 1, got {n}")
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def clipped_count(gram: NGram, u: Counter, v: Counter) -> int:
    """min of ``gram``'s occurrence counts in ``u`` and ``v`` (0 if absent)."""
    return min(u.get(gram, 0), v.get(gram, 0))
