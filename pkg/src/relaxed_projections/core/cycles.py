from collections import Counter
from collections.abc import Sequence
from dataclasses import dataclass
import logging

from relaxed_projections.core.errors import InputError


@dataclass(frozen=True)
class Segmentation:
    """
    Greedy factorization of a scanned word into cycles and a trailing non-cycle.

    Positions are half-open ranges (start, stop) into the scanned word. The word
    is read as the product R_n...R_1 is read, so position 0 holds the index of R_n.

    Attributes:
        cycle_segments (tuple[tuple[int, int], ...]): The k closed cycles, in scan order.
        remainder (tuple[int, int]): The unclosed tail, possibly empty.
        k (int): Number of cycles.
        boundaries (tuple[int, ...]): p_0 < ... < p_k, where p_k = n and p_i is
            the largest j such that R_n...R_{j+1} factors into exactly k - i cycles.
    """
    cycle_segments: tuple[tuple[int, int], ...]
    remainder: tuple[int, int]
    k: int
    boundaries: tuple[int, ...]


def _check_word(word: Sequence[int], ell: int) -> None:
    if ell < 1:
        raise InputError(f"ell must be >= 1, got {ell}")
    bad = [i for i in word if not 0 <= i < ell]
    if bad:
        raise InputError(f"word indices {bad} out of range [0, {ell})")


def is_cycle(word: Sequence[int], ell: int) -> bool:
    """
    True iff every one of the ell subspaces appears in the word and at least
    one of them appears exactly once.
    """
    _check_word(word, ell)
    counts = Counter(word)
    return len(counts) == ell and 1 in counts.values()


def segment_cycles(word: Sequence[int], ell: int) -> Segmentation:
    """
    Scan the word left to right and close a segment the first time it covers
    all ell subspaces.

    The index that closes a segment was not seen before inside it, so it
    appears there exactly once and every closed segment is a cycle. The trailing
    unclosed part misses at least one subspace, so no sub-word of it is a cycle.
    """
    _check_word(word, ell)
    segments = []
    start = 0
    seen: set[int] = set()
    for position, index in enumerate(word):
        seen.add(index)
        if len(seen) == ell:
            segments.append((start, position + 1))
            start = position + 1
            seen = set()

    n = len(word)
    remainder = (start, n)
    # scan position t holds R_{n-t}, so a segment ending at stop leaves R_{n-stop}...R_1
    boundaries = [n - stop for _, stop in reversed(segments)] + [n]
    logging.debug(f"segment_cycles: {len(segments)} cycles, remainder length {n - start}")
    return Segmentation(
        cycle_segments=tuple(segments),
        remainder=remainder,
        k=len(segments),
        boundaries=tuple(boundaries),
    )


def contains_cycle(word: Sequence[int], ell: int) -> bool:
    """True iff some contiguous sub-word is a cycle (equivalently, the word covers all ell subspaces)."""
    _check_word(word, ell)
    return len(set(word)) == ell
