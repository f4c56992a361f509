"""Unigram surprisal and frequency quintiles.

Word-level unigram surprisal is the sum of the constituent subword tokens'
unigram surprisals under a token count table.  Observations are then
partitioned into five equal-count bins of word positions by ascending
unigram log-probability; quintile 1 holds the least frequent words.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path


class UnigramError(ValueError):
    pass


# Unseen tokens are looked up with this pseudo-count; the table's total is
# left untouched (lookup-only smoothing).
UNSEEN_COUNT = 0.5


@dataclass
class UnigramModel:
    token_counts: dict[str, int]
    total: int
    tokenizer_id: str = ""

    def log2prob(self, token: str) -> float:
        count = self.token_counts.get(token, UNSEEN_COUNT)
        return math.log2(count / self.total)


@dataclass
class QuintileAssignment:
    """Quintile labels keyed by word position (doc_id, word_index).

    Quintile 1 holds the lowest unigram log-probabilities (rarest words);
    `boundaries` records the highest log-probability landing in quintiles
    1 through 4.
    """

    labels: dict[tuple[str, int], int]
    boundaries: tuple[float, float, float, float]

    def counts(self) -> dict[int, int]:
        out = {q: 0 for q in range(1, 6)}
        for q in self.labels.values():
            out[q] += 1
        return out


def load_counts(path: str | Path, tokenizer_id: str = "") -> UnigramModel:
    """Load a token<TAB>count table."""
    path = Path(path)
    counts: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise UnigramError(f"{path}:{lineno}: expected token<TAB>count")
            token, raw = parts
            try:
                count = int(raw)
            except ValueError as exc:
                raise UnigramError(f"{path}:{lineno}: bad count {raw!r}") from exc
            if count <= 0:
                raise UnigramError(f"{path}:{lineno}: count must be >= 1")
            if token in counts:
                raise UnigramError(f"{path}:{lineno}: duplicate token {token!r}")
            counts[token] = count
    if not counts:
        raise UnigramError(f"{path}: empty count table")
    return UnigramModel(token_counts=counts, total=sum(counts.values()),
                        tokenizer_id=tokenizer_id)


def word_unigram_surprisal(model: UnigramModel, word_tokens: list[str]) -> float:
    """Sum of -log2 P(token) over the word's subword tokens, in bits."""
    if not word_tokens:
        raise UnigramError("word has no tokens")
    return sum(-model.log2prob(t) for t in word_tokens)


def assign_quintiles(values: dict[tuple[str, int], float]) -> QuintileAssignment:
    """Equal-count partition of word positions by unigram log-probability.

    `values` maps (doc_id, word_index) to the word's unigram log2
    probability (negated surprisal).  Ties are broken by (doc_id,
    word_index) so the partition is deterministic; bin sizes differ by at
    most one.
    """
    n = len(values)
    if n < 5:
        raise UnigramError(f"need at least 5 word positions, got {n}")
    order = sorted(values.items(), key=lambda kv: (kv[1], kv[0]))
    labels: dict[tuple[str, int], int] = {}
    boundaries = []
    for i, (key, _) in enumerate(order):
        labels[key] = i * 5 // n + 1
    for q in range(1, 5):
        # Highest log-probability assigned to quintile q: the largest index
        # i with i*5//n == q-1 is ceil(q*n/5) - 1.
        boundaries.append(order[(q * n - 1) // 5][1])
    return QuintileAssignment(labels=labels, boundaries=tuple(boundaries))
