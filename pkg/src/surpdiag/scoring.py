"""Scoring protocol: window planning, score ingestion, word aggregation.

The language-model scorer is an external component.  This module plans the
token windows it must evaluate, reads back its token log2-probabilities,
aligns subword tokens to corpus words by character offset, and aggregates
word surprisal (in bits) and corpus perplexity.

File contracts (both UTF-8 JSON lines, shared with the scorer):

* manifest: header line ``{"model_id", "checkpoint_step", "tokenizer_id",
  "window_size", "condition", "n"}`` then one line per request
  ``{"doc_id", "context_start", "target_start", "target_end", "condition",
  "n"}``; ``n`` is null for the full condition.
* score file: the same header, then one line per token ``{"doc_id",
  "token_index", "char_start", "char_end", "token_text", "log2prob"}``.
  Token indices are 1-based; ``log2prob`` is null exactly for a document's
  first token, which is never a scoring target but is included so token
  spans tile the document text.
"""

from __future__ import annotations

import json
import logging
import math
from bisect import bisect_right
from dataclasses import dataclass, asdict
from pathlib import Path

from .corpus import Document

log = logging.getLogger(__name__)

FULL = "full"
RECENT = "recent"


class ScoringError(ValueError):
    """Invalid plan parameters or malformed score data."""


@dataclass(frozen=True)
class ScoreRequest:
    """One scoring job: score targets conditioned on tokens from
    context_start up to (but excluding) each target.  Indices are 1-based
    and inclusive."""

    doc_id: str
    context_start: int
    target_start: int
    target_end: int
    condition: str = FULL
    n: int | None = None

    def __post_init__(self):
        if not (1 <= self.context_start <= self.target_start <= self.target_end):
            raise ScoringError(f"bad request bounds: {self}")
        if self.condition == RECENT:
            if self.n is None or self.target_start != self.target_end:
                raise ScoringError(f"recent-n requests target one token: {self}")
            if self.target_start - self.context_start != self.n:
                raise ScoringError(f"recent-n context length mismatch: {self}")
        elif self.condition != FULL:
            raise ScoringError(f"unknown condition {self.condition!r}")


@dataclass
class ScoreManifest:
    model_id: str
    checkpoint_step: int
    tokenizer_id: str
    window_size: int
    condition: str
    n: int | None
    requests: list[ScoreRequest]

    def header(self) -> dict:
        return {
            "model_id": self.model_id,
            "checkpoint_step": self.checkpoint_step,
            "tokenizer_id": self.tokenizer_id,
            "window_size": self.window_size,
            "condition": self.condition,
            "n": self.n,
        }


@dataclass(frozen=True)
class TokenScore:
    doc_id: str
    token_index: int          # 1-based within the document
    token_text: str
    char_start: int
    char_end: int
    log2prob: float | None    # None only for a document's first token
    condition: str = FULL
    n: int | None = None

    @property
    def surprisal(self) -> float:
        if self.log2prob is None:
            raise ScoringError(
                f"token {self.token_index} of {self.doc_id!r} is unscored"
            )
        return -self.log2prob


@dataclass(frozen=True)
class WordSurprisal:
    doc_id: str
    word_index: int
    surprisal: float          # bits; sum over constituent scored tokens
    n_subword_tokens: int
    complete: bool            # False iff a constituent token is unscored


def plan_windows(token_count: int, W: int, doc_id: str = "") -> list[ScoreRequest]:
    """Sliding-window plan covering every token but the first exactly once.

    The first window spans tokens 1..min(W, token_count); each later window
    starts at the previous window's midpoint, so its context is the previous
    second half, and targets only tokens not yet scored.
    """
    if W < 2 or W % 2 != 0:
        raise ScoringError(f"window size must be even and >= 2, got {W}")
    if token_count < 1:
        raise ScoringError(f"token_count must be >= 1, got {token_count}")
    requests: list[ScoreRequest] = []
    if token_count < 2:
        return requests
    start = 1
    end = min(W, token_count)
    requests.append(ScoreRequest(doc_id, start, 2, end))
    half = W // 2
    while end < token_count:
        start += half
        prev_end = end
        end = min(start + W - 1, token_count)
        requests.append(ScoreRequest(doc_id, start, prev_end + 1, end))
    return requests


def plan_occlusion(target_index: int, n: int, doc_id: str = "") -> ScoreRequest:
    """Request scoring one token conditioned on exactly its n most recent
    context tokens.  Raises for targets without enough preceding context;
    callers skip and log such words."""
    if n < 1:
        raise ScoringError(f"context size must be positive, got {n}")
    if target_index <= n:
        raise ScoringError(
            f"insufficient context: token {target_index} has only "
            f"{target_index - 1} preceding tokens, need {n}"
        )
    return ScoreRequest(doc_id, target_index - n, target_index, target_index,
                        condition=RECENT, n=n)


def _first_nonspace(text: str, start: int, end: int) -> int | None:
    for i in range(start, end):
        if not text[i].isspace():
            return i
    return None


def assign_tokens(document: Document, scores: list[TokenScore]):
    """Assign each token to the word whose span contains the token's first
    non-whitespace character.

    Validates that token spans are ordered, non-overlapping, and tile the
    text.  Returns (assignments, incomplete_words) where assignments is a
    list of (word_index, TokenScore) and incomplete_words flags words
    touching unscored material (the document-initial token, or the
    uncovered prefix when that token's line is absent).  Pure-whitespace
    tokens are skipped.
    """
    scores = sorted(scores, key=lambda s: s.token_index)
    text = document.text
    prev_end = None
    prev_index = None
    for s in scores:
        if not (0 <= s.char_start < s.char_end <= len(text)):
            raise ScoringError(
                f"token {s.token_index} span ({s.char_start},{s.char_end}) "
                f"outside text of {document.doc_id!r}"
            )
        if prev_end is not None:
            if s.token_index == prev_index:
                raise ScoringError(f"duplicate token index {s.token_index}")
            if s.char_start < prev_end:
                raise ScoringError(
                    f"token spans overlap at token {s.token_index} of "
                    f"{document.doc_id!r}"
                )
            if s.char_start != prev_end:
                raise ScoringError(
                    f"token spans do not tile the text: gap before token "
                    f"{s.token_index} of {document.doc_id!r} "
                    f"([{prev_end},{s.char_start}) uncovered)"
                )
        prev_end = s.char_end
        prev_index = s.token_index

    starts = [w.char_start for w in document.words]

    def word_at(pos: int):
        i = bisect_right(starts, pos) - 1
        if i >= 0 and document.words[i].char_start <= pos < document.words[i].char_end:
            return document.words[i]
        return None

    incomplete: set[int] = set()
    if scores and scores[0].token_index > 1 and scores[0].char_start > 0:
        # Document-initial token line absent: its span is the uncovered
        # prefix; mark any word intersecting it incomplete.
        for w in document.words:
            if w.char_start >= scores[0].char_start:
                break
            incomplete.add(w.word_index)

    assignments: list[tuple[int, TokenScore]] = []
    for s in scores:
        pos = _first_nonspace(text, s.char_start, s.char_end)
        if pos is None:
            log.debug("whitespace-only token %d of %s skipped",
                      s.token_index, document.doc_id)
            continue
        word = word_at(pos)
        if word is None:
            raise ScoringError(
                f"token {s.token_index} of {document.doc_id!r} starts at "
                f"offset {pos}, which lies in no word span"
            )
        if s.char_end > word.char_end:
            log.debug("token %d of %s spans beyond word %d",
                      s.token_index, document.doc_id, word.word_index)
        assignments.append((word.word_index, s))
        # The document-initial token is unscorable (no context), so its word
        # is incomplete even if a score value is present.
        if s.log2prob is None or s.token_index == 1:
            incomplete.add(word.word_index)
    return assignments, incomplete


def align_tokens_to_words(document: Document,
                          scores: list[TokenScore]) -> list[WordSurprisal]:
    """Word surprisals: the sum of constituent token surprisals in bits.

    Words containing unscored material are flagged complete=False; words
    that received no token at all are omitted (and logged).
    """
    assignments, incomplete = assign_tokens(document, scores)
    sums: dict[int, float] = {}
    counts: dict[int, int] = {}
    for word_index, s in assignments:
        counts[word_index] = counts.get(word_index, 0) + 1
        if s.log2prob is not None:
            sums[word_index] = sums.get(word_index, 0.0) - s.log2prob

    out = []
    for w in document.words:
        if w.word_index not in counts and w.word_index not in incomplete:
            log.debug("word %d of %s received no tokens", w.word_index,
                      document.doc_id)
            continue
        out.append(WordSurprisal(
            doc_id=document.doc_id,
            word_index=w.word_index,
            surprisal=sums.get(w.word_index, 0.0),
            n_subword_tokens=counts.get(w.word_index, 0),
            complete=w.word_index not in incomplete,
        ))
    return out


def corpus_perplexity(scores: list[TokenScore]) -> float:
    """2 ** (mean token surprisal) over all scored full-condition tokens."""
    if not scores:
        raise ScoringError("no token scores given")
    total = 0.0
    count = 0
    for s in scores:
        if s.condition != FULL:
            raise ScoringError(
                "perplexity is defined over full-condition scores only"
            )
        if s.log2prob is None:
            continue
        if s.log2prob > 0:
            raise ScoringError(
                f"log2prob {s.log2prob} > 0 for token {s.token_index} of "
                f"{s.doc_id!r}"
            )
        total += -s.log2prob
        count += 1
    if count == 0:
        raise ScoringError("no scored tokens")
    return 2.0 ** (total / count)


# ---------------------------------------------------------------------------
# File formats


def write_manifest(manifest: ScoreManifest, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(manifest.header(), sort_keys=True) + "\n")
        for r in manifest.requests:
            fh.write(json.dumps(asdict(r), sort_keys=True) + "\n")


def read_manifest(path: str | Path) -> ScoreManifest:
    with open(path, encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        requests = []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            d = json.loads(line)
            requests.append(ScoreRequest(
                doc_id=d["doc_id"], context_start=d["context_start"],
                target_start=d["target_start"], target_end=d["target_end"],
                condition=d.get("condition", FULL), n=d.get("n"),
            ))
    return ScoreManifest(
        model_id=header["model_id"],
        checkpoint_step=int(header["checkpoint_step"]),
        tokenizer_id=header["tokenizer_id"],
        window_size=int(header["window_size"]),
        condition=header.get("condition", FULL),
        n=header.get("n"),
        requests=requests,
    )


def write_score_file(header: dict, scores: list[TokenScore],
                     path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for s in sorted(scores, key=lambda s: (s.doc_id, s.token_index)):
            fh.write(json.dumps({
                "doc_id": s.doc_id,
                "token_index": s.token_index,
                "char_start": s.char_start,
                "char_end": s.char_end,
                "token_text": s.token_text,
                "log2prob": s.log2prob,
            }, sort_keys=True) + "\n")


def read_score_file(path: str | Path) -> tuple[dict, list[TokenScore]]:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        for key in ("model_id", "checkpoint_step", "tokenizer_id",
                    "window_size", "condition"):
            if key not in header:
                raise ScoringError(f"{path}: score header missing {key!r}")
        condition = header["condition"]
        n = header.get("n")
        scores = []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            try:
                d = json.loads(line)
                lp = d["log2prob"]
                if lp is not None:
                    lp = float(lp)
                    if lp > 0 or math.isnan(lp):
                        raise ValueError(f"bad log2prob {lp}")
                scores.append(TokenScore(
                    doc_id=d["doc_id"],
                    token_index=int(d["token_index"]),
                    token_text=d["token_text"],
                    char_start=int(d["char_start"]),
                    char_end=int(d["char_end"]),
                    log2prob=lp,
                    condition=condition,
                    n=n,
                ))
            except (KeyError, ValueError, TypeError) as exc:
                raise ScoringError(f"{path}:{lineno}: bad score line: {exc}") from exc
    return header, scores
