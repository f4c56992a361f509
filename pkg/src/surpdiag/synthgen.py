"""Synthetic fixture generator with a planted frequency effect.

Builds a complete desk-scale corpus plus K pseudo-variants of increasing
"model size": every variant's surprisal tracks a shared human-like signal,
but larger variants predict the rarest words increasingly well (their
surprisal shrinks) while reading times keep following the fixed human-like
mixed model.  Regressions on the larger variants should therefore
underpredict rare-word reading times, reproducing the steepest negative
MSE-vs-log-perplexity slope in quintile 1.

The generator also plays the scorer's role for primary-side testing: given
a manifest it emits a score file honoring context conditions through the
same file contracts the external scorer uses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import scoring, unigram
from .corpus import EYE_TRACKING, SELF_PACED, Document, WordToken
from .scoring import ScoreManifest, TokenScore


@dataclass(frozen=True)
class VariantSpec:
    model_id: str
    gamma: float    # rare-word surprisal shrink ("model size")
    delta: float    # common-word absolute surprisal reduction, bits


DEFAULT_VARIANTS = (
    VariantSpec("pseudo-70m", 0.00, 0.00),
    VariantSpec("pseudo-160m", 0.22, 0.25),
    VariantSpec("pseudo-410m", 0.45, 0.50),
    VariantSpec("pseudo-1b", 0.65, 0.75),
)


@dataclass
class SynthSpec:
    seed: int = 20240501
    paradigm: str = SELF_PACED
    n_docs: int = 12
    sentences_per_doc: int = 12
    words_per_sentence: tuple[int, int] = (8, 13)
    n_subjects: int = 16
    n_common_types: int = 150
    n_rare_types: int = 250
    variants: tuple[VariantSpec, ...] = DEFAULT_VARIANTS
    steps: tuple[int, ...] = (143000,)
    window: int = 64
    occlusion_n: tuple[int, ...] = (49, 24, 9)
    permutations: int = 1000
    analysis_seed: int = 1234
    covariance: str = "diagonal"
    jobs: int = 1
    bad_subject: bool = True
    tokenizer_id: str = "synth-bpe"
    # Reading-time model (log-ms space).
    rt_intercept: float = 5.72
    rt_beta: tuple[float, ...] = (0.10, 0.02, -0.015, 0.02)
    rt_subject_sd: tuple[float, ...] = (0.06, 0.02, 0.008, 0.006, 0.008)
    rt_group_sd: float = 0.035
    rt_noise_sd: float = 0.10


@dataclass
class _DocTokens:
    doc: Document
    tokens: list[TokenScore]              # spans only; log2prob None
    word_token_idx: dict[int, list[int]]  # word_index -> token indices
    word_token_text: dict[int, list[str]]
    token_word: dict[int, int]            # token index -> word_index


@dataclass
class SynthWorld:
    spec: SynthSpec
    docs: dict[str, _DocTokens]
    counts: dict[str, int]
    uni_bits: dict[tuple[str, int], float]
    rho: dict[tuple[str, int], float]
    human_bits: dict[tuple[str, int], float]
    s_final: dict[tuple[str, int], np.ndarray]   # per variant
    s_init: dict[tuple[str, int], float]
    token_share: dict[tuple[str, int], np.ndarray]
    events: list[dict] = field(default_factory=list)

    def word_surprisal(self, key: tuple[str, int], variant_idx: int,
                       step: int) -> float:
        spec = self.spec.variants[variant_idx]
        tau = 3000.0 / (1.0 + 2.0 * (spec.gamma + 0.2))
        a = step / (step + tau) if step > 0 else 0.0
        s = (1.0 - a) * self.s_init[key] + a * self.s_final[key][variant_idx]
        return max(s, 0.1)

    def occlusion_increment(self, key: tuple[str, int], variant_idx: int,
                            n_context: int, full_context: int) -> float:
        """Extra word surprisal when context is cut to n_context tokens."""
        if n_context >= full_context:
            return 0.0
        frac = 1.0 - n_context / 50.0
        if frac <= 0.0:
            return 0.0
        spec = self.spec.variants[variant_idx]
        return frac * (0.15 + (0.8 + 2.2 * spec.gamma) * self.rho[key])


def _zipf_weights(n: int, offset: float = 2.0) -> np.ndarray:
    w = 1.0 / (np.arange(n) + offset)
    return w / w.sum()


def build_world(spec: SynthSpec) -> SynthWorld:
    """Deterministically build the synthetic world from the spec seed."""
    rng = np.random.default_rng(spec.seed)

    n_types = spec.n_common_types + spec.n_rare_types
    letters = list("bcdfghklmnprstvz")
    vowels = list("aeiou")

    def make_word(i: int, length: int) -> str:
        parts = []
        r = i
        for j in range(length):
            parts.append(letters[(r + 3 * j) % len(letters)])
            parts.append(vowels[(r // 7 + j) % len(vowels)])
            r = r * 31 + 17
        return "".join(parts)

    # Rank 0 = most frequent.  Common types are single-token, rare types
    # split into two subword tokens, like BPE does to infrequent words.
    type_words: list[str] = []
    type_pieces: list[list[str]] = []
    seen = set()
    for i in range(n_types):
        length = 2 if i < spec.n_common_types else 4
        w = make_word(i, length)
        while w in seen:
            w += vowels[i % len(vowels)]
        seen.add(w)
        type_words.append(w)
        if i < spec.n_common_types:
            type_pieces.append([w])
        else:
            cut = max(2, len(w) - 3)
            type_pieces.append([w[:cut], w[cut:]])

    weights = _zipf_weights(n_types)
    big = 1_000_000_000
    counts: dict[str, int] = {}
    for i, pieces in enumerate(type_pieces):
        for j, piece in enumerate(pieces):
            token = " " + piece if j == 0 else piece
            counts[token] = counts.get(token, 0) + max(
                1, int(round(big * weights[i]))
            )
    model = unigram.UnigramModel(token_counts=counts,
                                 total=sum(counts.values()),
                                 tokenizer_id=spec.tokenizer_id)

    docs: dict[str, _DocTokens] = {}
    uni_bits: dict[tuple[str, int], float] = {}
    token_share: dict[tuple[str, int], np.ndarray] = {}
    lo, hi = spec.words_per_sentence
    for d in range(spec.n_docs):
        doc_id = f"doc{d:02d}"
        words: list[WordToken] = []
        tokens: list[TokenScore] = []
        word_token_idx: dict[int, list[int]] = {}
        word_token_text: dict[int, list[str]] = {}
        token_word: dict[int, int] = {}
        text_parts: list[str] = []
        pos = 0
        token_index = 1
        word_index = 0
        for s in range(spec.sentences_per_doc):
            n_words = int(rng.integers(lo, hi + 1))
            for j in range(n_words):
                t = int(rng.choice(n_types, p=weights))
                pieces = type_pieces[t]
                lead = " " if word_index > 0 else ""
                word_text = type_words[t]
                start = pos + len(lead)
                words.append(WordToken(
                    word_index=word_index, char_start=start,
                    char_end=start + len(word_text), sentence_id=s,
                    position_in_sentence=j + 1,
                    screen_id=(s // 4 if spec.paradigm == EYE_TRACKING else None),
                    line_id=(s // 2 if spec.paradigm == EYE_TRACKING else None),
                ))
                idxs, texts = [], []
                for pi, piece in enumerate(pieces):
                    chunk = (lead if pi == 0 else "") + piece
                    tokens.append(TokenScore(
                        doc_id=doc_id, token_index=token_index,
                        token_text=chunk, char_start=pos,
                        char_end=pos + len(chunk), log2prob=None,
                    ))
                    idxs.append(token_index)
                    texts.append(chunk)
                    token_word[token_index] = word_index
                    pos += len(chunk)
                    token_index += 1
                word_token_idx[word_index] = idxs
                word_token_text[word_index] = texts
                key = (doc_id, word_index)
                # Unigram lookup uses the mid-document (space-led) surface
                # form so every occurrence of a type shares one value.
                canon = [" " + pieces[0]] + list(pieces[1:])
                uni_bits[key] = unigram.word_unigram_surprisal(model, canon)
                m = len(pieces)
                share = 0.6 ** np.arange(m)
                token_share[key] = share / share.sum()
                text_parts.append(lead + word_text)
                word_index += 1
        doc = Document(doc_id=doc_id, text="".join(text_parts), words=words)
        docs[doc_id] = _DocTokens(doc=doc, tokens=tokens,
                                  word_token_idx=word_token_idx,
                                  word_token_text=word_token_text,
                                  token_word=token_word)

    # Rarity score: positions in the rarest ~quarter by unigram surprisal.
    keys = sorted(uni_bits)
    vals = np.array([uni_bits[k] for k in keys])
    ranks = vals.argsort().argsort() / max(1, len(vals) - 1)
    rho = {k: float(np.clip((r - 0.72) / 0.25, 0.0, 1.0))
           for k, r in zip(keys, ranks)}

    human_bits: dict[tuple[str, int], float] = {}
    s_final: dict[tuple[str, int], np.ndarray] = {}
    s_init: dict[tuple[str, int], float] = {}
    gammas = np.array([v.gamma for v in spec.variants])
    deltas = np.array([v.delta for v in spec.variants])
    for key in keys:
        h = 1.0 + 0.45 * uni_bits[key] + 1.3 * rng.normal()
        h = max(h, 0.3)
        human_bits[key] = h
        noise = rng.normal(0.0, 0.06, size=len(spec.variants))
        s = h * (1.0 - gammas * rho[key]) - deltas * (1.0 - rho[key]) + noise
        s_final[key] = np.maximum(s, 0.1)
        doc_id, wi = key
        n_tok = len(docs[doc_id].word_token_idx[wi])
        s_init[key] = 12.0 + 2.5 * (n_tok - 1) + 0.2 * rng.normal()

    world = SynthWorld(spec=spec, docs=docs, counts=counts,
                       uni_bits=uni_bits, rho=rho, human_bits=human_bits,
                       s_final=s_final, s_init=s_init,
                       token_share=token_share)
    _generate_events(world, rng)
    return world


def _generate_events(world: SynthWorld, rng: np.random.Generator) -> None:
    spec = world.spec
    keys = sorted(world.uni_bits)
    n_pos = len(keys)

    def zscore(v):
        return (v - v.mean()) / v.std(ddof=1)

    h = zscore(np.array([world.human_bits[k] for k in keys]))
    uni = zscore(np.array([world.uni_bits[k] for k in keys]))
    lengths, positions = [], []
    for doc_id, wi in keys:
        w = world.docs[doc_id].doc.word(wi)
        lengths.append(w.char_end - w.char_start)
        positions.append(w.position_in_sentence)
    length = zscore(np.array(lengths, dtype=float))
    position = zscore(np.array(positions, dtype=float))
    preds = np.column_stack([h, length, position, uni])

    et = spec.paradigm == EYE_TRACKING
    beta = np.array(spec.rt_beta)
    sub_sd = np.array(spec.rt_subject_sd)
    if et:
        beta = np.concatenate([beta, [0.02, -0.01]])
        sub_sd = np.concatenate([sub_sd, [0.005, 0.005]])

    group_levels: dict[tuple, float] = {}
    for s in range(spec.n_subjects):
        sid = str(s + 1)
        b_subj = rng.normal(0.0, 1.0, size=len(sub_sd)) * sub_sd
        score = ""
        if not et:
            score = "6"
            if spec.bad_subject and s == spec.n_subjects - 1:
                score = "2"
        fixated_prev = True
        for i, (doc_id, wi) in enumerate(keys):
            w = world.docs[doc_id].doc.word(wi)
            row = {
                "subject_id": sid, "doc_id": doc_id, "word_index": wi,
                "sentence_id": w.sentence_id,
                "position_in_sentence": w.position_in_sentence,
                "char_start": w.char_start, "char_end": w.char_end,
                "screen_id": "" if w.screen_id is None else w.screen_id,
                "line_id": "" if w.line_id is None else w.line_id,
                "subject_score": score,
            }
            if et:
                fixated = bool(rng.random() > 0.08)
                saccade = round(float(abs(rng.normal(1.5, 1.2))), 1)
                row["fixated"] = int(fixated)
                row["saccade_len"] = saccade
                row["prev_fixated"] = int(fixated_prev)
                if not fixated:
                    row["rt_ms"] = ""
                    world.events.append(row)
                    fixated_prev = fixated
                    continue
                x = np.concatenate([preds[i], [(saccade - 1.5) / 1.2,
                                               1.0 if fixated_prev else 0.0]])
                fixated_prev = fixated
            else:
                row["fixated"] = ""
                row["saccade_len"] = ""
                row["prev_fixated"] = ""
                x = preds[i]
            if et:
                gkey = (doc_id, w.sentence_id)
            else:
                gkey = (sid, doc_id, w.sentence_id)
            if gkey not in group_levels:
                group_levels[gkey] = rng.normal(0.0, spec.rt_group_sd)
            log_rt = (spec.rt_intercept + float(beta @ x)
                      + b_subj[0] + float(b_subj[1:] @ x)
                      + group_levels[gkey]
                      + rng.normal(0.0, spec.rt_noise_sd))
            row["rt_ms"] = round(math.exp(log_rt), 1)
            world.events.append(row)


# ---------------------------------------------------------------------------
# Fixture writing


def write_fixture(world: SynthWorld, outdir: str | Path) -> Path:
    """Write corpus, counts, token sidecar, and config; returns config path."""
    outdir = Path(outdir)
    corpus_dir = outdir / "corpus"
    docs_dir = corpus_dir / "docs"
    docs_dir.mkdir(parents=True, exist_ok=True)
    spec = world.spec

    for doc_id, dt in sorted(world.docs.items()):
        (docs_dir / f"{doc_id}.txt").write_text(dt.doc.text, encoding="utf-8")

    from .corpus import EVENT_COLUMNS
    with open(corpus_dir / "events.tsv", "w", encoding="utf-8") as fh:
        fh.write("\t".join(EVENT_COLUMNS) + "\n")
        for row in world.events:
            fh.write("\t".join(str(row[c]) for c in EVENT_COLUMNS) + "\n")

    with open(corpus_dir / "counts.tsv", "w", encoding="utf-8") as fh:
        for token in sorted(world.counts):
            fh.write(f"{token}\t{world.counts[token]}\n")

    header = {"model_id": "", "checkpoint_step": 0,
              "tokenizer_id": spec.tokenizer_id, "window_size": 0,
              "condition": "tokens", "n": None}
    all_tokens = [t for dt in world.docs.values() for t in dt.tokens]
    scoring.write_score_file(header, all_tokens, corpus_dir / "tokens.jsonl")

    lines = [
        "[corpus]",
        "id = synth",
        f"paradigm = {spec.paradigm}",
        "events = corpus/events.tsv",
        "docs = corpus/docs",
        "unigram_counts = corpus/counts.tsv",
        "tokens = corpus/tokens.jsonl",
        "",
    ]
    for v in spec.variants:
        lines += [
            f"[model:{v.model_id}]",
            f"steps = {','.join(str(s) for s in spec.steps)}",
            f"window = {spec.window}",
            f"tokenizer = {spec.tokenizer_id}",
            "",
        ]
    lines += [
        "[scoring]",
        f"occlusion_n = {','.join(str(n) for n in spec.occlusion_n)}",
        "occlusion_scope = quintile1",
        "",
        "[regression]",
        f"covariance = {spec.covariance}",
        "",
        "[analysis]",
        "outdir = out",
        f"seed = {spec.analysis_seed}",
        f"permutations = {spec.permutations}",
        f"jobs = {spec.jobs}",
        "",
    ]
    cfg = outdir / "config.ini"
    cfg.write_text("\n".join(lines), encoding="utf-8")
    return cfg


# ---------------------------------------------------------------------------
# Reference scorer (plays the external scorer's role over the file contract)


def _variant_index(world: SynthWorld, model_id: str) -> int:
    for i, v in enumerate(world.spec.variants):
        if v.model_id == model_id:
            return i
    raise ValueError(f"unknown pseudo-variant {model_id!r}")


def score_manifest(world: SynthWorld, manifest: ScoreManifest) -> list[TokenScore]:
    """Produce token scores for a manifest, honoring context conditions."""
    vi = _variant_index(world, manifest.model_id)
    out: list[TokenScore] = []
    docs_seen: set[str] = set()
    for req in manifest.requests:
        dt = world.docs[req.doc_id]
        if req.doc_id not in docs_seen and req.condition == scoring.FULL:
            docs_seen.add(req.doc_id)
            first = dt.tokens[0]
            out.append(first)  # unscored document-initial line (log2prob None)
        for target in range(req.target_start, req.target_end + 1):
            tok = dt.tokens[target - 1]
            assert tok.token_index == target
            wi = _word_of_token(dt, target)
            key = (req.doc_id, wi)
            word_s = world.word_surprisal(key, vi, manifest.checkpoint_step)
            if req.condition == scoring.RECENT:
                word_s += world.occlusion_increment(
                    key, vi, req.n, full_context=target - 1
                )
            idxs = dt.word_token_idx[wi]
            share = world.token_share[key][idxs.index(target)]
            tok_bits = max(word_s * share, 1e-4)
            out.append(TokenScore(
                doc_id=tok.doc_id, token_index=tok.token_index,
                token_text=tok.token_text, char_start=tok.char_start,
                char_end=tok.char_end, log2prob=-tok_bits,
                condition=req.condition, n=req.n,
            ))
    return out


def _word_of_token(dt: _DocTokens, token_index: int) -> int:
    return dt.token_word[token_index]


def score_all_manifests(world: SynthWorld, manifests_dir: str | Path,
                        scores_dir: str | Path) -> int:
    """Score every manifest file into a same-named score file."""
    manifests_dir = Path(manifests_dir)
    scores_dir = Path(scores_dir)
    scores_dir.mkdir(parents=True, exist_ok=True)
    n = 0
    for mp in sorted(manifests_dir.glob("*.jsonl")):
        manifest = scoring.read_manifest(mp)
        tokens = score_manifest(world, manifest)
        scoring.write_score_file(manifest.header(), tokens, scores_dir / mp.name)
        n += 1
    return n
