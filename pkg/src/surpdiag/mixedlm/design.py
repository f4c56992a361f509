"""Regression specification and design-matrix assembly.

Fixed effects follow the reading-time baseline set: LM surprisal, word
length in characters, position within sentence, unigram surprisal, plus
saccade length and previous-word fixation for eye-tracking data.  All
predictors are standardized (mean 0, sample sd 1) before fitting.  The
random-effects structure is by-subject random slopes for all fixed effects
with a subject intercept, plus subject-by-sentence intercepts for
self-paced data or sentence intercepts for eye-tracking data.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from ..corpus import EYE_TRACKING, SELF_PACED, FilteredSet
from ..scoring import WordSurprisal

FULL_COV = "full"
DIAGONAL_COV = "diagonal"

SPR_FIXED = ["surprisal", "word_length", "word_position", "unigram_surprisal"]
ET_FIXED = SPR_FIXED + ["saccade_length", "prev_fixated"]


class DesignError(ValueError):
    pass


@dataclass(frozen=True)
class RandomTerm:
    grouping: str                     # subject | subject_sentence | sentence
    slopes: tuple[str, ...] = ()      # fixed effects with random slopes
    covariance: str = FULL_COV

    @property
    def block_size(self) -> int:
        return 1 + len(self.slopes)

    @property
    def n_params(self) -> int:
        b = self.block_size
        return b * (b + 1) // 2 if self.covariance == FULL_COV else b


@dataclass(frozen=True)
class RegressionSpec:
    fixed_effects: tuple[str, ...]
    random_terms: tuple[RandomTerm, ...]
    paradigm: str

    def __post_init__(self):
        if self.fixed_effects.count("surprisal") != 1:
            raise DesignError("spec must contain surprisal exactly once")
        for t in self.random_terms:
            for s in t.slopes:
                if s not in self.fixed_effects:
                    raise DesignError(f"random slope {s!r} is not a fixed effect")

    @classmethod
    def for_paradigm(cls, paradigm: str, covariance: str = FULL_COV) -> "RegressionSpec":
        if paradigm == SELF_PACED:
            fixed = tuple(SPR_FIXED)
            terms = (
                RandomTerm("subject", fixed, covariance),
                RandomTerm("subject_sentence", (), FULL_COV),
            )
        elif paradigm == EYE_TRACKING:
            fixed = tuple(ET_FIXED)
            terms = (
                RandomTerm("subject", fixed, covariance),
                RandomTerm("sentence", (), FULL_COV),
            )
        else:
            raise DesignError(f"unknown paradigm {paradigm!r}")
        return cls(fixed_effects=fixed, random_terms=terms, paradigm=paradigm)


@dataclass
class BuiltTerm:
    term: RandomTerm
    levels: list            # level keys, in column order
    col_offset: int         # first Z column of this term

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    @property
    def width(self) -> int:
        return self.n_levels * self.term.block_size


@dataclass
class DesignMatrices:
    """Everything a REML fit needs, plus per-row bookkeeping for residuals."""

    y: np.ndarray                       # log RT, length n
    X: np.ndarray                       # n x p, first column intercept
    Z: sparse.csc_matrix                # n x q
    feature_names: list[str]            # X columns, including "intercept"
    std_means: np.ndarray               # per non-intercept column
    std_sds: np.ndarray
    terms: list[BuiltTerm]
    row_keys: list[tuple[str, str, int]]   # (subject_id, doc_id, word_index)
    row_surprisal: np.ndarray
    dropped_incomplete: list[tuple[str, int]] = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def q(self) -> int:
        return self.Z.shape[1]


def standardize(columns: np.ndarray, names: list[str] | None = None):
    """Center and scale columns to mean 0, sample sd 1 (ddof=1).

    Returns (standardized columns, means, sds).  A column with fewer than
    two distinct values cannot be scaled and raises, naming the predictor.
    """
    cols = np.asarray(columns, dtype=np.float64)
    if cols.ndim == 1:
        cols = cols[:, None]
    names = names or [f"col{i}" for i in range(cols.shape[1])]
    means = cols.mean(axis=0)
    sds = cols.std(axis=0, ddof=1)
    for j, sd in enumerate(sds):
        if not np.isfinite(sd) or sd == 0.0:
            raise DesignError(f"predictor {names[j]!r} is constant")
    return (cols - means) / sds, means, sds


def _predictor_value(name: str, obs, word, word_surp: WordSurprisal,
                     unigram_value: float) -> float:
    if name == "surprisal":
        return word_surp.surprisal
    if name == "word_length":
        return float(word.char_end - word.char_start)
    if name == "word_position":
        return float(word.position_in_sentence)
    if name == "unigram_surprisal":
        return unigram_value
    if name == "saccade_length":
        return float(obs.saccade_length) if obs.saccade_length is not None else 0.0
    if name == "prev_fixated":
        if obs.prev_fixated is None:
            return 0.0
        return 1.0 if obs.prev_fixated else 0.0
    raise DesignError(f"unknown predictor {name!r}")


def build_design(fs: FilteredSet,
                 surprisals: dict[tuple[str, int], WordSurprisal],
                 unigram_values: dict[tuple[str, int], float],
                 spec: RegressionSpec) -> DesignMatrices:
    """Assemble y, X, Z from a filtered observation set.

    Observations on words whose surprisal is incomplete (they contain the
    unscored document-initial token) are dropped and logged; a retained
    observation with no surprisal at all is an error.
    """
    if spec.paradigm != fs.corpus.paradigm:
        raise DesignError(
            f"spec paradigm {spec.paradigm!r} does not match corpus "
            f"paradigm {fs.corpus.paradigm!r}"
        )

    rows = []
    dropped: list[tuple[str, int]] = []
    for obs, lr in zip(fs.observations, fs.log_rt):
        wkey = (obs.doc_id, obs.word_index)
        ws = surprisals.get(wkey)
        if ws is None:
            raise DesignError(
                f"no surprisal for retained observation at doc={obs.doc_id!r} "
                f"word_index={obs.word_index}"
            )
        if not ws.complete:
            dropped.append(wkey)
            continue
        if wkey not in unigram_values:
            raise DesignError(
                f"no unigram surprisal for doc={obs.doc_id!r} "
                f"word_index={obs.word_index}"
            )
        word = fs.corpus.document(obs.doc_id).word(obs.word_index)
        rows.append((obs, lr, word, ws, unigram_values[wkey]))
    if not rows:
        raise DesignError("no observations left after dropping incomplete words")

    n = len(rows)
    k = len(spec.fixed_effects)
    raw = np.empty((n, k))
    y = np.empty(n)
    for i, (obs, lr, word, ws, uni) in enumerate(rows):
        y[i] = lr
        for j, name in enumerate(spec.fixed_effects):
            raw[i, j] = _predictor_value(name, obs, word, ws, uni)

    std, means, sds = standardize(raw, list(spec.fixed_effects))
    X = np.column_stack([np.ones(n), std])
    feature_names = ["intercept"] + list(spec.fixed_effects)
    col_of = {name: j + 1 for j, name in enumerate(spec.fixed_effects)}

    # Grouping keys per row, per term.
    def level_key(term: RandomTerm, obs, word):
        if term.grouping == "subject":
            return obs.subject_id
        if term.grouping == "subject_sentence":
            return (obs.subject_id, obs.doc_id, word.sentence_id)
        if term.grouping == "sentence":
            return (obs.doc_id, word.sentence_id)
        raise DesignError(f"unknown grouping factor {term.grouping!r}")

    built_terms: list[BuiltTerm] = []
    zrows, zcols, zdata = [], [], []
    offset = 0
    for term in spec.random_terms:
        keys = [level_key(term, obs, word) for (obs, _, word, _, _) in rows]
        levels = sorted(set(keys))
        index = {key: i for i, key in enumerate(levels)}
        b = term.block_size
        slope_cols = [col_of[s] for s in term.slopes]
        for i, key in enumerate(keys):
            base = offset + index[key] * b
            zrows.append(i)
            zcols.append(base)
            zdata.append(1.0)
            for j, c in enumerate(slope_cols, start=1):
                zrows.append(i)
                zcols.append(base + j)
                zdata.append(X[i, c])
        built_terms.append(BuiltTerm(term=term, levels=levels, col_offset=offset))
        offset += len(levels) * b

    Z = sparse.csc_matrix(
        (zdata, (zrows, zcols)), shape=(n, offset), dtype=np.float64
    )
    Z.sort_indices()

    return DesignMatrices(
        y=y, X=X, Z=Z, feature_names=feature_names, std_means=means,
        std_sds=sds, terms=built_terms,
        row_keys=[obs.key for (obs, _, _, _, _) in rows],
        row_surprisal=np.array([ws.surprisal for (_, _, _, ws, _) in rows]),
        dropped_incomplete=sorted(set(dropped)),
    )


# ---------------------------------------------------------------------------
# Theta parameterization: per random term, the lower-triangular entries of
# the relative covariance factor in row-major order (full covariance) or the
# diagonal only (diagonal covariance).  Diagonal entries must stay >= 0.


def theta_dim(spec_or_terms) -> int:
    terms = getattr(spec_or_terms, "random_terms", spec_or_terms)
    return sum(t.n_params if isinstance(t, RandomTerm) else t.term.n_params
               for t in terms)


def theta_init(design: DesignMatrices) -> np.ndarray:
    """Identity relative factor: 1 on block diagonals, 0 elsewhere."""
    parts = []
    for bt in design.terms:
        t = bt.term
        b = t.block_size
        if t.covariance == FULL_COV:
            block = np.zeros(b * (b + 1) // 2)
            pos = 0
            for i in range(b):
                block[pos + i] = 1.0
                pos += i + 1
            parts.append(block)
        else:
            parts.append(np.ones(b))
    return np.concatenate(parts) if parts else np.zeros(0)


def theta_names(design: DesignMatrices) -> list[str]:
    names = []
    for bt in design.terms:
        t = bt.term
        labels = ["intercept"] + list(t.slopes)
        if t.covariance == FULL_COV:
            for i in range(t.block_size):
                for j in range(i + 1):
                    names.append(f"{t.grouping}:{labels[i]}x{labels[j]}")
        else:
            for i in range(t.block_size):
                names.append(f"{t.grouping}:{labels[i]}")
    return names


def theta_diag_mask(design: DesignMatrices) -> np.ndarray:
    """Boolean mask of theta entries that are factor diagonals."""
    mask = []
    for bt in design.terms:
        t = bt.term
        b = t.block_size
        if t.covariance == FULL_COV:
            for i in range(b):
                mask.extend([False] * i + [True])
        else:
            mask.extend([True] * b)
    return np.array(mask, dtype=bool)


def term_blocks(design: DesignMatrices, theta: np.ndarray) -> list[np.ndarray]:
    """Per-term lower-triangular relative factor blocks."""
    blocks = []
    pos = 0
    for bt in design.terms:
        t = bt.term
        b = t.block_size
        block = np.zeros((b, b))
        if t.covariance == FULL_COV:
            # tril_indices is row-major, matching the theta layout.
            count = b * (b + 1) // 2
            block[np.tril_indices(b)] = theta[pos:pos + count]
            pos += count
        else:
            np.fill_diagonal(block, theta[pos:pos + b])
            pos += b
        blocks.append(block)
    if pos != theta.shape[0]:
        raise DesignError(
            f"theta has {theta.shape[0]} entries, expected {pos}"
        )
    return blocks
