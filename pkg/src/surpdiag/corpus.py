"""Reading-time corpus model: parsing, exclusion filters, exploratory split.

A corpus arrives as a word-events TSV plus one sidecar text file per
document.  Two reading paradigms are supported: self-paced reading (per-word
reveal latencies) and eye-tracking (word-level go-past durations computed
upstream).  Filters reproduce the standard exclusion rules for each paradigm
and record a machine-readable reason code for every dropped observation.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from pathlib import Path

SELF_PACED = "self_paced"
EYE_TRACKING = "eye_tracking"

EVENT_COLUMNS = [
    "subject_id", "doc_id", "word_index", "sentence_id",
    "position_in_sentence", "char_start", "char_end", "screen_id",
    "line_id", "rt_ms", "fixated", "saccade_len", "prev_fixated",
    "subject_score",
]


class CorpusError(ValueError):
    """Malformed corpus input."""


class ParadigmError(ValueError):
    """A filter was applied to a corpus of the wrong paradigm."""


@dataclass(frozen=True)
class WordToken:
    """One word position in a document."""

    word_index: int
    char_start: int
    char_end: int
    sentence_id: int
    position_in_sentence: int
    screen_id: int | None = None
    line_id: int | None = None


@dataclass(frozen=True)
class WordObservation:
    """One word token as read by one subject."""

    subject_id: str
    doc_id: str
    word_index: int
    rt: float | None = None
    fixated: bool = True
    saccade_length: float | None = None
    prev_fixated: bool | None = None
    subject_score: float | None = None

    @property
    def key(self) -> tuple[str, str, int]:
        return (self.subject_id, self.doc_id, self.word_index)


@dataclass
class Document:
    doc_id: str
    text: str
    words: list[WordToken]

    def word(self, word_index: int) -> WordToken:
        return self._by_index[word_index]

    def __post_init__(self):
        self._by_index = {w.word_index: w for w in self.words}

    def word_text(self, word_index: int) -> str:
        w = self._by_index[word_index]
        return self.text[w.char_start:w.char_end]


@dataclass
class Corpus:
    corpus_id: str
    paradigm: str
    documents: list[Document]
    observations: list[WordObservation] = field(default_factory=list)

    def __post_init__(self):
        if self.paradigm not in (SELF_PACED, EYE_TRACKING):
            raise CorpusError(f"unknown paradigm {self.paradigm!r}")
        self._docs = {}
        for d in self.documents:
            if d.doc_id in self._docs:
                raise CorpusError(f"duplicate document id {d.doc_id!r}")
            self._docs[d.doc_id] = d

    def document(self, doc_id: str) -> Document:
        return self._docs[doc_id]


@dataclass
class FilteredSet:
    """Retained observations with log reading times and an exclusion audit.

    Every input observation lands either in `observations` (with its natural
    log RT in the aligned `log_rt` list) or in `exclusion_log` as
    (observation, reason_code), never both.
    """

    corpus: Corpus
    observations: list[WordObservation]
    log_rt: list[float]
    exclusion_log: list[tuple[WordObservation, str]]


def _parse_opt_int(s: str):
    return None if s == "" else int(s)


def _parse_opt_float(s: str):
    return None if s == "" else float(s)


def _parse_opt_bool(s: str):
    if s == "":
        return None
    if s in ("1", "true", "True"):
        return True
    if s in ("0", "false", "False"):
        return False
    raise ValueError(f"bad boolean {s!r}")


def parse_corpus(path: str | Path, schema: str, corpus_id: str | None = None,
                 docs_dir: str | Path | None = None) -> Corpus:
    """Parse a word-events TSV (plus `<doc_id>.txt` sidecars) into a Corpus.

    `schema` is the paradigm; `docs_dir` defaults to the events file's
    directory.  Word metadata must agree across subjects for the same
    (doc_id, word_index); character spans are validated against the sidecar
    text.
    """
    path = Path(path)
    docs_dir = Path(docs_dir) if docs_dir is not None else path.parent
    corpus_id = corpus_id or path.stem

    texts: dict[str, str] = {}
    words: dict[str, dict[int, WordToken]] = {}
    observations: list[WordObservation] = []
    seen_obs: set[tuple[str, str, int]] = set()

    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if header != EVENT_COLUMNS:
            raise CorpusError(
                f"{path}: bad header; expected {EVENT_COLUMNS}, got {header}"
            )
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != len(EVENT_COLUMNS):
                raise CorpusError(
                    f"{path}:{lineno}: expected {len(EVENT_COLUMNS)} fields, "
                    f"got {len(parts)}"
                )
            row = dict(zip(EVENT_COLUMNS, parts))
            try:
                doc_id = row["doc_id"]
                word_index = int(row["word_index"])
                token = WordToken(
                    word_index=word_index,
                    char_start=int(row["char_start"]),
                    char_end=int(row["char_end"]),
                    sentence_id=int(row["sentence_id"]),
                    position_in_sentence=int(row["position_in_sentence"]),
                    screen_id=_parse_opt_int(row["screen_id"]),
                    line_id=_parse_opt_int(row["line_id"]),
                )
                obs = WordObservation(
                    subject_id=row["subject_id"],
                    doc_id=doc_id,
                    word_index=word_index,
                    rt=_parse_opt_float(row["rt_ms"]),
                    fixated=_parse_opt_bool(row["fixated"]) is not False,
                    saccade_length=_parse_opt_float(row["saccade_len"]),
                    prev_fixated=_parse_opt_bool(row["prev_fixated"]),
                    subject_score=_parse_opt_float(row["subject_score"]),
                )
            except ValueError as exc:
                raise CorpusError(f"{path}:{lineno}: malformed row: {exc}") from exc

            if schema == SELF_PACED:
                if row["fixated"] or row["saccade_len"] or row["prev_fixated"]:
                    raise CorpusError(
                        f"{path}:{lineno}: eye-tracking fields set in a "
                        f"self-paced corpus"
                    )
            elif row["subject_score"]:
                raise CorpusError(
                    f"{path}:{lineno}: subject_score set in an eye-tracking "
                    f"corpus"
                )

            if doc_id not in texts:
                sidecar = docs_dir / f"{doc_id}.txt"
                if not sidecar.exists():
                    raise CorpusError(f"{path}:{lineno}: missing sidecar {sidecar}")
                texts[doc_id] = sidecar.read_text(encoding="utf-8")
                words[doc_id] = {}

            text = texts[doc_id]
            if not (0 <= token.char_start < token.char_end <= len(text)):
                raise CorpusError(
                    f"{path}:{lineno}: span ({token.char_start},{token.char_end}) "
                    f"outside text of {doc_id!r} (length {len(text)})"
                )
            prev = words[doc_id].get(word_index)
            if prev is None:
                words[doc_id][word_index] = token
            elif prev != token:
                raise CorpusError(
                    f"{path}:{lineno}: word metadata for ({doc_id!r}, "
                    f"{word_index}) disagrees with an earlier row"
                )
            if obs.rt is not None and obs.rt <= 0:
                raise CorpusError(f"{path}:{lineno}: rt_ms must be positive")
            if obs.key in seen_obs:
                raise CorpusError(
                    f"{path}:{lineno}: duplicate observation "
                    f"(subject={obs.subject_id!r}, doc={doc_id!r}, "
                    f"word_index={word_index})"
                )
            seen_obs.add(obs.key)
            observations.append(obs)

    documents = []
    for doc_id in sorted(texts):
        ordered = [words[doc_id][i] for i in sorted(words[doc_id])]
        _check_word_order(doc_id, ordered, texts[doc_id])
        documents.append(Document(doc_id=doc_id, text=texts[doc_id], words=ordered))
    return Corpus(corpus_id=corpus_id, paradigm=schema,
                  documents=documents, observations=observations)


def _check_word_order(doc_id: str, ordered: list[WordToken], text: str) -> None:
    prev_end = -1
    sent_pos: dict[int, int] = {}
    for w in ordered:
        if w.char_start < prev_end:
            raise CorpusError(
                f"{doc_id!r}: word spans overlap or are out of order at "
                f"word_index {w.word_index}"
            )
        prev_end = w.char_end
        last = sent_pos.get(w.sentence_id)
        if last is None:
            if w.position_in_sentence != 1:
                raise CorpusError(
                    f"{doc_id!r}: sentence {w.sentence_id} does not start at "
                    f"position 1 (word_index {w.word_index})"
                )
        elif w.position_in_sentence != last + 1:
            raise CorpusError(
                f"{doc_id!r}: position_in_sentence skips within sentence "
                f"{w.sentence_id} at word_index {w.word_index}"
            )
        sent_pos[w.sentence_id] = w.position_in_sentence


def _boundary_words(corpus: Corpus, dimensions: list[str]) -> dict[tuple[str, int], str]:
    """Map (doc_id, word_index) -> reason code for first/last words of each
    group along the given dimensions.  Missing screen/line ids mean the word
    participates in no boundary along that dimension."""
    reasons: dict[tuple[str, int], str] = {}
    # Later assignments win, so order dimensions from weakest to strongest.
    for dim in reversed(dimensions):
        for doc in corpus.documents:
            groups: dict[object, list[WordToken]] = {}
            for w in doc.words:
                if dim == "document":
                    key = 0
                elif dim == "sentence":
                    key = w.sentence_id
                elif dim == "screen":
                    key = w.screen_id
                else:
                    key = w.line_id
                if key is None:
                    continue
                groups.setdefault(key, []).append(w)
            for members in groups.values():
                first = min(members, key=lambda w: w.word_index)
                last = max(members, key=lambda w: w.word_index)
                reasons[(doc.doc_id, first.word_index)] = f"{dim}_boundary"
                reasons[(doc.doc_id, last.word_index)] = f"{dim}_boundary"
    return reasons


def _log_rt(observations, exclusions):
    import math
    retained, log_rt = [], []
    for obs in observations:
        retained.append(obs)
        log_rt.append(math.log(obs.rt))
    return retained, log_rt


def apply_spr_filters(corpus: Corpus, min_rt: float = 100.0,
                      max_rt: float = 3000.0,
                      min_questions_correct: float = 4, *,
                      observations=None) -> FilteredSet:
    """Self-paced reading exclusions.

    Drops sentence-initial and sentence-final words, observations with
    rt < min_rt or rt > max_rt (the boundary values themselves are kept),
    and all observations from subjects whose comprehension score is below
    min_questions_correct.  Retained observations get natural-log RTs.
    """
    if corpus.paradigm != SELF_PACED:
        raise ParadigmError(
            f"apply_spr_filters needs a self-paced corpus, got {corpus.paradigm}"
        )
    if observations is None:
        observations = corpus.observations
    boundary = _boundary_words(corpus, ["sentence"])

    low_subjects = set()
    for obs in observations:
        if obs.subject_score is not None and obs.subject_score < min_questions_correct:
            low_subjects.add(obs.subject_id)

    kept, excluded = [], []
    for obs in observations:
        if obs.subject_id in low_subjects:
            excluded.append((obs, "low_subject_score"))
        elif (obs.doc_id, obs.word_index) in boundary:
            excluded.append((obs, boundary[(obs.doc_id, obs.word_index)]))
        elif obs.rt is None:
            excluded.append((obs, "missing_rt"))
        elif obs.rt < min_rt:
            excluded.append((obs, "rt_below_min"))
        elif obs.rt > max_rt:
            excluded.append((obs, "rt_above_max"))
        else:
            kept.append(obs)
    retained, log_rt = _log_rt(kept, excluded)
    return FilteredSet(corpus=corpus, observations=retained, log_rt=log_rt,
                       exclusion_log=excluded)


def apply_et_filters(corpus: Corpus, max_saccade: float = 4, *,
                     observations=None) -> FilteredSet:
    """Eye-tracking exclusions.

    Drops unfixated words, words following saccades strictly longer than
    max_saccade words, and words at the starts and ends of sentences,
    screens, documents, and lines.  Retained observations get natural-log
    go-past durations.
    """
    if corpus.paradigm != EYE_TRACKING:
        raise ParadigmError(
            f"apply_et_filters needs an eye-tracking corpus, got {corpus.paradigm}"
        )
    if observations is None:
        observations = corpus.observations
    boundary = _boundary_words(corpus, ["document", "screen", "line", "sentence"])

    kept, excluded = [], []
    for obs in observations:
        if (obs.doc_id, obs.word_index) in boundary:
            excluded.append((obs, boundary[(obs.doc_id, obs.word_index)]))
        elif not obs.fixated:
            excluded.append((obs, "unfixated"))
        elif obs.saccade_length is not None and obs.saccade_length > max_saccade:
            excluded.append((obs, "long_saccade"))
        elif obs.rt is None:
            excluded.append((obs, "missing_rt"))
        else:
            kept.append(obs)
    retained, log_rt = _log_rt(kept, excluded)
    return FilteredSet(corpus=corpus, observations=retained, log_rt=log_rt,
                       exclusion_log=excluded)


def subject_to_int(subject_id: str) -> int:
    """Stable integer encoding of a subject id for the exploratory split.

    All-digit ids use their decimal value; any other non-empty string uses
    CRC-32 of its UTF-8 bytes.  This is a documented convention of this
    toolkit, not something the split inherits from elsewhere.
    """
    if subject_id == "":
        raise CorpusError("cannot map empty subject id to an integer")
    if subject_id.isdigit():
        return int(subject_id)
    return zlib.crc32(subject_id.encode("utf-8"))


def split_exploratory(fs: FilteredSet) -> tuple[FilteredSet, FilteredSet]:
    """Deterministic ~50/50 split into (exploratory, held-out) sets.

    An observation is exploratory iff subject_to_int(subject) plus its
    word's sentence_id is even.
    """
    expl_obs, expl_log, held_obs, held_log = [], [], [], []
    for obs, lr in zip(fs.observations, fs.log_rt):
        word = fs.corpus.document(obs.doc_id).word(obs.word_index)
        if (subject_to_int(obs.subject_id) + word.sentence_id) % 2 == 0:
            expl_obs.append(obs)
            expl_log.append(lr)
        else:
            held_obs.append(obs)
            held_log.append(lr)
    expl = FilteredSet(corpus=fs.corpus, observations=expl_obs,
                       log_rt=expl_log, exclusion_log=[])
    held = FilteredSet(corpus=fs.corpus, observations=held_obs,
                       log_rt=held_log, exclusion_log=[])
    return expl, held
