"""Pipeline configuration: a flat INI file with sections.

Example::

    [corpus]
    id = synth
    paradigm = self_paced
    events = corpus/events.tsv
    docs = corpus/docs
    unigram_counts = corpus/counts.tsv
    tokens = corpus/tokens.jsonl

    [model:pseudo-70m]
    steps = 1000,143000
    window = 64
    tokenizer = synth-bpe

    [scoring]
    occlusion_n = 49,24,9
    occlusion_scope = quintile1

    [regression]
    covariance = diagonal

    [analysis]
    outdir = out
    seed = 1234
    permutations = 1000
    jobs = 1

Relative paths resolve against the config file's directory.  The corpus
`tokens` sidecar (token spans in the score-file format, log2prob null)
drives unigram lookups, quintiles, and occlusion planning; a model section
may override `tokens` for a model with a different tokenizer.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    model_id: str
    steps: list[int]
    window: int
    tokenizer_id: str = ""
    tokens_path: Path | None = None   # defaults to the corpus sidecar

    @property
    def final_step(self) -> int:
        return max(self.steps)


@dataclass
class PipelineConfig:
    corpus_id: str
    paradigm: str
    events_path: Path
    docs_dir: Path
    counts_path: Path
    tokens_path: Path
    models: list[ModelConfig]
    occlusion_n: list[int]
    occlusion_scope: str
    covariance: str
    outdir: Path
    seed: int
    permutations: int
    jobs: int
    config_hash: str = ""
    base_dir: Path = field(default_factory=Path)

    def model(self, model_id: str) -> ModelConfig:
        for m in self.models:
            if m.model_id == model_id:
                return m
        raise ConfigError(f"unknown model {model_id!r}")


def _ints(raw: str) -> list[int]:
    return [int(x.strip()) for x in raw.split(",") if x.strip()]


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    raw = path.read_bytes()
    parser = configparser.ConfigParser()
    parser.read_string(raw.decode("utf-8"))
    base = path.parent

    def resolve(p: str) -> Path:
        q = Path(p)
        return q if q.is_absolute() else base / q

    if "corpus" not in parser:
        raise ConfigError(f"{path}: missing [corpus] section")
    c = parser["corpus"]
    for key in ("id", "paradigm", "events", "docs", "unigram_counts", "tokens"):
        if key not in c:
            raise ConfigError(f"{path}: [corpus] missing key {key!r}")

    models = []
    for section in parser.sections():
        if not section.startswith("model:"):
            continue
        model_id = section.split(":", 1)[1]
        m = parser[section]
        if "steps" not in m or "window" not in m:
            raise ConfigError(f"{path}: [{section}] needs steps and window")
        window = int(m["window"])
        if window < 2 or window % 2 != 0:
            raise ConfigError(
                f"{path}: [{section}] window must be even and >= 2"
            )
        models.append(ModelConfig(
            model_id=model_id,
            steps=sorted(set(_ints(m["steps"]))),
            window=window,
            tokenizer_id=m.get("tokenizer", ""),
            tokens_path=resolve(m["tokens"]) if "tokens" in m else None,
        ))
    if not models:
        raise ConfigError(f"{path}: no [model:*] sections")
    models.sort(key=lambda m: m.model_id)

    scoring = parser["scoring"] if "scoring" in parser else {}
    occlusion_n = _ints(scoring.get("occlusion_n", "49,24,9"))
    if any(n <= 0 for n in occlusion_n):
        raise ConfigError(f"{path}: occlusion_n entries must be positive")
    if occlusion_n != sorted(occlusion_n, reverse=True):
        raise ConfigError(f"{path}: occlusion_n must be descending")
    occlusion_scope = scoring.get("occlusion_scope", "quintile1")
    if occlusion_scope not in ("quintile1", "all"):
        raise ConfigError(f"{path}: occlusion_scope must be quintile1 or all")

    regression = parser["regression"] if "regression" in parser else {}
    covariance = regression.get("covariance", "full")
    if covariance not in ("full", "diagonal"):
        raise ConfigError(f"{path}: covariance must be full or diagonal")

    if "analysis" not in parser:
        raise ConfigError(f"{path}: missing [analysis] section")
    a = parser["analysis"]
    if "outdir" not in a:
        raise ConfigError(f"{path}: [analysis] missing outdir")

    cfg = PipelineConfig(
        corpus_id=c["id"],
        paradigm=c["paradigm"],
        events_path=resolve(c["events"]),
        docs_dir=resolve(c["docs"]),
        counts_path=resolve(c["unigram_counts"]),
        tokens_path=resolve(c["tokens"]),
        models=models,
        occlusion_n=occlusion_n,
        occlusion_scope=occlusion_scope,
        covariance=covariance,
        outdir=resolve(a["outdir"]),
        seed=int(a.get("seed", "0")),
        permutations=int(a.get("permutations", "1000")),
        jobs=int(a.get("jobs", "1")),
        config_hash=hashlib.sha256(raw).hexdigest()[:16],
        base_dir=base,
    )
    if cfg.paradigm not in ("self_paced", "eye_tracking"):
        raise ConfigError(f"{path}: unknown paradigm {cfg.paradigm!r}")
    if cfg.permutations < 1:
        raise ConfigError(f"{path}: permutations must be >= 1")
    if cfg.jobs < 1:
        raise ConfigError(f"{path}: jobs must be >= 1")
    for p in (cfg.events_path, cfg.docs_dir, cfg.counts_path, cfg.tokens_path):
        if not Path(p).exists():
            raise ConfigError(f"{path}: referenced path does not exist: {p}")
    for m in cfg.models:
        if m.tokens_path is not None and not m.tokens_path.exists():
            raise ConfigError(
                f"{path}: model {m.model_id} tokens path missing: {m.tokens_path}"
            )
    return cfg


def manifest_name(model_id: str, step: int, condition: str) -> str:
    return f"{model_id}_step{step}_{condition}.jsonl"
