"""Pipeline orchestration: plan manifests, analyze score files, re-emit
reports.

Two-phase protocol: `plan` writes one manifest per (model, checkpoint,
condition) from the corpus and its tokenization sidecar; the external
scorer fills in score files named after the manifests; `analyze` fits the
regressions and writes every report.  `report` rebuilds report tables from
cached fit JSONs and residual TSVs without refitting.
"""

from __future__ import annotations

import concurrent.futures
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

from . import corpus as corpus_mod
from . import diagnostics, scoring, unigram
from .config import ModelConfig, PipelineConfig, manifest_name
from .mixedlm import design as design_mod
from .mixedlm import reml
from .unigram import QuintileAssignment

log = logging.getLogger(__name__)


class PipelineInputError(ValueError):
    """Missing or inconsistent pipeline inputs (CLI exit code 1)."""


RESIDUAL_COLUMNS = [
    "subject_id", "doc_id", "word_index", "observed", "predicted",
    "residual", "squared_error", "surprisal", "quintile",
]

QUINTILE_COLUMNS = [
    "model_id", "checkpoint_step", "quintile", "n", "mse", "sse",
    "sse_under", "sse_over", "n_under", "n_over", "mean_surprisal",
    "mean_surprisal_under", "mean_surprisal_over", "surprisal_proportion",
]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(float(v))   # plain-float repr even for numpy scalars
    return str(v)


def write_tsv(path: Path, columns: list[str], rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(columns) + "\n")
        for row in rows:
            fh.write("\t".join(_fmt(row.get(c)) for c in columns) + "\n")


def read_tsv(path: Path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        return [dict(zip(header, line.rstrip("\n").split("\t")))
                for line in fh if line.strip()]


@dataclass
class CorpusState:
    """Shared per-corpus precomputation used by planning and analysis."""

    corpus: corpus_mod.Corpus
    exploratory: corpus_mod.FilteredSet
    heldout_size: int
    n_excluded: int
    unigram_model: unigram.UnigramModel
    token_counts: dict[str, int]
    word_token_indices: dict[tuple[str, int], list[int]]
    word_token_texts: dict[tuple[str, int], list[str]]
    unigram_values: dict[tuple[str, int], float]     # bits
    quintiles: QuintileAssignment
    filter_reasons: dict[str, int] = field(default_factory=dict)


def load_state(config: PipelineConfig) -> CorpusState:
    corp = corpus_mod.parse_corpus(
        config.events_path, config.paradigm, corpus_id=config.corpus_id,
        docs_dir=config.docs_dir,
    )
    if config.paradigm == corpus_mod.SELF_PACED:
        filtered = corpus_mod.apply_spr_filters(corp)
    else:
        filtered = corpus_mod.apply_et_filters(corp)
    exploratory, heldout = corpus_mod.split_exploratory(filtered)

    uni_model = unigram.load_counts(config.counts_path)
    header, token_scores = scoring.read_score_file(config.tokens_path)

    by_doc: dict[str, list[scoring.TokenScore]] = {}
    for t in token_scores:
        by_doc.setdefault(t.doc_id, []).append(t)

    token_counts: dict[str, int] = {}
    word_token_indices: dict[tuple[str, int], list[int]] = {}
    word_token_texts: dict[tuple[str, int], list[str]] = {}
    unigram_values: dict[tuple[str, int], float] = {}
    for doc in corp.documents:
        toks = by_doc.get(doc.doc_id)
        if not toks:
            raise PipelineInputError(
                f"tokenization sidecar has no tokens for {doc.doc_id!r}"
            )
        token_counts[doc.doc_id] = max(t.token_index for t in toks)
        assignments, _ = scoring.assign_tokens(doc, toks)
        for wi, tok in assignments:
            key = (doc.doc_id, wi)
            word_token_indices.setdefault(key, []).append(tok.token_index)
            word_token_texts.setdefault(key, []).append(tok.token_text)
    for key, texts in word_token_texts.items():
        unigram_values[key] = unigram.word_unigram_surprisal(uni_model, texts)

    expl_units = {(o.doc_id, o.word_index) for o in exploratory.observations}
    missing = sorted(u for u in expl_units if u not in unigram_values)
    if missing:
        raise PipelineInputError(
            f"{len(missing)} exploratory word positions missing from the "
            f"tokenization sidecar; first: {missing[:5]}"
        )
    quintiles = unigram.assign_quintiles(
        {u: -unigram_values[u] for u in expl_units}
    )

    reasons: dict[str, int] = {}
    for _, reason in filtered.exclusion_log:
        reasons[reason] = reasons.get(reason, 0) + 1
    return CorpusState(
        corpus=corp, exploratory=exploratory,
        heldout_size=len(heldout.observations),
        n_excluded=len(filtered.exclusion_log),
        unigram_model=uni_model, token_counts=token_counts,
        word_token_indices=word_token_indices,
        word_token_texts=word_token_texts,
        unigram_values=unigram_values, quintiles=quintiles,
        filter_reasons=reasons,
    )


# ---------------------------------------------------------------------------
# plan


def _model_token_counts(config: PipelineConfig, model: ModelConfig,
                        state: CorpusState) -> dict[str, int]:
    if model.tokens_path is None:
        return state.token_counts
    _, token_scores = scoring.read_score_file(model.tokens_path)
    counts: dict[str, int] = {}
    for t in token_scores:
        counts[t.doc_id] = max(counts.get(t.doc_id, 0), t.token_index)
    return counts


def plan_all(config: PipelineConfig) -> dict:
    """Write all manifests; returns a summary of request counts."""
    state = load_state(config)
    mdir = config.outdir / "manifests"
    mdir.mkdir(parents=True, exist_ok=True)

    summary: dict = {"manifests": {}, "skipped_occlusion_words": {}}
    doc_ids = sorted(d.doc_id for d in state.corpus.documents)

    q1_words = sorted(k for k, q in state.quintiles.labels.items()
                      if q == 1 or config.occlusion_scope == "all")
    max_n = max(config.occlusion_n) if config.occlusion_n else 0

    for model in config.models:
        counts = _model_token_counts(config, model, state)
        full_requests = []
        for doc_id in doc_ids:
            full_requests.extend(
                scoring.plan_windows(counts[doc_id], model.window, doc_id)
            )
        for step in model.steps:
            manifest = scoring.ScoreManifest(
                model_id=model.model_id, checkpoint_step=step,
                tokenizer_id=model.tokenizer_id, window_size=model.window,
                condition=scoring.FULL, n=None, requests=full_requests,
            )
            name = manifest_name(model.model_id, step, "full")
            scoring.write_manifest(manifest, mdir / name)
            summary["manifests"][name] = len(full_requests)

        # Occlusion plans use the corpus sidecar's word-token mapping, so
        # they only apply to models sharing that tokenizer.
        if model.tokens_path is not None:
            log.warning(
                "model %s has its own tokenizer; skipping occlusion plans",
                model.model_id,
            )
            continue
        eligible, skipped = [], []
        for key in q1_words:
            idxs = state.word_token_indices.get(key, [])
            if idxs and min(idxs) > max_n:
                eligible.append(key)
            else:
                skipped.append(key)
        summary["skipped_occlusion_words"][model.model_id] = len(skipped)
        if skipped:
            log.warning(
                "%s: %d quintile-1 words skipped for insufficient context",
                model.model_id, len(skipped),
            )
        step = model.final_step
        for n in config.occlusion_n:
            requests = []
            for key in eligible:
                doc_id, _ = key
                for tidx in state.word_token_indices[key]:
                    requests.append(scoring.plan_occlusion(tidx, n, doc_id))
            manifest = scoring.ScoreManifest(
                model_id=model.model_id, checkpoint_step=step,
                tokenizer_id=model.tokenizer_id, window_size=model.window,
                condition=scoring.RECENT, n=n, requests=requests,
            )
            name = manifest_name(model.model_id, step, f"recent{n}")
            scoring.write_manifest(manifest, mdir / name)
            summary["manifests"][name] = len(requests)
    return summary


# ---------------------------------------------------------------------------
# analyze


def _read_variant_scores(config: PipelineConfig, model: ModelConfig,
                         step: int):
    name = manifest_name(model.model_id, step, "full")
    path = config.outdir / "scores" / name
    if not path.exists():
        raise PipelineInputError(
            f"missing score file for manifest {name}: {path}"
        )
    header, scores = scoring.read_score_file(path)
    if header["model_id"] != model.model_id:
        raise PipelineInputError(
            f"{path}: header model_id {header['model_id']!r} != "
            f"{model.model_id!r}"
        )
    if int(header["checkpoint_step"]) != step:
        raise PipelineInputError(
            f"{path}: header step {header['checkpoint_step']} != {step}"
        )
    if model.tokenizer_id and header["tokenizer_id"] != model.tokenizer_id:
        raise PipelineInputError(
            f"{path}: tokenizer {header['tokenizer_id']!r} != "
            f"{model.tokenizer_id!r}"
        )
    return scores


def _variant_task(state: CorpusState, config: PipelineConfig,
                  model: ModelConfig, step: int, seed: int):
    """Fit one (model, step): returns (VariantResult, fit json dict)."""
    scores = _read_variant_scores(config, model, step)
    by_doc: dict[str, list[scoring.TokenScore]] = {}
    for t in scores:
        by_doc.setdefault(t.doc_id, []).append(t)

    surprisals: dict[tuple[str, int], scoring.WordSurprisal] = {}
    for doc in state.corpus.documents:
        toks = by_doc.get(doc.doc_id)
        if not toks:
            raise PipelineInputError(
                f"score file for {model.model_id} step {step} lacks "
                f"{doc.doc_id!r}"
            )
        for ws in scoring.align_tokens_to_words(doc, toks):
            surprisals[(ws.doc_id, ws.word_index)] = ws
    log2_ppl = math.log2(scoring.corpus_perplexity(scores))

    spec = design_mod.RegressionSpec.for_paradigm(
        config.paradigm, config.covariance
    )
    design = design_mod.build_design(
        state.exploratory, surprisals, state.unigram_values, spec
    )
    fit_result = reml.fit(design, reml.FitOptions(seed=seed))
    records = reml.residuals(fit_result, design, state.quintiles)

    variant = diagnostics.VariantResult(
        model_id=model.model_id, checkpoint_step=step,
        corpus_id=state.corpus.corpus_id, log2_perplexity=log2_ppl,
        records=records,
        word_surprisals={
            k: ws.surprisal for k, ws in surprisals.items() if ws.complete
        },
    )
    fit_json = fit_result.to_json_dict()
    fit_json.update({
        "model_id": model.model_id,
        "checkpoint_step": step,
        "corpus_id": state.corpus.corpus_id,
        "condition": "full",
        "log2_perplexity": log2_ppl,
        "n_observations": design.n,
        "n_dropped_incomplete": len(design.dropped_incomplete),
        "seed": seed,
        "config_hash": config.config_hash,
    })
    return variant, fit_json


def _records_to_rows(records: list[reml.ResidualRecord]) -> list[dict]:
    return [{
        "subject_id": r.subject_id, "doc_id": r.doc_id,
        "word_index": r.word_index, "observed": r.observed,
        "predicted": r.predicted, "residual": r.residual,
        "squared_error": r.squared_error, "surprisal": r.surprisal,
        "quintile": r.quintile,
    } for r in records]


def _rows_to_records(rows: list[dict]) -> list[reml.ResidualRecord]:
    return [reml.ResidualRecord(
        subject_id=row["subject_id"], doc_id=row["doc_id"],
        word_index=int(row["word_index"]), observed=float(row["observed"]),
        predicted=float(row["predicted"]), residual=float(row["residual"]),
        squared_error=float(row["squared_error"]),
        surprisal=float(row["surprisal"]), quintile=int(row["quintile"]),
    ) for row in rows]


def _occlusion_word_surprisals(config: PipelineConfig, model: ModelConfig,
                               state: CorpusState, variant):
    """Word surprisals per context condition for the occlusion report.

    Recent-n score files cover scattered tokens (no tiling), so words are
    rebuilt from the sidecar's word-token map; a word is kept only if every
    constituent token is scored in every recent condition.
    """
    step = model.final_step
    per_condition: dict[str, dict] = {}
    for n in config.occlusion_n:
        name = manifest_name(model.model_id, step, f"recent{n}")
        path = config.outdir / "scores" / name
        if not path.exists():
            return None
        _, scores = scoring.read_score_file(path)
        table = {(s.doc_id, s.token_index): -s.log2prob
                 for s in scores if s.log2prob is not None}
        words: dict[tuple[str, int], float] = {}
        for key, q in state.quintiles.labels.items():
            if q != 1 and config.occlusion_scope != "all":
                continue
            idxs = state.word_token_indices.get(key)
            if not idxs:
                continue
            vals = [table.get((key[0], t)) for t in idxs]
            if all(v is not None for v in vals):
                words[key] = float(sum(vals))
        per_condition[f"recent{n}"] = words

    shared = set.intersection(*(set(w) for w in per_condition.values()))
    shared &= set(variant.word_surprisals)
    per_condition["full"] = {
        k: variant.word_surprisals[k] for k in shared
    }
    return {
        cond: {k: v for k, v in words.items() if k in shared}
        for cond, words in per_condition.items()
    }


def analyze_all(config: PipelineConfig, jobs: int | None = None,
                seed: int | None = None) -> dict:
    """Run every fit and write fits, residuals, and report tables."""
    state = load_state(config)
    seed = config.seed if seed is None else seed
    jobs = config.jobs if jobs is None else jobs

    fits_dir = config.outdir / "fits"
    resid_dir = config.outdir / "residuals"
    reports_dir = config.outdir / "reports"
    for d in (fits_dir, resid_dir, reports_dir):
        d.mkdir(parents=True, exist_ok=True)

    tasks = [(model, step) for model in config.models for step in model.steps]
    results: list[tuple[diagnostics.VariantResult, dict]] = []
    if jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as ex:
            futures = [ex.submit(_variant_task, state, config, model, step, seed)
                       for model, step in tasks]
            results = [f.result() for f in futures]
    else:
        results = [_variant_task(state, config, model, step, seed)
                   for model, step in tasks]

    variants: list[diagnostics.VariantResult] = []
    for (model, step), (variant, fit_json) in zip(tasks, results):
        variants.append(variant)
        stem = f"{model.model_id}_step{step}"
        with open(fits_dir / f"{stem}.json", "w", encoding="utf-8") as fh:
            json.dump(fit_json, fh, indent=2, sort_keys=True)
            fh.write("\n")
        write_tsv(resid_dir / f"{stem}.tsv", RESIDUAL_COLUMNS,
                  _records_to_rows(variant.records))

    summary = _write_reports(config, state, variants, seed)
    summary["exploratory_n"] = len(state.exploratory.observations)
    summary["heldout_n"] = state.heldout_size
    summary["excluded_n"] = state.n_excluded
    summary["filter_reasons"] = dict(sorted(state.filter_reasons.items()))
    with open(config.outdir / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


def _write_reports(config: PipelineConfig, state: CorpusState,
                   variants: list[diagnostics.VariantResult],
                   seed: int) -> dict:
    reports_dir = config.outdir / "reports"
    reports_dir.mkdir(parents=True, exist_ok=True)

    qrows = []
    for v in sorted(variants, key=lambda v: (v.model_id, v.checkpoint_step)):
        report = diagnostics.quintile_report(v.records)
        for q in range(1, 6):
            c = report.cells[q]
            qrows.append({
                "model_id": v.model_id, "checkpoint_step": v.checkpoint_step,
                "quintile": q, "n": c.n, "mse": c.mse, "sse": c.sse,
                "sse_under": c.sse_under, "sse_over": c.sse_over,
                "n_under": c.n_under, "n_over": c.n_over,
                "mean_surprisal": c.mean_surprisal,
                "mean_surprisal_under": c.mean_surprisal_under,
                "mean_surprisal_over": c.mean_surprisal_over,
                "surprisal_proportion": c.surprisal_proportion,
            })
    write_tsv(reports_dir / "quintile_report.tsv", QUINTILE_COLUMNS, qrows)

    write_tsv(reports_dir / "training_dynamics.tsv",
              ["model_id", "checkpoint_step", "quintile", "n",
               "mean_surprisal", "surprisal_proportion", "sse", "mse"],
              diagnostics.training_dynamics(variants))

    # Experiment-1 variant set: each model at its final checkpoint.
    final = {}
    for v in variants:
        cur = final.get(v.model_id)
        if cur is None or v.checkpoint_step > cur.checkpoint_step:
            final[v.model_id] = v
    finals = [final[m] for m in sorted(final)]

    summary: dict = {
        "config_hash": config.config_hash,
        "seed": seed,
        "corpus_id": state.corpus.corpus_id,
        "quintile_counts": {str(q): c for q, c in
                            state.quintiles.counts().items()},
        "quintile_boundaries_log2prob": list(state.quintiles.boundaries),
        "log2_perplexity": {
            f"{v.model_id}_step{v.checkpoint_step}": v.log2_perplexity
            for v in variants
        },
        "slope_tests": {},
        "permutation_tests": {},
    }

    if len(finals) >= 3:
        srows = []
        scopes: list[tuple[str, dict | None]] = [("corpus", None)]
        scopes += [(f"q{q}", q) for q in range(1, 6)]
        for scope_name, q in scopes:
            points = []
            for v in finals:
                if q is None:
                    mse = diagnostics.quintile_report(v.records).total_mse
                else:
                    mse = diagnostics.quintile_report(v.records).cells[q].mse
                points.append((v.log2_perplexity, mse))
            st = diagnostics.slope_test(points)
            srows.append({
                "scope": scope_name, "slope": st.slope,
                "intercept": st.intercept, "t": st.t_statistic,
                "df": st.degrees_freedom, "p_one_tailed": st.p_one_tailed,
            })
            summary["slope_tests"][scope_name] = {
                "slope": st.slope, "p_one_tailed": st.p_one_tailed,
            }
        write_tsv(reports_dir / "slope_tests.tsv",
                  ["scope", "slope", "intercept", "t", "df", "p_one_tailed"],
                  srows)

        prows = []
        for q in range(2, 6):
            pr = diagnostics.quintile_slope_permutation(
                finals, 1, q, config.permutations, seed
            )
            prows.append({
                "target_quintile": 1, "other_quintile": q,
                "observed_statistic": pr.observed_statistic,
                "permutations": pr.permutation_count,
                "p_value": pr.p_value, "seed": pr.seed,
            })
            summary["permutation_tests"][f"q1_vs_q{q}"] = pr.p_value
        write_tsv(reports_dir / "permutation_tests.tsv",
                  ["target_quintile", "other_quintile", "observed_statistic",
                   "permutations", "p_value", "seed"], prows)

    orows = []
    conditions = ["full"] + [f"recent{n}" for n in config.occlusion_n]
    for model in config.models:
        v = final.get(model.model_id)
        if v is None:
            continue
        per_cond = _occlusion_word_surprisals(config, model, state, v)
        if per_cond is None:
            continue
        entries = [(model.model_id, cond, words)
                   for cond, words in per_cond.items()]
        orows.extend(diagnostics.occlusion_report(entries, conditions))
    if orows:
        write_tsv(reports_dir / "occlusion.tsv",
                  ["model_id", "condition", "n_words", "mean_surprisal",
                   "proportion"], orows)
    summary["occlusion_rows"] = len(orows)
    return summary


def report_all(config: PipelineConfig) -> dict:
    """Rebuild report tables from cached fits and residuals (no refits)."""
    state = load_state(config)
    fits_dir = config.outdir / "fits"
    resid_dir = config.outdir / "residuals"
    if not fits_dir.exists():
        raise PipelineInputError(f"no cached fits under {fits_dir}; run analyze")

    variants = []
    seed = config.seed
    for fit_path in sorted(fits_dir.glob("*.json")):
        with open(fit_path, encoding="utf-8") as fh:
            meta = json.load(fh)
        seed = int(meta.get("seed", config.seed))
        stem = fit_path.stem
        rpath = resid_dir / f"{stem}.tsv"
        if not rpath.exists():
            raise PipelineInputError(f"missing residual table {rpath}")
        records = _rows_to_records(read_tsv(rpath))

        model = config.model(meta["model_id"])
        step = int(meta["checkpoint_step"])
        scores = _read_variant_scores(config, model, step)
        surprisals = {}
        by_doc: dict[str, list[scoring.TokenScore]] = {}
        for t in scores:
            by_doc.setdefault(t.doc_id, []).append(t)
        for doc in state.corpus.documents:
            for ws in scoring.align_tokens_to_words(doc, by_doc[doc.doc_id]):
                if ws.complete:
                    surprisals[(ws.doc_id, ws.word_index)] = ws.surprisal
        variants.append(diagnostics.VariantResult(
            model_id=meta["model_id"], checkpoint_step=step,
            corpus_id=meta["corpus_id"],
            log2_perplexity=float(meta["log2_perplexity"]),
            records=records, word_surprisals=surprisals,
        ))
    return _write_reports(config, state, variants, seed)
