"""Residual diagnostics stratified by frequency quintile.

Implements the analysis layer: per-quintile mean squared errors with
under/over-prediction splits, the one-tailed slope test of MSE against log2
perplexity across model variants, the paired permutation test that shuffles
quintile membership of words, training-dynamics tables over checkpoints,
and the limited-context (occlusion) report.

Underprediction means observed log RT above the model prediction (positive
residual).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .mixedlm.reml import ResidualRecord


class DiagnosticsError(ValueError):
    pass


@dataclass
class VariantResult:
    """One fitted (model, checkpoint, condition) on one corpus."""

    model_id: str
    checkpoint_step: int
    corpus_id: str
    log2_perplexity: float
    records: list[ResidualRecord] = field(default_factory=list)
    word_surprisals: dict[tuple[str, int], float] = field(default_factory=dict)
    condition: str = "full"

    @property
    def variant_key(self) -> tuple[str, int]:
        return (self.model_id, self.checkpoint_step)


@dataclass
class QuintileCell:
    quintile: int
    n: int
    mse: float
    sse: float
    sse_under: float
    sse_over: float
    n_under: int
    n_over: int
    mean_surprisal: float
    mean_surprisal_under: float | None
    mean_surprisal_over: float | None
    surprisal_proportion: float


@dataclass
class QuintileReport:
    cells: dict[int, QuintileCell]
    total_n: int
    total_mse: float
    total_sse: float


@dataclass
class SlopeTest:
    slope: float
    intercept: float
    t_statistic: float
    degrees_freedom: int
    p_one_tailed: float


@dataclass
class PermutationResult:
    observed_statistic: float
    permutation_count: int
    p_value: float
    seed: int


def quintile_report(records: list[ResidualRecord]) -> QuintileReport:
    """Per-quintile MSE and SSE splits by residual sign.

    Positive residuals (underpredictions) feed sse_under, the rest sse_over;
    surprisal_proportion is the quintile's share of total surprisal mass.
    """
    if not records:
        raise DiagnosticsError("no residual records")
    by_q: dict[int, list[ResidualRecord]] = {}
    for r in records:
        if not 1 <= r.quintile <= 5:
            raise DiagnosticsError(f"quintile label {r.quintile} out of range")
        by_q.setdefault(r.quintile, []).append(r)
    for q in range(1, 6):
        if q not in by_q:
            raise DiagnosticsError(f"quintile {q} is empty")

    total_surp = sum(r.surprisal for r in records)
    total_sse = sum(r.squared_error for r in records)
    cells = {}
    for q in range(1, 6):
        rs = by_q[q]
        under = [r for r in rs if r.residual > 0]
        over = [r for r in rs if r.residual <= 0]
        sse_under = sum(r.squared_error for r in under)
        sse_over = sum(r.squared_error for r in over)
        surp = sum(r.surprisal for r in rs)
        cells[q] = QuintileCell(
            quintile=q,
            n=len(rs),
            mse=(sse_under + sse_over) / len(rs),
            sse=sse_under + sse_over,
            sse_under=sse_under,
            sse_over=sse_over,
            n_under=len(under),
            n_over=len(over),
            mean_surprisal=surp / len(rs),
            mean_surprisal_under=(
                sum(r.surprisal for r in under) / len(under) if under else None
            ),
            mean_surprisal_over=(
                sum(r.surprisal for r in over) / len(over) if over else None
            ),
            surprisal_proportion=(surp / total_surp) if total_surp else 0.0,
        )
    return QuintileReport(
        cells=cells,
        total_n=len(records),
        total_mse=total_sse / len(records),
        total_sse=total_sse,
    )


def _ols_line(x: np.ndarray, y: np.ndarray):
    xbar, ybar = x.mean(), y.mean()
    sxx = float(((x - xbar) ** 2).sum())
    if sxx == 0.0:
        raise DiagnosticsError("all x values are equal; slope undefined")
    slope = float(((x - xbar) * (y - ybar)).sum()) / sxx
    intercept = float(ybar - slope * xbar)
    return slope, intercept, sxx


def slope_test(points: list[tuple[float, float]]) -> SlopeTest:
    """One-tailed t-test that the OLS slope of MSE on log2 perplexity is
    negative (H1: slope < 0)."""
    if len(points) < 3:
        raise DiagnosticsError(f"need at least 3 points, got {len(points)}")
    x = np.asarray([p[0] for p in points], dtype=np.float64)
    y = np.asarray([p[1] for p in points], dtype=np.float64)
    slope, intercept, sxx = _ols_line(x, y)
    df = len(points) - 2
    resid = y - (intercept + slope * x)
    s2 = float(resid @ resid) / df
    if s2 <= 0.0:
        if slope < 0:
            t, p = -math.inf, 0.0
        elif slope > 0:
            t, p = math.inf, 1.0
        else:
            t, p = 0.0, 0.5
    else:
        se = math.sqrt(s2 / sxx)
        t = slope / se
        p = float(stats.t.cdf(t, df))
    return SlopeTest(slope=slope, intercept=intercept, t_statistic=t,
                     degrees_freedom=df, p_one_tailed=p)


def _word_squared_errors(variant: VariantResult, quintiles: set[int]):
    """Aggregate observation squared errors to word level for the given
    quintiles: (doc_id, word_index) -> (sse, count, quintile)."""
    table: dict[tuple[str, int], list] = {}
    for r in variant.records:
        if r.quintile not in quintiles:
            continue
        key = (r.doc_id, r.word_index)
        cell = table.get(key)
        if cell is None:
            table[key] = [r.squared_error, 1, r.quintile]
        else:
            if cell[2] != r.quintile:
                raise DiagnosticsError(
                    f"word {key} carries two quintile labels"
                )
            cell[0] += r.squared_error
            cell[1] += 1
    return table


def quintile_slope_permutation(variants: list[VariantResult],
                               target_quintile: int, other_quintile: int,
                               R: int, seed: int) -> PermutationResult:
    """Permutation test that the MSE-vs-log2-perplexity slope of the target
    quintile is lower than the other quintile's.

    The statistic is slope(target) - slope(other), with per-variant group
    MSEs recomputed from word-level squared errors.  Each permutation
    shuffles which words carry the target label (group sizes preserved, the
    same shuffle applied to every variant).  p = (1 + #{permuted <=
    observed}) / (R + 1); one-sided, small statistics are extreme.
    Deterministic given the seed: permutation i draws from the i-th child
    of the master seed sequence, so parallel execution order cannot change
    the result.
    """
    if R < 1:
        raise DiagnosticsError(f"need at least one permutation, got {R}")
    if len(variants) < 3:
        raise DiagnosticsError("need at least 3 variants for slopes")
    wanted = {target_quintile, other_quintile}
    tables = [_word_squared_errors(v, wanted) for v in variants]
    keys = sorted(tables[0])
    if not keys:
        raise DiagnosticsError("no words in the requested quintiles")
    for v, t in zip(variants[1:], tables[1:]):
        if sorted(t) != keys:
            raise DiagnosticsError(
                f"variant {v.variant_key} scores a different word set"
            )

    counts = np.array([tables[0][k][1] for k in keys], dtype=np.float64)
    for v, t in zip(variants[1:], tables[1:]):
        if not np.array_equal(
            counts, np.array([t[k][1] for k in keys], dtype=np.float64)
        ):
            raise DiagnosticsError(
                f"variant {v.variant_key} has different observation counts"
            )
    labels = np.array([tables[0][k][2] == target_quintile for k in keys])
    se = np.column_stack(
        [np.array([t[k][0] for k in keys]) for t in tables]
    )  # U x V
    n_target = int(labels.sum())
    n_other = len(keys) - n_target
    if n_target < 2 or n_other < 2:
        raise DiagnosticsError(
            f"group sizes too small: {n_target} target, {n_other} other"
        )

    x = np.array([v.log2_perplexity for v in variants], dtype=np.float64)
    xc = x - x.mean()
    sxx = float(xc @ xc)
    if sxx == 0.0:
        raise DiagnosticsError("all variants have equal log2 perplexity")

    def statistic(mask: np.ndarray) -> float:
        mse_t = se[mask].sum(axis=0) / counts[mask].sum()
        mse_o = se[~mask].sum(axis=0) / counts[~mask].sum()
        slope_t = float(xc @ (mse_t - mse_t.mean())) / sxx
        slope_o = float(xc @ (mse_o - mse_o.mean())) / sxx
        return slope_t - slope_o

    observed = statistic(labels)
    children = np.random.SeedSequence(seed).spawn(R)
    at_most = 0
    U = len(keys)
    for child in children:
        rng = np.random.default_rng(child)
        perm = rng.permutation(U)
        mask = np.zeros(U, dtype=bool)
        mask[perm[:n_target]] = True
        if statistic(mask) <= observed:
            at_most += 1
    return PermutationResult(
        observed_statistic=observed,
        permutation_count=R,
        p_value=(1 + at_most) / (R + 1),
        seed=seed,
    )


def training_dynamics(runs: list[VariantResult]) -> list[dict]:
    """Long-format table: one row per (variant, step, quintile).

    Carries mean surprisal, the quintile's share of the run's total
    surprisal, and the SSE/MSE of the run's regression on that quintile.
    """
    corpora = {r.corpus_id for r in runs}
    if len(corpora) > 1:
        raise DiagnosticsError(f"runs span multiple corpora: {sorted(corpora)}")
    rows = []
    for run in sorted(runs, key=lambda r: (r.model_id, r.checkpoint_step)):
        report = quintile_report(run.records)
        for q in range(1, 6):
            cell = report.cells[q]
            rows.append({
                "model_id": run.model_id,
                "checkpoint_step": run.checkpoint_step,
                "quintile": q,
                "n": cell.n,
                "mean_surprisal": cell.mean_surprisal,
                "surprisal_proportion": cell.surprisal_proportion,
                "sse": cell.sse,
                "mse": cell.mse,
            })
    return rows


def occlusion_report(entries: list[tuple[str, str, dict]],
                     conditions: list[str]) -> list[dict]:
    """Mean quintile-1 surprisal per (model, context condition).

    `entries` holds (model_id, condition, word_surprisals) where the word
    maps cover the same quintile-1 word set across all of a model's
    conditions (words skipped for insufficient context must be removed from
    every condition upstream).  Proportions normalize each model's mean
    surprisals over the given condition order; raw means are always
    emitted.
    """
    by_model: dict[str, dict[str, dict]] = {}
    for model_id, condition, words in entries:
        if condition not in conditions:
            raise DiagnosticsError(f"unexpected condition {condition!r}")
        by_model.setdefault(model_id, {})[condition] = words

    rows = []
    for model_id in sorted(by_model):
        per_cond = by_model[model_id]
        missing = [c for c in conditions if c not in per_cond]
        if missing:
            raise DiagnosticsError(
                f"model {model_id!r} lacks conditions {missing}"
            )
        base = set(per_cond[conditions[0]])
        for c in conditions[1:]:
            other = set(per_cond[c])
            if other != base:
                diff = sorted(base.symmetric_difference(other))
                raise DiagnosticsError(
                    f"model {model_id!r} condition {c!r} scores a different "
                    f"word set; symmetric difference: {diff[:10]}"
                    + ("..." if len(diff) > 10 else "")
                )
        keys = sorted(base)
        if not keys:
            raise DiagnosticsError(f"model {model_id!r} has no shared words")
        means = {
            c: sum(per_cond[c][k] for k in keys) / len(keys)
            for c in conditions
        }
        total = sum(means.values())
        for c in conditions:
            rows.append({
                "model_id": model_id,
                "condition": c,
                "n_words": len(keys),
                "mean_surprisal": means[c],
                "proportion": means[c] / total if total else 0.0,
            })
    return rows
