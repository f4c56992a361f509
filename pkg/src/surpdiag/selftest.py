"""Self-contained oracle suite behind `surpdiag selftest`.

Runs the independent re-computations (dense covariance REML, ANOVA closed
forms, brute-force coverage and chain-rule scans, closed-form regression
statistics) against the production paths and prints one PASS/FAIL line per
check.
"""

from __future__ import annotations

import numpy as np
from scipy import sparse

from . import diagnostics, oracles
from .mixedlm.design import BuiltTerm, DesignMatrices, RandomTerm
from .mixedlm.reml import FitOptions, REMLProblem, fit


def _oneway_design(y: np.ndarray, groups: np.ndarray) -> DesignMatrices:
    n = len(y)
    k = int(groups.max()) + 1
    Z = sparse.csc_matrix(
        (np.ones(n), (np.arange(n), groups)), shape=(n, k)
    )
    term = BuiltTerm(term=RandomTerm("g", (), "full"),
                     levels=list(range(k)), col_offset=0)
    return DesignMatrices(
        y=y, X=np.ones((n, 1)), Z=Z, feature_names=["intercept"],
        std_means=np.zeros(0), std_sds=np.ones(0), terms=[term],
        row_keys=[("s", "d", i) for i in range(n)],
        row_surprisal=np.zeros(n),
    )


def _check_windows(n_pairs: int, rng) -> tuple[bool, str]:
    for _ in range(n_pairs):
        count = int(rng.integers(1, 10001))
        W = 2 * int(rng.integers(1, 257))
        if not oracles.window_coverage_ok(count, W):
            return False, f"coverage failed at count={count} W={W}"
    return True, f"{n_pairs} random (count, W) pairs"


def _check_chain_rule(n_files: int, rng) -> tuple[bool, str]:
    for i in range(n_files):
        if not oracles.chain_rule_ok(rng):
            return False, f"chain rule failed on file {i}"
    return True, f"{n_files} synthetic score files"


def _check_reml_oracle(n_instances: int, rng) -> tuple[bool, str]:
    worst = 0.0
    for _ in range(n_instances):
        design, theta = oracles.random_instance(rng)
        prob = REMLProblem(design)
        d1 = prob.deviance(theta)
        d2 = oracles.dense_reml_deviance(theta, design)
        worst = max(worst, abs(d1 - d2) / max(1.0, abs(d2)))
    return worst < 1e-6, f"{n_instances} instances, worst rel err {worst:.2e}"


def _check_anova(rng) -> tuple[bool, str]:
    k, m = 20, 10
    groups = np.repeat(np.arange(k), m)
    y = rng.normal(0, 1.0, size=k)[groups] + rng.normal(0, 0.7, size=k * m)
    sb2_ref, s2_ref = oracles.oneway_anova_components(y, groups)
    res = fit(_oneway_design(y, groups), FitOptions(seed=0))
    sb2 = res.theta[0] ** 2 * res.sigma2
    err = max(abs(sb2 - sb2_ref), abs(res.sigma2 - s2_ref))
    return err < 1e-6, f"component error {err:.2e}"


def _check_ols(n_instances: int, rng) -> tuple[bool, str]:
    worst = 0.0
    for _ in range(n_instances):
        design, _ = oracles.random_instance(rng)
        prob = REMLProblem(design)
        state = prob.profile(np.zeros(prob.n_theta))
        beta, *_ = np.linalg.lstsq(design.X, design.y, rcond=None)
        worst = max(worst, float(np.abs(state.beta - beta).max()))
    return worst < 1e-8, f"{n_instances} instances, worst beta err {worst:.2e}"


def _check_slope(rng) -> tuple[bool, str]:
    x = rng.normal(size=8)
    y = 1.2 - 0.7 * x + rng.normal(0, 0.3, size=8)
    st = diagnostics.slope_test(list(zip(x, y)))
    # Textbook formulas, recomputed here.
    sxx = ((x - x.mean()) ** 2).sum()
    slope = ((x - x.mean()) * (y - y.mean())).sum() / sxx
    resid = y - (y.mean() - slope * x.mean()) - slope * x
    t = slope / np.sqrt(resid @ resid / 6 / sxx)
    from scipy import stats
    p = stats.t.cdf(t, 6)
    err = max(abs(st.slope - slope), abs(st.t_statistic - t),
              abs(st.p_one_tailed - p))
    return err < 1e-10, f"max formula deviation {err:.2e}"


def _check_quintile_identities(rng) -> tuple[bool, str]:
    from .mixedlm.reml import ResidualRecord
    records = []
    for i in range(500):
        resid = float(rng.normal())
        records.append(ResidualRecord(
            subject_id="s", doc_id="d", word_index=i, observed=0.0,
            predicted=-resid, residual=resid, squared_error=resid * resid,
            surprisal=float(rng.uniform(0.5, 15.0)),
            quintile=int(rng.integers(1, 6)),
        ))
    rep = diagnostics.quintile_report(records)
    weighted = sum(c.n * c.mse for c in rep.cells.values()) / rep.total_n
    ok = abs(weighted - rep.total_mse) < 1e-10
    ok &= all(c.sse_under + c.sse_over == c.sse for c in rep.cells.values())
    prop = sum(c.surprisal_proportion for c in rep.cells.values())
    ok &= abs(prop - 1.0) < 1e-12
    return bool(ok), "weighted-mean and SSE-split identities"


def _check_permutation_null(n_sims: int, rng) -> tuple[bool, str]:
    """Loose calibration: null p-values should not pile up near 0."""
    R = 99
    hits = 0
    for s in range(n_sims):
        sim_rng = np.random.default_rng(rng.integers(2**32))
        n_words = 40
        se = sim_rng.exponential(1.0, size=(n_words, 4))
        variants = []
        for vi in range(4):
            records = [
                ResidualRecordLike(
                    doc_id="d", word_index=w, squared_error=float(se[w, vi]),
                    quintile=1 if w < n_words // 2 else 2,
                )
                for w in range(n_words)
            ]
            variants.append(diagnostics.VariantResult(
                model_id=f"m{vi}", checkpoint_step=0, corpus_id="c",
                log2_perplexity=float(8 - vi), records=records,
            ))
        pr = diagnostics.quintile_slope_permutation(variants, 1, 2, R, seed=s)
        if pr.p_value < 0.05:
            hits += 1
    frac = hits / n_sims
    return 0.0 <= frac <= 0.15, f"null rejection rate {frac:.3f} at 0.05"


class ResidualRecordLike:
    """Minimal stand-in carrying the fields the permutation test reads."""

    def __init__(self, doc_id, word_index, squared_error, quintile):
        self.doc_id = doc_id
        self.word_index = word_index
        self.squared_error = squared_error
        self.quintile = quintile


def run(fast: bool = False) -> int:
    rng = np.random.default_rng(60601)
    checks = [
        ("window_coverage", lambda: _check_windows(100 if fast else 500, rng)),
        ("chain_rule", lambda: _check_chain_rule(10 if fast else 50, rng)),
        ("reml_dense_oracle", lambda: _check_reml_oracle(5 if fast else 20, rng)),
        ("anova_oneway", lambda: _check_anova(rng)),
        ("ols_degeneracy", lambda: _check_ols(3 if fast else 10, rng)),
        ("slope_closed_form", lambda: _check_slope(rng)),
        ("quintile_identities", lambda: _check_quintile_identities(rng)),
        ("permutation_null", lambda: _check_permutation_null(
            20 if fast else 60, rng)),
    ]
    failures = 0
    for name, check in checks:
        ok, detail = check()
        status = "PASS" if ok else "FAIL"
        print(f"selftest {name}: {status} ({detail})")
        if not ok:
            failures += 1
    return 0 if failures == 0 else 1
