"""Independent oracles for the numerical core.

Each function here recomputes a quantity by a deliberately different route
from the production code paths: explicit dense covariance matrices for the
REML criterion, classical ANOVA mean squares for the balanced one-way
benchmark, brute-force re-scans for window coverage and the chain rule.
The `selftest` CLI command and the test suite both drive these.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import sparse

from . import scoring
from .mixedlm import design as design_mod
from .mixedlm.design import BuiltTerm, DesignMatrices, RandomTerm

LOG_2PI = math.log(2.0 * math.pi)


# ---------------------------------------------------------------------------
# Dense explicit-covariance REML evaluation


def dense_reml_deviance(theta, design: DesignMatrices) -> float:
    """REML criterion via V = Z Lambda Lambda' Z' + I, no sparse shortcuts."""
    theta = np.asarray(theta, dtype=np.float64)
    blocks = design_mod.term_blocks(design, theta)
    q = design.q
    lam = np.zeros((q, q))
    for bt, block in zip(design.terms, blocks):
        b = bt.term.block_size
        for lv in range(bt.n_levels):
            s = bt.col_offset + lv * b
            lam[s:s + b, s:s + b] = block
    Z = design.Z.toarray()
    X, y = design.X, design.y
    n, p = X.shape

    ZL = Z @ lam
    V = ZL @ ZL.T + np.eye(n)
    sign, logdet_V = np.linalg.slogdet(V)
    assert sign > 0
    Vi = np.linalg.inv(V)
    XtViX = X.T @ Vi @ X
    sign2, logdet_XtViX = np.linalg.slogdet(XtViX)
    assert sign2 > 0
    beta = np.linalg.solve(XtViX, X.T @ Vi @ y)
    r = y - X @ beta
    r2 = float(r @ Vi @ r)
    nmp = n - p
    return (logdet_V + logdet_XtViX
            + nmp * (1.0 + LOG_2PI + math.log(r2 / nmp)))


def ols_reml_criterion(X: np.ndarray, y: np.ndarray) -> float:
    """REML criterion of ordinary least squares (V = I)."""
    n, p = X.shape
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    rss = float(((y - X @ beta) ** 2).sum())
    _, logdet_XtX = np.linalg.slogdet(X.T @ X)
    nmp = n - p
    return logdet_XtX + nmp * (1.0 + LOG_2PI + math.log(rss / nmp))


# ---------------------------------------------------------------------------
# Balanced one-way ANOVA closed forms


def oneway_anova_components(y: np.ndarray, groups: np.ndarray):
    """REML variance components of a balanced one-way random-intercept
    model from classical mean squares: ((MSB - MSW) / m, MSW)."""
    levels = np.unique(groups)
    k = len(levels)
    m = len(y) // k
    means = np.array([y[groups == g].mean() for g in levels])
    grand = y.mean()
    ssb = m * float(((means - grand) ** 2).sum())
    ssw = sum(float(((y[groups == g] - mu) ** 2).sum())
              for g, mu in zip(levels, means))
    msb = ssb / (k - 1)
    msw = ssw / (k * (m - 1))
    return (msb - msw) / m, msw


def oneway_reml_deviance(y: np.ndarray, groups: np.ndarray,
                         lam: float) -> float:
    """Closed-form REML criterion of the balanced one-way model at relative
    standard deviation `lam` (intercept-only fixed effects)."""
    levels = np.unique(groups)
    k = len(levels)
    n = len(y)
    m = n // k
    assert k * m == n, "design must be balanced"
    means = np.array([y[groups == g].mean() for g in levels])
    grand = y.mean()
    ssb = m * float(((means - grand) ** 2).sum())
    ssw = sum(float(((y[groups == g] - mu) ** 2).sum())
              for g, mu in zip(levels, means))
    c = 1.0 + m * lam * lam
    logdet_V = k * math.log(c)
    logdet_XtViX = math.log(n / c)
    r2 = ssw + ssb / c
    nmp = n - 1
    return (logdet_V + logdet_XtViX
            + nmp * (1.0 + LOG_2PI + math.log(r2 / nmp)))


# ---------------------------------------------------------------------------
# Random small instances for oracle-equivalence sweeps


def random_instance(rng: np.random.Generator, max_n: int = 200):
    """A random small mixed-model design plus a random feasible theta."""
    n = int(rng.integers(40, max_n + 1))
    k = int(rng.integers(1, 4))
    names = [f"x{j}" for j in range(k)]
    X = np.column_stack([np.ones(n), rng.normal(size=(n, k))])

    n_terms = int(rng.integers(1, 4))
    terms: list[BuiltTerm] = []
    zrows, zcols, zdata = [], [], []
    offset = 0
    for t in range(n_terms):
        m = int(rng.integers(3, 13))
        idx = rng.integers(0, m, size=n)
        n_slopes = int(rng.integers(0, min(2, k) + 1))
        slopes = tuple(names[:n_slopes])
        cov = "full" if rng.random() < 0.6 else "diagonal"
        term = RandomTerm(grouping=f"g{t}", slopes=slopes, covariance=cov)
        b = term.block_size
        for i in range(n):
            base = offset + int(idx[i]) * b
            zrows.append(i)
            zcols.append(base)
            zdata.append(1.0)
            for j in range(1, b):
                zrows.append(i)
                zcols.append(base + j)
                zdata.append(X[i, 1 + j - 1])
        terms.append(BuiltTerm(term=term, levels=list(range(m)),
                               col_offset=offset))
        offset += m * b
    Z = sparse.csc_matrix((zdata, (zrows, zcols)), shape=(n, offset))
    Z.sort_indices()
    y = rng.normal(size=n)

    design = DesignMatrices(
        y=y, X=X, Z=Z, feature_names=["intercept"] + names,
        std_means=np.zeros(k), std_sds=np.ones(k), terms=terms,
        row_keys=[("s", "d", i) for i in range(n)],
        row_surprisal=np.zeros(n),
    )
    theta = np.empty(design_mod.theta_dim(terms))
    mask = design_mod.theta_diag_mask(design)
    theta[mask] = rng.uniform(0.0, 1.5, size=int(mask.sum()))
    theta[~mask] = rng.normal(0.0, 0.4, size=int((~mask).sum()))
    return design, theta


# ---------------------------------------------------------------------------
# Brute-force protocol checks


def window_coverage_ok(token_count: int, W: int) -> bool:
    """Re-scan a window plan: every token except 1 targeted exactly once."""
    hits = np.zeros(token_count + 1, dtype=np.int64)
    for req in scoring.plan_windows(token_count, W):
        if req.target_end - req.context_start + 1 > W:
            return False
        hits[req.target_start:req.target_end + 1] += 1
    if token_count >= 2:
        return hits[1] == 0 and bool(np.all(hits[2:] == 1))
    return bool(np.all(hits == 0))


def random_token_scores(rng: np.random.Generator, doc_id: str = "doc"):
    """A random document with tiling token spans and word spans, plus token
    scores; returns (document, scores, total_bits) where total_bits is the
    independent sequence surprisal (sum over scored tokens)."""
    from .corpus import Document, WordToken

    n_words = int(rng.integers(3, 40))
    words = []
    tokens = []
    text_parts = []
    pos = 0
    token_index = 1
    sentence = 0
    pos_in_sent = 1
    for wi in range(n_words):
        lead = " " if wi > 0 else ""
        n_sub = int(rng.integers(1, 4))
        pieces = ["".join(rng.choice(list("abcdefgh"),
                                     size=int(rng.integers(1, 5))))
                  for _ in range(n_sub)]
        word_text = "".join(pieces)
        start = pos + len(lead)
        words.append(WordToken(
            word_index=wi, char_start=start, char_end=start + len(word_text),
            sentence_id=sentence, position_in_sentence=pos_in_sent,
        ))
        pos_in_sent += 1
        for si, piece in enumerate(pieces):
            chunk = (lead if si == 0 else "") + piece
            tokens.append((token_index, pos, pos + len(chunk), chunk))
            pos += len(chunk)
            token_index += 1
        text_parts.append(lead + word_text)
    text = "".join(text_parts)
    document = Document(doc_id=doc_id, text=text, words=words)

    scores = []
    total_bits = 0.0
    for (idx, start, end, chunk) in tokens:
        if idx == 1:
            lp = None
        else:
            lp = float(-rng.uniform(0.05, 12.0))
            total_bits += -lp
        scores.append(scoring.TokenScore(
            doc_id=doc_id, token_index=idx, token_text=chunk,
            char_start=start, char_end=end, log2prob=lp,
        ))
    return document, scores, total_bits


def chain_rule_ok(rng: np.random.Generator, tol: float = 1e-6) -> bool:
    """Word-surprisal aggregation preserves total sequence surprisal."""
    document, scores, total_bits = random_token_scores(rng)
    words = scoring.align_tokens_to_words(document, scores)
    aggregated = sum(w.surprisal for w in words)
    return abs(aggregated - total_bits) <= tol
