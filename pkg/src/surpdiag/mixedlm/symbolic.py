"""Symbolic analysis for the sparse Cholesky factor of the normal equations.

Run once per design: the pattern of A = Lambda' Z'Z Lambda + I is fixed by
the random-effects structure, so the elimination tree, the static factor
pattern, and the fill-reducing permutation are all precomputable.  Only the
numeric refactorization happens per candidate theta.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import reverse_cuthill_mckee


def elimination_tree(n: int, Ap, Ai) -> np.ndarray:
    """Elimination tree of a symmetric CSC pattern (upper triangle read)."""
    parent = np.full(n, -1, dtype=np.int64)
    ancestor = np.full(n, -1, dtype=np.int64)
    for k in range(n):
        for p in range(Ap[k], Ap[k + 1]):
            i = Ai[p]
            while i != -1 and i < k:
                nxt = ancestor[i]
                ancestor[i] = k
                if nxt == -1:
                    parent[i] = k
                i = nxt
    return parent


def row_patterns(n: int, Ap, Ai, parent):
    """Per-row factor patterns, each sorted ascending.

    Row k's pattern is the set of columns j < k with L[k, j] != 0: the union
    of etree paths from the nonzeros of A[0:k, k] up to (but excluding) k.
    """
    Rp = np.zeros(n + 1, dtype=np.int64)
    chunks = []
    mark = np.full(n, -1, dtype=np.int64)
    for k in range(n):
        mark[k] = k
        cols = []
        for p in range(Ap[k], Ap[k + 1]):
            i = Ai[p]
            if i >= k:
                continue
            while i != -1 and mark[i] != k:
                cols.append(i)
                mark[i] = k
                i = parent[i]
        cols.sort()
        chunks.append(cols)
        Rp[k + 1] = Rp[k] + len(cols)
    Rj = np.fromiter(
        (j for cols in chunks for j in cols), dtype=np.int64, count=Rp[-1]
    )
    return Rp, Rj


@dataclass
class CholSymbolic:
    """Static structure shared by every numeric refactorization."""

    n: int
    perm: np.ndarray          # fill-reducing permutation (RCM)
    Ap: np.ndarray            # permuted matrix pattern, canonical CSC, int64
    Ai: np.ndarray
    Lp: np.ndarray            # factor pattern: diagonal first, rows ascending
    Li: np.ndarray
    Rp: np.ndarray            # row patterns, sorted
    Rj: np.ndarray

    @property
    def factor_nnz(self) -> int:
        return int(self.Lp[-1])


def analyze(pattern: sparse.csc_matrix) -> CholSymbolic:
    """Symbolic factorization of a symmetric positive-definite pattern.

    ``pattern`` must be square CSC with a full (not triangular) symmetric
    sparsity structure; its values are ignored.
    """
    n = pattern.shape[0]
    if pattern.shape[1] != n:
        raise ValueError("pattern must be square")
    perm = np.asarray(reverse_cuthill_mckee(pattern.tocsr(), symmetric_mode=True),
                      dtype=np.int64)
    permuted = pattern[perm][:, perm].tocsc()
    permuted.sort_indices()
    Ap = permuted.indptr.astype(np.int64)
    Ai = permuted.indices.astype(np.int64)

    parent = elimination_tree(n, Ap, Ai)
    Rp, Rj = row_patterns(n, Ap, Ai, parent)

    # Column counts: one diagonal entry plus one entry per row-pattern hit.
    counts = np.ones(n, dtype=np.int64)
    np.add.at(counts, Rj, 1)
    Lp = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=Lp[1:])

    Li = np.empty(Lp[-1], dtype=np.int64)
    Li[Lp[:-1]] = np.arange(n)
    fill = (Lp[:-1] + 1).copy()
    rows = np.repeat(np.arange(n, dtype=np.int64), np.diff(Rp))
    # Rows arrive in ascending k, so per-column order stays ascending.
    for j, k in zip(Rj, rows):
        Li[fill[j]] = k
        fill[j] += 1

    return CholSymbolic(n=n, perm=perm, Ap=Ap, Ai=Ai, Lp=Lp, Li=Li, Rp=Rp, Rj=Rj)
