"""Factorization backends for the penalized normal equations.

Two interchangeable implementations of the same contract: factor a sparse
symmetric positive-definite matrix with a fixed sparsity pattern, expose its
log-determinant, and solve against dense right-hand sides.

* ``CompiledCholesky`` uses the Cython up-looking kernel (_spchol) on a
  static symbolic pattern with an RCM fill-reducing ordering.
* ``SuperLUCholesky`` is the pure-Python fallback built on scipy's SuperLU.

The compiled backend is selected at import when the extension is present;
set SURPDIAG_BACKEND=superlu (or =compiled) to force a choice, e.g. for the
benchmark in benchmarks/bench_cholesky.py.
"""

from __future__ import annotations

import os

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from . import symbolic

try:
    from . import _spchol
except ImportError:  # pragma: no cover - exercised only on fallback installs
    _spchol = None

HAVE_COMPILED = _spchol is not None


class NotPositiveDefiniteError(ValueError):
    """The assembled normal-equations matrix was not positive definite."""


class CompiledCholesky:
    """Static-pattern sparse Cholesky backed by the Cython kernel."""

    name = "compiled"

    def __init__(self, pattern: sparse.csc_matrix):
        if _spchol is None:
            raise RuntimeError("compiled backend unavailable")
        pattern = pattern.tocsc()
        pattern.sort_indices()
        self.n = pattern.shape[0]
        self._sym = symbolic.analyze(pattern)
        # Fixed data permutation: unpermuted canonical CSC -> RCM-permuted CSC.
        tagged = pattern.copy()
        tagged.data = np.arange(tagged.nnz, dtype=np.float64)
        tagged = tagged[self._sym.perm][:, self._sym.perm].tocsc()
        tagged.sort_indices()
        self._data_map = tagged.data.astype(np.int64)
        self._pattern_indices = pattern.indices.copy()
        self._pattern_indptr = pattern.indptr.copy()
        self._Lx = np.zeros(self._sym.factor_nnz)
        self._x = np.zeros(self.n)
        self._c = np.zeros(self.n, dtype=np.int64)
        self._ok = False

    def update(self, A: sparse.csc_matrix) -> None:
        """Refactorize for new values of A (same pattern as at analysis)."""
        if A.nnz != self._data_map.shape[0] or not np.array_equal(
            A.indptr, self._pattern_indptr
        ):
            raise ValueError("matrix pattern differs from the analyzed pattern")
        Ax = np.ascontiguousarray(A.data[self._data_map], dtype=np.float64)
        s = self._sym
        info = _spchol.chol_numeric(
            s.n, s.Ap, s.Ai, Ax, s.Lp, s.Li, self._Lx, s.Rp, s.Rj,
            self._x, self._c,
        )
        if info != 0:
            self._ok = False
            raise NotPositiveDefiniteError(
                f"leading minor of order {info} is not positive definite"
            )
        self._ok = True

    def logdet(self) -> float:
        assert self._ok
        return float(2.0 * np.log(self._Lx[self._sym.Lp[:-1]]).sum())

    def solve(self, B: np.ndarray) -> np.ndarray:
        """Return A^{-1} B for dense B of shape (n,) or (n, m)."""
        assert self._ok
        s = self._sym
        vec = B.ndim == 1
        Bp = np.ascontiguousarray(
            B.reshape(self.n, -1)[s.perm], dtype=np.float64
        )
        _spchol.lsolve(s.n, s.Lp, s.Li, self._Lx, Bp)
        _spchol.ltsolve(s.n, s.Lp, s.Li, self._Lx, Bp)
        out = np.empty_like(Bp)
        out[s.perm] = Bp
        return out[:, 0] if vec else out


class SuperLUCholesky:
    """Fallback backend: sparse LU via scipy's SuperLU.

    Not a Cholesky internally, but exposes the same contract (logdet and
    solves of an SPD matrix); the determinant sign is guaranteed positive
    for the matrices this package assembles (A >= I).
    """

    name = "superlu"

    def __init__(self, pattern: sparse.csc_matrix):
        self.n = pattern.shape[0]
        self._lu = None

    def update(self, A: sparse.csc_matrix) -> None:
        try:
            self._lu = splu(A.tocsc())
        except RuntimeError as exc:  # singular factor
            self._lu = None
            raise NotPositiveDefiniteError(str(exc)) from exc
        diag = self._lu.U.diagonal()
        if np.any(diag == 0.0):
            self._lu = None
            raise NotPositiveDefiniteError("singular factor")
        self._logdet = float(np.log(np.abs(diag)).sum())

    def logdet(self) -> float:
        assert self._lu is not None
        return self._logdet

    def solve(self, B: np.ndarray) -> np.ndarray:
        assert self._lu is not None
        return self._lu.solve(np.asarray(B, dtype=np.float64))


_BACKENDS = {"compiled": CompiledCholesky, "superlu": SuperLUCholesky}


def default_backend() -> str:
    forced = os.environ.get("SURPDIAG_BACKEND")
    if forced:
        if forced not in _BACKENDS:
            raise ValueError(f"unknown backend {forced!r}")
        if forced == "compiled" and not HAVE_COMPILED:
            raise RuntimeError("SURPDIAG_BACKEND=compiled but extension missing")
        return forced
    return "compiled" if HAVE_COMPILED else "superlu"


def make_factor(pattern: sparse.csc_matrix, backend: str | None = None):
    """Create a factorization object for the given fixed pattern."""
    name = backend or default_backend()
    if name == "compiled" and not HAVE_COMPILED:
        raise RuntimeError("compiled backend requested but extension missing")
    return _BACKENDS[name](pattern)
