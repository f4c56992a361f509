# cython: language_level=3
"""Numeric kernels for the sparse normal-equations Cholesky.

The symbolic analysis (elimination tree, static factor pattern) is done once
per design in Python (see symbolic.py); these kernels refactorize and solve
for every candidate covariance parameter vector, which is the hot loop of
the REML optimizer.

Conventions, shared with the pure-Python fallback:
  * A is full symmetric CSC with sorted indices; only rows <= k of column k
    are read (upper triangle).
  * L is lower-triangular CSC whose columns store the diagonal entry first,
    then strictly ascending row indices.
  * Row patterns (Rp, Rj) list, for each row k, the columns j < k with
    L[k, j] != 0, sorted ascending.
"""

from libc.math cimport sqrt


def chol_numeric(long n,
                 long[::1] Ap, long[::1] Ai, double[::1] Ax,
                 long[::1] Lp, long[::1] Li, double[::1] Lx,
                 long[::1] Rp, long[::1] Rj,
                 double[::1] x, long[::1] c):
    """Up-looking Cholesky refactorization on a static pattern.

    Returns 0 on success, k+1 if the leading k+1 minor is not positive
    definite.  x and c are scratch arrays of length n; x must be zero on
    entry and is zero again on exit.
    """
    cdef long k, p, t, i, j
    cdef double d, lkj

    for k in range(n):
        for p in range(Ap[k], Ap[k + 1]):
            i = Ai[p]
            if i <= k:
                x[i] = Ax[p]
        d = x[k]
        x[k] = 0.0
        for t in range(Rp[k], Rp[k + 1]):
            j = Rj[t]
            lkj = x[j] / Lx[Lp[j]]
            x[j] = 0.0
            for p in range(Lp[j] + 1, c[j]):
                x[Li[p]] -= Lx[p] * lkj
            d -= lkj * lkj
            Lx[c[j]] = lkj
            c[j] += 1
        if d <= 0.0:
            for t in range(k + 1, n):
                x[t] = 0.0
            return k + 1
        Lx[Lp[k]] = sqrt(d)
        c[k] = Lp[k] + 1
    return 0


def lsolve(long n, long[::1] Lp, long[::1] Li, double[::1] Lx,
           double[:, ::1] B):
    """Solve L X = B in place for dense B of shape (n, m)."""
    cdef long i, p, r, row
    cdef long m = B.shape[1]
    cdef double dinv, v

    for i in range(n):
        dinv = 1.0 / Lx[Lp[i]]
        for r in range(m):
            B[i, r] *= dinv
        for p in range(Lp[i] + 1, Lp[i + 1]):
            row = Li[p]
            v = Lx[p]
            for r in range(m):
                B[row, r] -= v * B[i, r]


def ltsolve(long n, long[::1] Lp, long[::1] Li, double[::1] Lx,
            double[:, ::1] B):
    """Solve L' X = B in place for dense B of shape (n, m)."""
    cdef long i, p, r, row
    cdef long m = B.shape[1]
    cdef double dinv, v

    for i in range(n - 1, -1, -1):
        for p in range(Lp[i] + 1, Lp[i + 1]):
            row = Li[p]
            v = Lx[p]
            for r in range(m):
                B[i, r] -= v * B[row, r]
        dinv = 1.0 / Lx[Lp[i]]
        for r in range(m):
            B[i, r] *= dinv
