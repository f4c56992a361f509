"""Derivative-free Nelder-Mead simplex minimizer.

Owned implementation rather than a library call because the fit contract
pins the termination rule (relative objective spread) and an exact
evaluation budget that must be shared across restarts.
"""

from __future__ import annotations

import numpy as np

ALPHA, GAMMA, BETA, SIGMA = 1.0, 2.0, 0.5, 0.5


def nelder_mead(f, x0, step=0.25, f_rtol=1e-8, x_atol=1e-7, max_evals=2000):
    """Minimize f from x0.  Returns (x_best, f_best, n_evals, converged).

    Converges when the simplex objective spread falls below
    f_rtol * max(1, |f_best|) and every vertex is within
    x_atol * (1 + max|x_best|) of the best vertex; gives up (converged
    False) when the evaluation budget is exhausted.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    d = x0.shape[0]
    evals = 0

    def call(x):
        nonlocal evals
        evals += 1
        return float(f(x))

    simplex = [x0.copy()]
    for i in range(d):
        v = x0.copy()
        v[i] += step
        simplex.append(v)
    fvals = [call(v) for v in simplex]

    while evals < max_evals:
        order = np.argsort(fvals, kind="stable")
        simplex = [simplex[i] for i in order]
        fvals = [fvals[i] for i in order]
        best, worst = fvals[0], fvals[-1]

        spread_ok = (worst - best) <= f_rtol * max(1.0, abs(best))
        xtol = x_atol * (1.0 + np.abs(simplex[0]).max())
        size_ok = all(
            np.abs(v - simplex[0]).max() <= xtol for v in simplex[1:]
        )
        if spread_ok and size_ok:
            return simplex[0], fvals[0], evals, True

        centroid = np.mean(simplex[:-1], axis=0)
        xr = centroid + ALPHA * (centroid - simplex[-1])
        fr = call(xr)
        if fr < fvals[0]:
            xe = centroid + GAMMA * (xr - centroid)
            fe = call(xe)
            if fe < fr:
                simplex[-1], fvals[-1] = xe, fe
            else:
                simplex[-1], fvals[-1] = xr, fr
        elif fr < fvals[-2]:
            simplex[-1], fvals[-1] = xr, fr
        else:
            if fr < fvals[-1]:
                xc = centroid + BETA * (xr - centroid)
            else:
                xc = centroid + BETA * (simplex[-1] - centroid)
            fc = call(xc)
            if fc < min(fr, fvals[-1]):
                simplex[-1], fvals[-1] = xc, fc
            else:
                for i in range(1, d + 1):
                    simplex[i] = simplex[0] + SIGMA * (simplex[i] - simplex[0])
                    fvals[i] = call(simplex[i])

    order = np.argsort(fvals, kind="stable")
    return simplex[order[0]], fvals[order[0]], evals, False
