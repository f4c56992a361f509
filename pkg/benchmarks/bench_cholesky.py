#!/usr/bin/env python3
"""Benchmark the compiled sparse-Cholesky core against the SuperLU fallback.

Builds mixed-model normal equations (by-subject slope blocks plus crossed
scalar intercepts, the structure the REML optimizer refactorizes thousands
of times per fit) and times (a) full profiled-deviance evaluations and
(b) just the factorize+solve step each backend owns.

Usage: python benchmarks/bench_cholesky.py [--evals N]
"""

import argparse
import time

import numpy as np
from scipy import sparse

from surpdiag.mixedlm import backend as backend_mod
from surpdiag.mixedlm.design import (BuiltTerm, DesignMatrices, RandomTerm,
                                     theta_init)
from surpdiag.mixedlm.reml import REMLProblem


def make_design(n_subjects, n_groups, obs_per_subject, k_fixed, seed=0):
    """Subjects with full slope blocks; every subject cycles through the
    same crossed intercept groups (sentences)."""
    rng = np.random.default_rng(seed)
    n = n_subjects * obs_per_subject
    X = np.column_stack([np.ones(n), rng.normal(size=(n, k_fixed))])
    names = [f"x{j}" for j in range(k_fixed)]
    subj = np.repeat(np.arange(n_subjects), obs_per_subject)
    group = np.tile(
        np.repeat(np.arange(n_groups),
                  -(-obs_per_subject // n_groups))[:obs_per_subject],
        n_subjects,
    )

    b = k_fixed + 1
    rows, cols, data = [], [], []
    for i in range(n):
        base = subj[i] * b
        for j in range(b):
            rows.append(i)
            cols.append(base + j)
            data.append(1.0 if j == 0 else X[i, j])
    off = n_subjects * b
    for i in range(n):
        rows.append(i)
        cols.append(off + group[i])
        data.append(1.0)
    Z = sparse.csc_matrix((data, (rows, cols)), shape=(n, off + n_groups))
    Z.sort_indices()

    terms = [
        BuiltTerm(term=RandomTerm("subject", tuple(names), "full"),
                  levels=list(range(n_subjects)), col_offset=0),
        BuiltTerm(term=RandomTerm("group", (), "full"),
                  levels=list(range(n_groups)), col_offset=off),
    ]
    y = rng.normal(size=n)
    return DesignMatrices(
        y=y, X=X, Z=Z, feature_names=["intercept"] + names,
        std_means=np.zeros(k_fixed), std_sds=np.ones(k_fixed), terms=terms,
        row_keys=[("s", "d", i) for i in range(n)],
        row_surprisal=np.zeros(n),
    )


def bench(design, backend_name, n_evals, seed=1):
    problem = REMLProblem(design, backend=backend_name)
    rng = np.random.default_rng(seed)
    th0 = theta_init(design)
    thetas = [np.abs(th0 + rng.normal(0, 0.2, size=th0.shape))
              for _ in range(n_evals)]
    problem.deviance(th0)  # warm up

    t0 = time.perf_counter()
    acc = 0.0
    for th in thetas:
        acc += problem.deviance(th)
    dev_time = (time.perf_counter() - t0) / n_evals

    rhs = rng.normal(size=(problem.q, problem.p + 1))
    mats = [problem._assemble(th) for th in thetas]
    t0 = time.perf_counter()
    for A in mats:
        problem.factor.update(A)
        problem.factor.logdet()
        problem.factor.solve(rhs)
    core_time = (time.perf_counter() - t0) / n_evals
    return dev_time, core_time, acc


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--evals", type=int, default=50)
    args = ap.parse_args()

    if not backend_mod.HAVE_COMPILED:
        print("compiled extension not built; benchmarking fallback only")
    names = ["superlu"] + (["compiled"] if backend_mod.HAVE_COMPILED else [])

    configs = [
        ("small  (20 subj, 60 sents)", make_design(20, 60, 100, 4)),
        ("medium (40 subj, 300 sents)", make_design(40, 300, 250, 4)),
        ("large  (80 subj, 900 sents)", make_design(80, 900, 400, 6)),
    ]
    print(f"{'design':30s} {'q':>6s}  backend    deviance/eval   factor+solve")
    for label, design in configs:
        checks = {}
        times = {}
        for name in names:
            dev_t, core_t, acc = bench(design, name, args.evals)
            checks[name] = acc
            times[name] = core_t
            print(f"{label:30s} {design.q:6d}  {name:9s} "
                  f"{dev_t * 1e3:11.3f} ms {core_t * 1e3:11.3f} ms")
        if len(names) == 2:
            rel = abs(checks["superlu"] - checks["compiled"]) / max(
                1.0, abs(checks["superlu"])
            )
            assert rel < 1e-9, "backends disagree"
            print(f"{'':30s} {'':6s}  -> core speedup "
                  f"{times['superlu'] / times['compiled']:.2f}x, "
                  f"results agree (rel {rel:.1e})")


if __name__ == "__main__":
    main()
