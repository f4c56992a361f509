"""Profiled REML criterion and fitting for y = X beta + Z b + eps.

The random effects are b = Lambda(theta) u with u ~ N(0, sigma^2 I) and
eps ~ N(0, sigma^2 I), so theta parameterizes the relative covariance
factor.  For a candidate theta, beta and sigma^2 are profiled out by
penalized least squares on the normal equations

    A = Lambda' Z'Z Lambda + I,

factored by a sparse Cholesky backend.  With W = Lambda'Z'X, w = Lambda'Z'y:

    X'V^{-1}X = X'X - W'A^{-1}W           (V = Z Lambda Lambda' Z' + I)
    r^2(theta) = y'y - w'A^{-1}w - beta'(X'y - W'A^{-1}w)
    deviance   = log|A| + log|X'V^{-1}X|
                 + (n-p) (1 + log(2 pi r^2 / (n-p)))

which equals the REML criterion of the explicit-covariance formulation;
the dense oracle in surpdiag.oracles verifies exactly that identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.linalg import cho_factor, cho_solve

from . import design as design_mod
from .backend import NotPositiveDefiniteError, make_factor
from .design import DesignMatrices
from .simplex import nelder_mead

LOG_2PI = math.log(2.0 * math.pi)
_R2_FLOOR = 1e-300


class FixedEffectsError(ValueError):
    """X is rank deficient: fixed effects not estimable."""


class NonConvergenceError(RuntimeError):
    """Optimizer exhausted its budget; carries the best state found."""

    def __init__(self, message: str, result: "FitResult"):
        super().__init__(message)
        self.result = result


@dataclass
class ProfiledState:
    theta: np.ndarray
    beta: np.ndarray
    u: np.ndarray              # spherical random effects, length q
    b: np.ndarray              # Lambda u: per-column contributions
    sigma2: float
    r2: float
    logdet_A: float
    logdet_RX: float
    deviance: float
    fitted: np.ndarray
    beta_cov_unscaled: np.ndarray   # (X'V^{-1}X)^{-1}; times sigma2 = cov(beta)


class REMLProblem:
    """Precomputed cross-products and factor structure for one design."""

    def __init__(self, design: DesignMatrices, backend: str | None = None):
        X, y, Z = design.X, design.y, design.Z
        n, p = X.shape
        q = Z.shape[1]
        if q < 1:
            raise ValueError("design has no random-effect columns")
        if n <= p:
            raise FixedEffectsError(f"n={n} observations for p={p} fixed effects")
        if np.linalg.matrix_rank(X) < p:
            raise FixedEffectsError("fixed effects not estimable: X is rank deficient")

        self.design = design
        self.n, self.p, self.q = n, p, q
        self.XtX = X.T @ X
        self.Xty = X.T @ y
        self.yty = float(y @ y)
        ZtZ = (Z.T @ Z).tocsc()
        ZtZ.sort_indices()
        self.ZtZ = ZtZ
        self.ZtX = np.asarray(Z.T @ X)
        self.Zty = np.asarray(Z.T @ y)

        self._build_lambda_template()

        # Fixed structural pattern of A = Lambda'Z'Z Lambda + I, computed
        # with absolute values so no cancellation can shrink it.  scipy's
        # sparse products prune numeric zeros, so every evaluation scatters
        # its (sub-pattern) values into this fixed pattern before factoring.
        ones = self._lam_template.copy()
        ones.data = np.ones_like(ones.data)
        absZtZ = ZtZ.copy()
        absZtZ.data = np.abs(absZtZ.data)
        pattern = (ones.T @ absZtZ @ ones + sparse.identity(q)).tocsc()
        pattern.sort_indices()
        pattern.data[:] = 1.0
        self._A_indptr = pattern.indptr.copy()
        self._A_indices = pattern.indices.copy()
        # Canonical CSC order is ascending in col*q + row, so this is sorted.
        cols = np.repeat(np.arange(q, dtype=np.int64),
                         np.diff(self._A_indptr))
        self._A_linear = cols * q + self._A_indices
        diag_lin = np.arange(q, dtype=np.int64) * q + np.arange(q)
        self._A_diag_slots = np.searchsorted(self._A_linear, diag_lin)

        self.factor = make_factor(pattern, backend)
        self.n_theta = design_mod.theta_dim(design.terms)

    def _build_lambda_template(self):
        """Canonical CSC for Lambda with a fixed theta-slot mapping."""
        rows, cols, slot = [], [], []
        pos = 0
        for bt in self.design.terms:
            t = bt.term
            b = t.block_size
            if t.covariance == design_mod.FULL_COV:
                entries = [(i, j, pos + i * (i + 1) // 2 + j)
                           for i in range(b) for j in range(i + 1)]
                pos += b * (b + 1) // 2
            else:
                entries = [(i, i, pos + i) for i in range(b)]
                pos += b
            for lv in range(bt.n_levels):
                base = bt.col_offset + lv * b
                for i, j, s in entries:
                    rows.append(base + i)
                    cols.append(base + j)
                    slot.append(s)
        template = sparse.csc_matrix(
            (np.arange(len(slot), dtype=np.float64), (rows, cols)),
            shape=(self.q, self.q),
        )
        template.sort_indices()
        order = template.data.astype(np.int64)
        self._lam_template = template
        self._slot_map = np.asarray(slot, dtype=np.int64)[order]

    def _lambda(self, theta: np.ndarray) -> sparse.csc_matrix:
        lam = self._lam_template
        lam.data = theta[self._slot_map]
        return lam

    def _assemble(self, theta: np.ndarray) -> sparse.csc_matrix:
        lam = self._lambda(theta)
        prod = (lam.T @ self.ZtZ @ lam).tocsc()
        prod.sort_indices()
        q = self.q
        lin = (np.repeat(np.arange(q, dtype=np.int64), np.diff(prod.indptr))
               * q + prod.indices)
        slots = np.searchsorted(self._A_linear, lin)
        if not np.array_equal(self._A_linear[slots], lin):
            raise AssertionError("normal-equations pattern drifted")
        data = np.zeros(self._A_linear.shape[0])
        data[slots] = prod.data
        data[self._A_diag_slots] += 1.0
        return sparse.csc_matrix(
            (data, self._A_indices, self._A_indptr), shape=(q, q)
        )

    def profile(self, theta) -> ProfiledState:
        """Profiled beta, sigma^2, deviance and BLUPs at a fixed theta."""
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.n_theta,):
            raise ValueError(f"theta must have length {self.n_theta}")
        A = self._assemble(theta)
        self.factor.update(A)
        logdet_A = self.factor.logdet()

        lam = self._lambda(theta)
        W = np.asarray(lam.T @ self.ZtX)
        w = np.asarray(lam.T @ self.Zty)
        rhs = np.column_stack([W, w])
        sol = self.factor.solve(rhs)
        AiW, aiw = sol[:, :self.p], sol[:, self.p]

        RXtRX = self.XtX - W.T @ AiW
        try:
            cf = cho_factor(RXtRX, lower=True)
        except np.linalg.LinAlgError as exc:
            raise FixedEffectsError(
                "fixed effects not estimable at this theta"
            ) from exc
        logdet_RX = float(2.0 * np.log(np.diag(cf[0])).sum())
        rhs_beta = self.Xty - W.T @ aiw
        beta = cho_solve(cf, rhs_beta)

        h = float(w @ aiw)
        r2 = self.yty - h - float(beta @ rhs_beta)
        r2 = max(r2, 0.0)
        u = aiw - AiW @ beta
        b = np.asarray(lam @ u)
        fitted = self.design.X @ beta + self.design.Z @ b

        nmp = self.n - self.p
        sigma2 = r2 / nmp
        deviance = (logdet_A + logdet_RX
                    + nmp * (1.0 + LOG_2PI + math.log(max(r2, _R2_FLOOR) / nmp)))
        beta_cov_unscaled = cho_solve(cf, np.eye(self.p))
        return ProfiledState(
            theta=theta, beta=beta, u=u, b=b, sigma2=sigma2, r2=r2,
            logdet_A=logdet_A, logdet_RX=logdet_RX, deviance=deviance,
            fitted=fitted, beta_cov_unscaled=beta_cov_unscaled,
        )

    def deviance(self, theta) -> float:
        return self.profile(theta).deviance


def reml_deviance(theta, design: DesignMatrices,
                  backend: str | None = None) -> float:
    """Profiled REML criterion at theta (beta and sigma^2 profiled out)."""
    problem = getattr(design, "_reml_problem", None)
    if problem is None or (backend and problem.factor.name != backend):
        problem = REMLProblem(design, backend)
        design._reml_problem = problem
    return problem.deviance(np.asarray(theta, dtype=np.float64))


@dataclass
class FitOptions:
    restarts: int = 3
    f_rtol: float = 1e-8
    x_atol: float = 1e-7
    max_evals: int = 20000
    init_step: float = 0.25
    restart_scale: float = 0.25
    seed: int = 0
    backend: str | None = None


@dataclass
class FitResult:
    beta: np.ndarray
    beta_names: list[str]
    beta_se: np.ndarray
    theta: np.ndarray
    theta_names: list[str]
    sigma2: float
    reml_deviance: float
    converged: bool
    boundary_fit: bool
    n_evals: int
    fitted: np.ndarray
    n: int = 0
    p: int = 0
    q: int = 0

    def to_json_dict(self) -> dict:
        return {
            "beta": {k: v for k, v in zip(self.beta_names, self.beta.tolist())},
            "beta_se": {k: v for k, v in
                        zip(self.beta_names, self.beta_se.tolist())},
            "theta": self.theta.tolist(),
            "theta_names": self.theta_names,
            "sigma2": self.sigma2,
            "reml_deviance": self.reml_deviance,
            "converged": self.converged,
            "boundary_fit": self.boundary_fit,
            "n_evals": self.n_evals,
            "n": self.n,
            "p": self.p,
            "q": self.q,
        }


_BOUNDARY_TOL = 1e-6


def fit(design: DesignMatrices, options: FitOptions | None = None) -> FitResult:
    """Minimize the profiled REML deviance over theta by simplex search.

    Runs Nelder-Mead from the identity factor, then up to `restarts`
    perturbed restarts from the incumbent, all sharing one evaluation
    budget.  Raises NonConvergenceError (carrying the best state) if no run
    meets the tolerance within budget.
    """
    opts = options or FitOptions()
    problem = REMLProblem(design, opts.backend)
    dmask = design_mod.theta_diag_mask(design)

    def objective(theta):
        th = theta.copy()
        th[dmask] = np.maximum(th[dmask], 0.0)
        try:
            return problem.profile(th).deviance
        except NotPositiveDefiniteError:
            return math.inf

    rng = np.random.default_rng(opts.seed)
    x0 = design_mod.theta_init(design)
    budget = opts.max_evals
    total_evals = 0
    best_x, best_f = None, math.inf
    any_converged = False

    for attempt in range(opts.restarts + 1):
        if budget - total_evals < 2 * (x0.shape[0] + 2):
            break
        if attempt == 0:
            start = x0
        else:
            start = best_x + rng.normal(0.0, opts.restart_scale, size=x0.shape)
        x, fval, used, converged = nelder_mead(
            objective, start, step=opts.init_step, f_rtol=opts.f_rtol,
            x_atol=opts.x_atol, max_evals=budget - total_evals,
        )
        total_evals += used
        if fval < best_f:
            best_x, best_f = x, fval
        any_converged = any_converged or converged

    theta_hat = best_x.copy()
    theta_hat[dmask] = np.maximum(theta_hat[dmask], 0.0)
    state = problem.profile(theta_hat)
    result = FitResult(
        beta=state.beta,
        beta_names=list(design.feature_names),
        beta_se=np.sqrt(np.diag(state.beta_cov_unscaled) * state.sigma2),
        theta=theta_hat,
        theta_names=design_mod.theta_names(design),
        sigma2=state.sigma2,
        reml_deviance=state.deviance,
        converged=any_converged,
        boundary_fit=bool(np.any(theta_hat[dmask] < _BOUNDARY_TOL)),
        n_evals=total_evals,
        fitted=state.fitted,
        n=problem.n, p=problem.p, q=problem.q,
    )
    if not any_converged:
        raise NonConvergenceError(
            f"REML optimizer used {total_evals} evaluations without meeting "
            f"tolerance {opts.f_rtol}", result
        )
    return result


@dataclass(frozen=True)
class ResidualRecord:
    subject_id: str
    doc_id: str
    word_index: int
    observed: float            # log RT
    predicted: float
    residual: float            # observed - predicted; > 0 = underprediction
    squared_error: float
    surprisal: float
    quintile: int


def residuals(fit_result: FitResult, design: DesignMatrices,
              quintiles) -> list[ResidualRecord]:
    """Per-observation residual records in log-RT space.

    `quintiles` is a QuintileAssignment (or plain mapping) keyed by
    (doc_id, word_index).
    """
    if not fit_result.converged:
        raise ValueError("fit did not converge; refusing to compute residuals")
    labels = getattr(quintiles, "labels", quintiles)
    records = []
    for i, (subject_id, doc_id, word_index) in enumerate(design.row_keys):
        obs = float(design.y[i])
        pred = float(fit_result.fitted[i])
        resid = obs - pred
        try:
            label = labels[(doc_id, word_index)]
        except KeyError as exc:
            raise ValueError(
                f"no quintile label for doc={doc_id!r} word_index={word_index}"
            ) from exc
        records.append(ResidualRecord(
            subject_id=subject_id, doc_id=doc_id, word_index=word_index,
            observed=obs, predicted=pred, residual=resid,
            squared_error=resid * resid,
            surprisal=float(design.row_surprisal[i]),
            quintile=int(label),
        ))
    return records
