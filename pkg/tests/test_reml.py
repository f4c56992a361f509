"""REML criterion against independent oracles, and backend unit tests."""

import numpy as np
import pytest
from scipy import sparse

from surpdiag import oracles
from surpdiag.mixedlm import design as design_mod
from surpdiag.mixedlm.backend import (HAVE_COMPILED, CompiledCholesky,
                                      NotPositiveDefiniteError,
                                      SuperLUCholesky)
from surpdiag.mixedlm.design import BuiltTerm, DesignMatrices, RandomTerm
from surpdiag.mixedlm.reml import (FixedEffectsError, REMLProblem,
                                   reml_deviance)


def random_spd(rng, n):
    B = sparse.random(n, n, density=float(rng.uniform(0.05, 0.4)),
                      random_state=int(rng.integers(2**31)), format="csc")
    A = (B.T @ B + sparse.identity(n)).tocsc()
    A.sort_indices()
    return A


class TestCholeskyBackends:
    @pytest.mark.parametrize("cls", [SuperLUCholesky] +
                             ([CompiledCholesky] if HAVE_COMPILED else []))
    def test_matches_dense(self, cls):
        rng = np.random.default_rng(0)
        for _ in range(15):
            n = int(rng.integers(4, 90))
            A = random_spd(rng, n)
            Ad = A.toarray()
            rhs = rng.normal(size=(n, 3))
            f = cls(A.copy())
            f.update(A)
            assert f.logdet() == pytest.approx(
                np.linalg.slogdet(Ad)[1], abs=1e-8)
            np.testing.assert_allclose(f.solve(rhs),
                                       np.linalg.solve(Ad, rhs), atol=1e-8)

    @pytest.mark.skipif(not HAVE_COMPILED, reason="extension not built")
    def test_compiled_refactorizes_in_place(self):
        rng = np.random.default_rng(1)
        A = random_spd(rng, 40)
        f = CompiledCholesky(A)
        for _ in range(5):
            A2 = A.copy()
            A2.data = A.data * float(rng.uniform(0.5, 2.0))
            A2.data[:1] += 0.5
            f.update(A2)
            ref = np.linalg.slogdet(A2.toarray())[1]
            assert f.logdet() == pytest.approx(ref, abs=1e-8)

    @pytest.mark.skipif(not HAVE_COMPILED, reason="extension not built")
    def test_not_positive_definite(self):
        A = sparse.csc_matrix(np.array([[1.0, 2.0], [2.0, 1.0]]))
        A.sort_indices()
        f = CompiledCholesky(A)
        with pytest.raises(NotPositiveDefiniteError):
            f.update(A)

    @pytest.mark.skipif(not HAVE_COMPILED, reason="extension not built")
    def test_pattern_mismatch_rejected(self):
        rng = np.random.default_rng(2)
        A = random_spd(rng, 20)
        f = CompiledCholesky(A)
        other = sparse.identity(20, format="csc")
        with pytest.raises(ValueError, match="pattern"):
            f.update(other)


class TestREMLDeviance:
    def test_matches_dense_oracle(self):
        rng = np.random.default_rng(10)
        for _ in range(15):
            design, theta = oracles.random_instance(rng)
            d_sparse = reml_deviance(theta, design)
            d_dense = oracles.dense_reml_deviance(theta, design)
            assert d_sparse == pytest.approx(d_dense, rel=1e-6)

    def test_matches_dense_oracle_at_boundary(self):
        rng = np.random.default_rng(11)
        for _ in range(8):
            design, theta = oracles.random_instance(rng)
            mask = design_mod.theta_diag_mask(design)
            theta = theta.copy()
            idx = np.where(mask)[0]
            theta[idx[::2]] = 0.0
            d_sparse = reml_deviance(theta, design)
            d_dense = oracles.dense_reml_deviance(theta, design)
            assert d_sparse == pytest.approx(d_dense, rel=1e-6)

    def test_theta_zero_equals_ols_criterion(self):
        rng = np.random.default_rng(12)
        design, _ = oracles.random_instance(rng)
        prob = REMLProblem(design)
        d0 = prob.deviance(np.zeros(prob.n_theta))
        assert d0 == pytest.approx(
            oracles.ols_reml_criterion(design.X, design.y), rel=1e-10)

    def test_balanced_oneway_closed_form(self):
        rng = np.random.default_rng(13)
        k, m = 12, 6
        groups = np.repeat(np.arange(k), m)
        y = rng.normal(0, 1.2, size=k)[groups] + rng.normal(size=k * m)
        n = k * m
        Z = sparse.csc_matrix((np.ones(n), (np.arange(n), groups)),
                              shape=(n, k))
        term = BuiltTerm(term=RandomTerm("g", (), "full"),
                         levels=list(range(k)), col_offset=0)
        design = DesignMatrices(
            y=y, X=np.ones((n, 1)), Z=Z, feature_names=["intercept"],
            std_means=np.zeros(0), std_sds=np.ones(0), terms=[term],
            row_keys=[("s", "d", i) for i in range(n)],
            row_surprisal=np.zeros(n),
        )
        prob = REMLProblem(design)
        for lam in (0.0, 0.3, 0.83, 1.7, 4.0):
            expected = oracles.oneway_reml_deviance(y, groups, lam)
            assert prob.deviance(np.array([lam])) == pytest.approx(
                expected, abs=1e-8)

    def test_backends_agree(self):
        rng = np.random.default_rng(14)
        design, theta = oracles.random_instance(rng)
        d_superlu = REMLProblem(design, backend="superlu").deviance(theta)
        if HAVE_COMPILED:
            d_compiled = REMLProblem(design, backend="compiled").deviance(theta)
            assert d_compiled == pytest.approx(d_superlu, rel=1e-10)

    def test_rank_deficient_x(self):
        rng = np.random.default_rng(15)
        design, _ = oracles.random_instance(rng)
        design.X[:, -1] = design.X[:, 0]  # duplicate the intercept
        with pytest.raises(FixedEffectsError, match="not estimable"):
            REMLProblem(design)

    def test_bad_theta_length(self):
        rng = np.random.default_rng(16)
        design, theta = oracles.random_instance(rng)
        prob = REMLProblem(design)
        with pytest.raises(ValueError, match="length"):
            prob.profile(np.append(theta, 1.0))
