import math

import numpy as np
import pytest
from scipy import stats

from surpdiag.diagnostics import (DiagnosticsError, VariantResult,
                                  occlusion_report, quintile_report,
                                  quintile_slope_permutation, slope_test,
                                  training_dynamics)
from surpdiag.mixedlm.reml import ResidualRecord


def rec(word_index, residual, quintile, surprisal=1.0, doc="d", subject="s"):
    return ResidualRecord(
        subject_id=subject, doc_id=doc, word_index=word_index, observed=0.0,
        predicted=-residual, residual=residual,
        squared_error=residual * residual, surprisal=surprisal,
        quintile=quintile,
    )


def spread_records(rng, n_per_q=20, scale=1.0):
    records = []
    i = 0
    for q in range(1, 6):
        for _ in range(n_per_q):
            records.append(rec(i, float(rng.normal(0, scale)), q,
                               surprisal=float(rng.uniform(0.5, 9.0))))
            i += 1
    return records


class TestQuintileReport:
    def test_under_over_split(self):
        records = [rec(0, 0.3, 1), rec(1, -0.1, 1)]
        records += [rec(10 * q + j, 0.1, q) for q in range(2, 6)
                    for j in range(2)]
        rep = quintile_report(records)
        c1 = rep.cells[1]
        assert c1.mse == pytest.approx(0.05)
        assert c1.sse_under == pytest.approx(0.09)
        assert c1.sse_over == pytest.approx(0.01)
        assert c1.n_under == 1 and c1.n_over == 1

    def test_all_zero_residuals(self):
        records = [rec(10 * q + j, 0.0, q) for q in range(1, 6)
                   for j in range(3)]
        rep = quintile_report(records)
        assert all(rep.cells[q].mse == 0.0 for q in range(1, 6))

    def test_weighted_mean_identity(self):
        rng = np.random.default_rng(0)
        records = spread_records(rng, n_per_q=100)
        rep = quintile_report(records)
        weighted = sum(c.n * c.mse for c in rep.cells.values()) / rep.total_n
        assert abs(weighted - rep.total_mse) < 1e-10

    def test_sse_split_exact(self):
        rng = np.random.default_rng(1)
        records = spread_records(rng)
        rep = quintile_report(records)
        for c in rep.cells.values():
            assert c.sse_under + c.sse_over == c.sse

    def test_proportions_sum_to_one(self):
        rng = np.random.default_rng(2)
        rep = quintile_report(spread_records(rng))
        assert sum(c.surprisal_proportion for c in rep.cells.values()) == \
            pytest.approx(1.0, abs=1e-12)

    def test_empty_quintile_is_error(self):
        records = [rec(i, 0.1, 1) for i in range(5)]
        with pytest.raises(DiagnosticsError, match="quintile 2"):
            quintile_report(records)


class TestSlopeTest:
    def test_exact_negative_line(self):
        st_ = slope_test([(1, 2), (2, 1), (3, 0)])
        assert st_.slope == pytest.approx(-1.0)
        assert st_.p_one_tailed == 0.0
        assert st_.degrees_freedom == 1

    def test_flat_line_boundary(self):
        st_ = slope_test([(1, 2), (2, 2), (3, 2)])
        assert st_.slope == 0.0
        assert st_.p_one_tailed == 0.5

    def test_matches_closed_form(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=8)
        y = 0.4 - 1.3 * x + rng.normal(0, 0.5, size=8)
        st_ = slope_test(list(zip(x, y)))
        sxx = ((x - x.mean()) ** 2).sum()
        slope = ((x - x.mean()) * (y - y.mean())).sum() / sxx
        intercept = y.mean() - slope * x.mean()
        resid = y - intercept - slope * x
        se = math.sqrt((resid @ resid) / 6 / sxx)
        t = slope / se
        assert st_.slope == pytest.approx(slope, abs=1e-10)
        assert st_.t_statistic == pytest.approx(t, abs=1e-10)
        assert st_.p_one_tailed == pytest.approx(stats.t.cdf(t, 6), abs=1e-10)

    def test_too_few_points(self):
        with pytest.raises(DiagnosticsError):
            slope_test([(1, 2), (2, 1)])

    def test_equal_x_is_error(self):
        with pytest.raises(DiagnosticsError, match="equal"):
            slope_test([(1, 2), (1, 1), (1, 0)])


def make_variants(se_by_variant, quintiles, ppls, counts=None):
    """se_by_variant: array (n_words, n_variants) of squared errors."""
    se = np.asarray(se_by_variant)
    n_words, n_variants = se.shape
    variants = []
    for v in range(n_variants):
        records = []
        for w in range(n_words):
            reps = 1 if counts is None else counts[w]
            for r in range(reps):
                records.append(ResidualRecord(
                    subject_id=f"s{r}", doc_id="d", word_index=w,
                    observed=0.0, predicted=0.0,
                    residual=math.sqrt(se[w, v] / reps),
                    squared_error=se[w, v] / reps,
                    surprisal=1.0, quintile=quintiles[w],
                ))
        variants.append(VariantResult(
            model_id=f"m{v}", checkpoint_step=0, corpus_id="c",
            log2_perplexity=float(ppls[v]), records=records,
        ))
    return variants


class TestPermutation:
    def test_exchangeable_null_p_moderate(self):
        # Identical squared-error distributions in both groups: group 2
        # mirrors group 1's values exactly, so the observed statistic sits
        # at the center of the permutation distribution.
        rng = np.random.default_rng(4)
        half, V = 60, 4
        se_half = rng.exponential(1.0, size=(half, V))
        se = np.vstack([se_half, se_half])
        quintiles = [1] * half + [2] * half
        variants = make_variants(se, quintiles, ppls=[9, 8, 7, 6])
        out = quintile_slope_permutation(variants, 1, 2, R=1000, seed=11)
        assert abs(out.observed_statistic) < 1e-12
        assert 0.3 <= out.p_value <= 0.7

    def test_planted_effect_detected(self):
        # Target-quintile errors grow steeply as perplexity drops; other
        # quintile flat.
        rng = np.random.default_rng(5)
        n_words, V = 80, 4
        ppls = np.array([9.0, 8.0, 7.0, 6.0])
        se = np.empty((n_words, V))
        for w in range(n_words):
            if w < 40:
                se[w] = 0.5 + 0.8 * (9.0 - ppls) + rng.uniform(0, 0.2, V)
            else:
                se[w] = 0.5 + rng.uniform(0, 0.2, V)
        quintiles = [1 if w < 40 else 2 for w in range(n_words)]
        variants = make_variants(se, quintiles, ppls)
        out = quintile_slope_permutation(variants, 1, 2, R=1000, seed=12)
        assert out.observed_statistic < 0
        assert out.p_value <= 0.05

    def test_constant_errors_give_p_one(self):
        # Every permuted statistic equals the observed one.
        se = np.full((10, 3), 2.0)
        quintiles = [1] * 5 + [2] * 5
        variants = make_variants(se, quintiles, ppls=[3, 2, 1])
        out = quintile_slope_permutation(variants, 1, 2, R=1, seed=0)
        assert out.p_value == 1.0

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(6)
        se = rng.exponential(1.0, size=(40, 3))
        quintiles = [1 if w < 20 else 3 for w in range(40)]
        variants = make_variants(se, quintiles, ppls=[5, 4, 3])
        a = quintile_slope_permutation(variants, 1, 3, R=200, seed=42)
        b = quintile_slope_permutation(variants, 1, 3, R=200, seed=42)
        assert a.p_value == b.p_value
        assert a.observed_statistic == b.observed_statistic

    def test_input_validation(self):
        rng = np.random.default_rng(7)
        se = rng.exponential(1.0, size=(20, 3))
        quintiles = [1 if w < 10 else 2 for w in range(20)]
        variants = make_variants(se, quintiles, ppls=[3, 2, 1])
        with pytest.raises(DiagnosticsError):
            quintile_slope_permutation(variants, 1, 2, R=0, seed=0)
        with pytest.raises(DiagnosticsError, match="3 variants"):
            quintile_slope_permutation(variants[:2], 1, 2, R=10, seed=0)
        # Mismatched word sets across variants.
        bad = make_variants(se[:19], quintiles[:19], ppls=[3, 2, 1])
        with pytest.raises(DiagnosticsError, match="different word set"):
            quintile_slope_permutation([variants[0], bad[1], bad[2]],
                                       1, 2, R=10, seed=0)

    def test_small_groups_rejected(self):
        se = np.ones((4, 3))
        quintiles = [1, 1, 1, 2]
        variants = make_variants(se, quintiles, ppls=[3, 2, 1])
        with pytest.raises(DiagnosticsError, match="group sizes"):
            quintile_slope_permutation(variants, 1, 2, R=10, seed=0)


class TestTrainingDynamics:
    def test_proportions(self):
        # Surprisal mass 10,5,3,1,1 over quintiles.
        records = []
        mass = {1: 10.0, 2: 5.0, 3: 3.0, 4: 1.0, 5: 1.0}
        for q, m in mass.items():
            records.append(rec(q, 0.1, q, surprisal=m))
        run = VariantResult(model_id="m", checkpoint_step=1000,
                            corpus_id="c", log2_perplexity=5.0,
                            records=records)
        rows = training_dynamics([run])
        props = {r["quintile"]: r["surprisal_proportion"] for r in rows}
        assert props == pytest.approx(
            {1: 0.5, 2: 0.25, 3: 0.15, 4: 0.05, 5: 0.05})

    def test_equal_count_mean_vs_sum_identity(self):
        # With equal quintile counts, proportions of sums equal proportions
        # of means.
        rng = np.random.default_rng(8)
        records = spread_records(rng, n_per_q=30)
        run = VariantResult("m", 0, "c", 5.0, records=records)
        rows = training_dynamics([run])
        means = np.array([r["mean_surprisal"] for r in rows])
        props = np.array([r["surprisal_proportion"] for r in rows])
        np.testing.assert_allclose(props, means / means.sum(), atol=1e-12)

    def test_cardinality(self):
        rng = np.random.default_rng(9)
        runs = []
        for m in range(2):
            for step in (0, 1000, 143000):
                runs.append(VariantResult(
                    f"m{m}", step, "c", 5.0,
                    records=spread_records(rng, n_per_q=6)))
        rows = training_dynamics(runs)
        assert len(rows) == 2 * 3 * 5

    def test_mixed_corpora_rejected(self):
        rng = np.random.default_rng(10)
        runs = [
            VariantResult("m", 0, "c1", 5.0, records=spread_records(rng)),
            VariantResult("m", 1, "c2", 5.0, records=spread_records(rng)),
        ]
        with pytest.raises(DiagnosticsError, match="corpora"):
            training_dynamics(runs)


class TestOcclusionReport:
    def test_proportions(self):
        words = {("d", i): 1.0 for i in range(4)}
        entries = []
        for cond, mean in zip(["full", "recent49", "recent24", "recent9"],
                              [8.0, 9.0, 10.0, 13.0]):
            entries.append(("m", cond, {k: mean for k in words}))
        rows = occlusion_report(
            entries, ["full", "recent49", "recent24", "recent9"])
        props = {r["condition"]: r["proportion"] for r in rows}
        assert props == pytest.approx({
            "full": 0.2, "recent49": 0.225, "recent24": 0.25,
            "recent9": 0.325,
        })
        means = {r["condition"]: r["mean_surprisal"] for r in rows}
        assert means["recent9"] == 13.0

    def test_identical_scores_equal_proportions(self):
        words = {("d", i): 4.0 for i in range(3)}
        conds = ["full", "recent9"]
        entries = [("m", c, dict(words)) for c in conds]
        rows = occlusion_report(entries, conds)
        assert all(r["proportion"] == pytest.approx(0.5) for r in rows)

    def test_mismatched_word_sets_error(self):
        entries = [
            ("m", "full", {("d", 0): 1.0, ("d", 1): 2.0}),
            ("m", "recent9", {("d", 0): 1.0, ("d", 2): 2.0}),
        ]
        with pytest.raises(DiagnosticsError, match="symmetric difference"):
            occlusion_report(entries, ["full", "recent9"])
