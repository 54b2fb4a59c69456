import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from battag import autodiff as ad
from battag.autodiff import Tensor
from battag.errors import ConfigError, DegenerateClassError
from battag.gradcheck import check_losses, random_loss_batch
from battag.objectives import (
    COMPATIBLE,
    DatasetStats,
    LossBatch,
    LossSpec,
    aggregated_gradient,
    gradient_root,
    loss_autodiff,
    loss_grad_analytic,
    loss_value,
    make_weights,
    sign_boundary,
    valid_combinations,
    wce_optimality_check,
)

F = Fraction


def one_token(family, probs, true, gamma=0.0, lam=1.0, weights=None, log_base="base10"):
    spec = LossSpec(family, gamma, lam, weights, log_base)
    return loss_value(spec, LossBatch.from_ids([true], [probs]))


class TestWorkedExamples:
    """Single-token values computed with base-10 logs."""

    P1 = [0.4, 0.3, 0.3]
    P2 = [0.4, 0.5, 0.1]

    def test_cecl_penalises_the_wrong_prediction_more(self):
        v1 = one_token("CECL", self.P1, 0)
        v2 = one_token("CECL", self.P2, 0)
        assert v1 == pytest.approx(-math.log10(0.4) - 2 * math.log10(0.7), abs=1e-12)
        assert v2 == pytest.approx(-math.log10(0.4) - math.log10(0.5) - math.log10(0.9), abs=1e-12)
        assert round(v1, 2) == 0.71 and round(v2, 2) == 0.74

    def test_pbp_only_punishes_the_predicted_wrong_class(self):
        v1 = one_token("PBP", self.P1, 0)
        v2 = one_token("PBP", self.P2, 0)
        assert v1 == pytest.approx(-math.log10(0.4), abs=1e-12)
        assert v2 == pytest.approx(-math.log10(0.4) - math.log10(0.5), abs=1e-12)
        assert round(v1, 2) == 0.40 and round(v2, 2) == 0.70

    def test_plain_ce_cannot_tell_the_two_predictions_apart(self):
        assert one_token("CE", self.P1, 0) == one_token("CE", self.P2, 0)

    def test_wce_costs_for_counts_20_2_1(self):
        w = make_weights("wce-optimal", DatasetStats((20, 2, 1)))
        p = [0.1, 0.5, 0.4]
        first = one_token("WCE", p, 0, weights=w)
        second = one_token("WCE", p, 1, weights=w)
        assert first == pytest.approx(23 / 20, abs=1e-12)
        assert second == pytest.approx(11.5 * math.log10(2), abs=1e-12)
        assert second > first

    def test_cecla_appendix_token(self):
        # ten samples at 7:2:1, weights divided by N, token of the second class
        w = make_weights("array", DatasetStats((7, 2, 1))).scaled(1 / 10)
        got = one_token("CECLA", [0.25, 0.5, 0.25], 1, weights=w)
        want = -0.5 * math.log10(0.5) - 0.25 * math.log10(0.75) - 0.25 * math.log10(0.75)
        assert got == pytest.approx(want, abs=1e-12)

    def test_wcecl_appendix_token_uses_per_class_negative_weights(self):
        w = make_weights("ee", DatasetStats((7, 2, 1))).scaled(1 / 10)
        got = one_token("WCECL", [0.25, 0.5, 0.25], 1, weights=w)
        want = -0.5 * math.log10(0.5) - (1 / 3) * math.log10(0.75) - (1 / 9) * math.log10(0.75)
        assert got == pytest.approx(want, abs=1e-12)


class TestWeights:
    def test_array_matrix_for_7_2_1_is_exact(self):
        A = make_weights("array", DatasetStats((7, 2, 1)), exact=True).A
        want = [[F(1, 7), F(1, 4), F(1, 2)], [F(1, 14), F(1, 2), F(1, 2)], [F(1, 14), F(1, 4), F(1)]]
        assert [[x / 10 for x in row] for row in A.tolist()] == want

    def test_ee_weights_as_a_matrix_for_7_2_1(self):
        w = make_weights("ee", DatasetStats((7, 2, 1)), exact=True)
        M = [[w.alpha[i] if i == j else w.beta[i] for j in range(3)] for i in range(3)]
        want = [[F(1, 7), F(1, 3), F(1, 3)], [F(1, 8), F(1, 2), F(1, 8)], [F(1, 9), F(1, 9), F(1)]]
        assert [[x / 10 for x in row] for row in M] == want

    @pytest.mark.parametrize("counts", [(7, 2, 1), (21, 2, 1), (50, 10, 5, 2, 1), (3, 3)])
    def test_array_column_sums(self, counts):
        stats = DatasetStats(counts)
        A = make_weights("array", stats, exact=True).A
        for j, nj in enumerate(counts):
            assert sum(A[:, j]) == F(2 * stats.N, nj)

    def test_standard_and_ee_formulas(self):
        s = DatasetStats((20, 2, 1))
        std = make_weights("standard", s, exact=True)
        ee = make_weights("ee", s, exact=True)
        assert list(std.alpha) == [F(3, 23), F(21, 23), F(22, 23)]
        assert list(std.beta) == [F(20, 23), F(2, 23), F(1, 23)]
        assert list(ee.alpha) == [F(23, 20), F(23, 2), F(23, 1)]
        assert list(ee.beta) == [F(23, 3), F(23, 21), F(23, 22)]

    def test_class_holding_every_sample_breaks_negative_weights(self):
        with pytest.raises(ValueError):
            DatasetStats((5, 0))
        # DatasetStats refuses empty classes, so build the degenerate case by hand
        stats = object.__new__(DatasetStats)
        object.__setattr__(stats, "counts", (4, 0))
        with pytest.raises(DegenerateClassError):
            make_weights("ee", stats)

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            make_weights("inverse", DatasetStats((2, 1)))


class TestSpecValidation:
    def test_ce_has_no_focal_factor(self):
        with pytest.raises(ConfigError, match="FCE"):
            LossSpec("CE", gamma=1.0)

    def test_lambda_below_one_rejected(self):
        with pytest.raises(ConfigError, match="lambda"):
            LossSpec("CECL", lam=0.5)

    @pytest.mark.parametrize("family,kind", [("CECLA", "ee"), ("WCECL", "array"), ("CE", "standard")])
    def test_incompatible_weight_scheme(self, family, kind):
        with pytest.raises(ConfigError, match=kind):
            LossSpec(family, weights=make_weights(kind, DatasetStats((3, 2, 1))))

    def test_dict_round_trip(self):
        stats = DatasetStats((21, 2, 1))
        spec = LossSpec.from_dict(
            {"family": "PBP", "gamma": 0, "lambda": 8, "weight_scheme": "ee", "log_base": "base10"}, stats
        )
        again = LossSpec.from_dict(spec.to_dict(), stats)
        assert again.to_dict() == spec.to_dict()
        np.testing.assert_array_equal(again.weights.beta, spec.weights.beta)

    def test_weighted_scheme_needs_statistics(self):
        with pytest.raises(ConfigError):
            LossSpec.from_dict({"family": "WCE", "weight_scheme": "wce-optimal"})

    def test_combination_grid_covers_every_family(self):
        combos = list(valid_combinations())
        assert {c[0] for c in combos} == set(COMPATIBLE)
        assert not any(f == "CE" and g for f, _, g, _ in combos)


class TestBatchContract:
    def test_rows_must_sum_to_one(self):
        with pytest.raises(ValueError, match="sum to 1"):
            LossBatch.from_ids([0], [[0.5, 0.6]])

    def test_masked_rows_are_not_validated_or_counted(self):
        spec = LossSpec("CECL")
        live = LossBatch.from_ids([0], [[0.7, 0.3]])
        padded = LossBatch.from_ids([0, 1], [[0.7, 0.3], [0.0, 0.0]], mask=[True, False])
        assert loss_value(spec, padded) == loss_value(spec, live)
        assert np.all(loss_grad_analytic(spec, padded)[1] == 0)

    def test_everything_masked_gives_zero(self):
        b = LossBatch.from_ids([0, 1], [[0.5, 0.5], [0.5, 0.5]], mask=[False, False])
        assert loss_value(LossSpec("CE"), b) == 0.0

    def test_saturated_probabilities_stay_finite(self):
        b = LossBatch.from_ids([1], [[1.0, 0.0]])
        for family in ("CE", "CECL", "PBP"):
            spec = LossSpec(family)
            assert np.isfinite(loss_value(spec, b))
            assert np.all(np.isfinite(loss_grad_analytic(spec, b)))


class TestNegativeSupport:
    def test_pbp_tie_breaks_to_lowest_index(self):
        # classes 1 and 2 tie; only class 1 is punished
        b = LossBatch.from_ids([0], [[0.2, 0.4, 0.4]])
        g = loss_grad_analytic(LossSpec("PBP"), b)
        assert g[0, 1] > 0 and g[0, 2] == 0

    def test_pbp_has_no_negative_term_when_right(self):
        b = LossBatch.from_ids([0], [[0.5, 0.3, 0.2]])
        g = loss_grad_analytic(LossSpec("PBP"), b)
        assert np.all(g[0, 1:] == 0)

    def test_cecla_reads_column_of_true_class(self):
        A = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0], [7.0, 8.0, 9.0]])
        w = make_weights("array", DatasetStats((3, 2, 1)))
        w = type(w)("array", np.diag(A).copy(), None, A)
        p = np.array([[0.2, 0.5, 0.3]])
        spec = LossSpec("CECLA", weights=w, log_base="natural")
        got = loss_value(spec, LossBatch.from_ids([1], p))
        want = -(5.0 * math.log(0.5) + 2.0 * math.log(0.8) + 8.0 * math.log(0.7))
        assert got == pytest.approx(want, rel=1e-12)


class TestGradients:
    def test_every_configuration_on_a_few_batches(self):
        rows = check_losses(n_batches=6, seed=11)
        bad = [r.line() for r in rows if not r.passed]
        assert not bad, bad

    def test_base10_gradients(self):
        rows = check_losses(n_batches=3, seed=5, lams=(1, 20), log_base="base10")
        assert all(r.passed for r in rows)

    def test_corrupted_gradient_is_caught(self):
        def broken(spec, batch):
            g = loss_grad_analytic(spec, batch)
            return g * 1.001

        rows = check_losses(broken, n_batches=3, seed=2, gammas=(0,), lams=(1,))
        fd_rows = [r for r in rows if r.name.startswith("loss fd")]
        assert fd_rows and not any(r.passed for r in fd_rows)

    def test_scaling_weights_scales_loss_and_gradient(self):
        stats = DatasetStats((21, 2, 1))
        w = make_weights("array", stats)
        b = random_loss_batch(np.random.default_rng(0), 3)
        s1 = LossSpec("CECLA", 1.0, 20.0, w)
        s2 = LossSpec("CECLA", 1.0, 20.0, w.scaled(0.25))
        assert loss_value(s2, b) == pytest.approx(0.25 * loss_value(s1, b), rel=1e-12)
        np.testing.assert_allclose(loss_grad_analytic(s2, b), 0.25 * loss_grad_analytic(s1, b), rtol=1e-12)


@settings(max_examples=60, deadline=None)
@given(
    st.sampled_from(list(valid_combinations())),
    st.sampled_from([2, 3, 5]),
    st.integers(0, 2**31 - 1),
)
def test_tape_and_closed_form_agree(combo, C, seed):
    family, kind, g, lam = combo
    counts = {2: (9, 1), 3: (21, 2, 1), 5: (50, 10, 5, 2, 1)}[C]
    w = None if kind == "none" else make_weights(kind, DatasetStats(counts))
    spec = LossSpec(family, float(g), float(lam), w)
    b = random_loss_batch(np.random.default_rng(seed), C)
    ad.get_tape().clear()
    p = Tensor(b.probs, requires_grad=True)
    out = loss_autodiff(spec, p, b.labels, b.mask)
    assert out.item() == pytest.approx(loss_value(spec, b), rel=1e-12)
    assert out.item() >= 0
    ad.backward(out)
    np.testing.assert_allclose(p.grad, loss_grad_analytic(spec, b), rtol=1e-9, atol=1e-12)


class TestAggregatedGradient:
    stats = DatasetStats((21, 2, 1))

    def spec(self, lam, gamma=0.0, kind="ee", family="WCECL", log_base="natural"):
        return LossSpec(family, gamma, lam, make_weights(kind, self.stats), log_base)

    def test_balanced_at_one_half_for_lambda_one(self):
        for j in range(3):
            assert abs(aggregated_gradient(self.spec(1.0), self.stats, 0.5, 0.5, j)) < 1e-10

    @pytest.mark.parametrize("lam", [1, 8, 9, 12, 20])
    def test_gamma_zero_reduces_to_closed_form(self, lam):
        for kind, family in [("ee", "WCECL"), ("standard", "WCECL"), ("array", "CECLA")]:
            for p in (0.1, 0.5, 0.77, 0.95):
                got = aggregated_gradient(self.spec(lam, kind=kind, family=family), self.stats, p, p, 1, normalize=True)
                assert got == pytest.approx(-lam / p + 1 / (1 - p), rel=1e-12)

    def test_sign_boundaries(self):
        assert sign_boundary(9) == 0.9
        assert Fraction(sign_boundary(12)).limit_denominator(100) == Fraction(12, 13)
        for lam in (9.0, 12.0):
            root = gradient_root(self.spec(lam), self.stats, 0)
            assert root == pytest.approx(lam / (1 + lam), abs=1e-12)
            assert aggregated_gradient(self.spec(lam), self.stats, root - 1e-3, root - 1e-3, 0) < 0
            assert aggregated_gradient(self.spec(lam), self.stats, root + 1e-3, root + 1e-3, 0) > 0

    def test_focal_root_for_lambda_twenty(self):
        base10 = gradient_root(self.spec(20.0, gamma=1.0, log_base="base10"), self.stats, 0)
        natural = gradient_root(self.spec(20.0, gamma=1.0), self.stats, 0)
        assert base10 == pytest.approx(0.831, abs=1e-3)
        assert natural == pytest.approx(0.8422, abs=1e-4)

    def test_root_does_not_depend_on_class_for_balanced_weights(self):
        roots = [gradient_root(self.spec(20.0, gamma=1.0, kind="array", family="CECLA"), self.stats, j) for j in range(3)]
        assert max(roots) - min(roots) < 1e-10

    def test_domain(self):
        with pytest.raises(ValueError):
            aggregated_gradient(self.spec(1.0), self.stats, 1.0, 0.5, 0)


class TestWceOptimality:
    @pytest.mark.parametrize("counts", [(21, 2, 1), (20, 2, 1)])
    def test_inverse_frequency_weights_give_uniform(self, counts):
        p = wce_optimality_check(DatasetStats(counts))
        np.testing.assert_allclose(p, 1 / 3, atol=1e-4)

    @pytest.mark.parametrize("counts", [(21, 2, 1), (20, 2, 1)])
    def test_unit_weights_recover_class_frequencies(self, counts):
        p = wce_optimality_check(DatasetStats(counts), alpha=np.ones(3))
        np.testing.assert_allclose(p, np.array(counts) / sum(counts), atol=1e-4)
