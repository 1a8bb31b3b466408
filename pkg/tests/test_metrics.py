import math

import numpy as np
import pytest
from scipy import stats

from sentseg.errors import InvalidInputError
from sentseg.metrics import (
    f1_overall_punct,
    f1_sentence_boundary,
    f1_two_class,
    paired_t_test,
    regularized_incomplete_beta,
    student_t_two_tailed_p,
)


def seg_tags(n, sb_at):
    return ["sb" if i in sb_at else "nsb" for i in range(n)]


class TestSentenceBoundaryF1:
    def test_hand_count(self):
        gold = seg_tags(10, {2, 7})
        pred = seg_tags(10, {2, 5})
        report = f1_sentence_boundary(pred, gold)
        assert (report.tp, report.fp, report.fn) == (1, 1, 1)
        assert report.precision == 0.5
        assert report.recall == 0.5
        assert report.f1 == 0.5

    def test_perfect(self):
        gold = seg_tags(6, {0, 3})
        assert f1_sentence_boundary(gold, gold).f1 == 1.0

    def test_no_predicted_positives(self):
        gold = seg_tags(5, {1})
        pred = seg_tags(5, set())
        report = f1_sentence_boundary(pred, gold)
        assert report.precision == 0.0 and report.f1 == 0.0

    def test_length_mismatch(self):
        with pytest.raises(InvalidInputError):
            f1_sentence_boundary(["sb"], ["sb", "nsb"])


class TestPunctuationF1:
    def test_wrong_class_right_position(self):
        gold = ["O", "PERIOD"]
        pred = ["O", "COMMA"]
        overall = f1_overall_punct(pred, gold)
        assert (overall.tp, overall.fp, overall.fn) == (0, 1, 1)
        assert overall.f1 == 0.0
        assert f1_two_class(pred, gold).f1 == 1.0

    def test_perfect(self):
        gold = ["O", "PERIOD", "COMMA", "O", "QUESTION"]
        assert f1_overall_punct(gold, gold).f1 == 1.0
        assert f1_two_class(gold, gold).f1 == 1.0

    def test_all_o_prediction(self):
        gold = ["O", "PERIOD", "COMMA"]
        pred = ["O", "O", "O"]
        assert f1_overall_punct(pred, gold).f1 == 0.0
        assert f1_two_class(pred, gold).f1 == 0.0

    def test_micro_count_identities(self):
        rng = np.random.default_rng(0)
        tags = ["O", "COMMA", "PERIOD", "QUESTION"]
        for _ in range(50):
            n = int(rng.integers(1, 40))
            gold = [tags[i] for i in rng.integers(0, 4, n)]
            pred = [tags[i] for i in rng.integers(0, 4, n)]
            r = f1_overall_punct(pred, gold)
            assert r.tp + r.fp == sum(1 for p in pred if p != "O")
            assert r.tp + r.fn == sum(1 for g in gold if g != "O")
            assert 0.0 <= r.f1 <= 1.0

    def test_coarsening_never_hurts(self):
        rng = np.random.default_rng(1)
        tags = ["O", "COMMA", "PERIOD", "QUESTION"]
        for _ in range(200):
            n = int(rng.integers(1, 30))
            gold = [tags[i] for i in rng.integers(0, 4, n)]
            pred = [tags[i] for i in rng.integers(0, 4, n)]
            assert f1_two_class(pred, gold).f1 >= f1_overall_punct(pred, gold).f1 - 1e-12

    def test_per_class_breakdown(self):
        gold = ["COMMA", "PERIOD", "O"]
        pred = ["COMMA", "COMMA", "O"]
        r = f1_overall_punct(pred, gold)
        assert r.per_class["COMMA"] == {"tp": 1, "fp": 1, "fn": 0}
        assert r.per_class["PERIOD"] == {"tp": 0, "fp": 0, "fn": 1}

    def test_report_serializes(self):
        r = f1_overall_punct(["O", "COMMA"], ["O", "COMMA"])
        assert '"family"' in r.to_json()


class TestStudentT:
    def test_reference_value(self):
        # for df=2 the CDF has the closed form p = 1 - sqrt(1 - x) with
        # x = 2 / (2 + t^2); at t = 3.464 that is ~0.0742
        t = 3.464
        x = 2.0 / (2.0 + t * t)
        expected = 1.0 - math.sqrt(1.0 - x)
        assert student_t_two_tailed_p(t, 2) == pytest.approx(expected, abs=1e-12)
        assert student_t_two_tailed_p(t, 2) == pytest.approx(0.0742, abs=1e-3)

    def test_against_scipy(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            t = float(rng.uniform(-6, 6))
            df = int(rng.integers(1, 30))
            ours = student_t_two_tailed_p(t, df)
            ref = 2.0 * stats.t.sf(abs(t), df)
            assert ours == pytest.approx(ref, abs=1e-10)

    def test_incomplete_beta_against_scipy(self):
        from scipy.special import betainc

        rng = np.random.default_rng(3)
        for _ in range(100):
            a, b = rng.uniform(0.5, 8, 2)
            x = float(rng.uniform(0, 1))
            assert regularized_incomplete_beta(a, b, x) == pytest.approx(
                float(betainc(a, b, x)), abs=1e-11
            )


class TestPairedTTest:
    def test_identical_lists(self):
        r = paired_t_test([0.5, 0.6, 0.7], [0.5, 0.6, 0.7])
        assert r.mean_difference == 0.0
        assert r.t_stat == 0.0
        assert r.p_value == 1.0

    def test_hand_example(self):
        # diffs [0.02, 0.01, 0.03]: mean 0.02, t = sqrt(12) ~ 3.464, df 2
        r = paired_t_test([0.92, 0.91, 0.93], [0.90, 0.90, 0.90])
        assert r.mean_difference == pytest.approx(0.02, abs=1e-12)
        assert r.t_stat == pytest.approx(3.464, abs=1e-3)
        assert r.df == 2
        assert r.p_value == pytest.approx(0.0742, abs=1e-3)

    def test_against_scipy(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            n = int(rng.integers(2, 12))
            a = rng.normal(0.8, 0.05, n)
            b = a - rng.normal(0.01, 0.02, n)
            ours = paired_t_test(list(a), list(b))
            ref = stats.ttest_rel(a, b)
            assert ours.t_stat == pytest.approx(ref.statistic, abs=1e-9)
            assert ours.p_value == pytest.approx(ref.pvalue, abs=1e-9)

    def test_zero_variance_nonzero_mean_is_degenerate(self):
        r = paired_t_test([0.9, 0.9], [0.8, 0.8])
        assert r.degenerate and r.p_value == 0.0

    def test_too_few_folds(self):
        with pytest.raises(InvalidInputError):
            paired_t_test([1.0], [0.9])
