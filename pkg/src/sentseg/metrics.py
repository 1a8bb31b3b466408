"""Task metrics (sentence-boundary F1, punctuation F1 variants) and paired
t-tests over per-fold scores.

Degenerate precision/recall (zero denominator) is defined as 0 so every F1
is total.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

from .errors import InvalidInputError

PUNCT_CLASSES = ("COMMA", "PERIOD", "QUESTION")


@dataclass
class MetricsReport:
    family: str
    tp: int
    fp: int
    fn: int
    per_class: dict[str, dict[str, int]] | None = None

    @property
    def precision(self) -> float:
        denom = self.tp + self.fp
        return self.tp / denom if denom else 0.0

    @property
    def recall(self) -> float:
        denom = self.tp + self.fn
        return self.tp / denom if denom else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2.0 * p * r / (p + r) if p + r > 0.0 else 0.0

    def to_dict(self) -> dict:
        out = {
            "family": self.family,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
        }
        if self.per_class is not None:
            out["per_class"] = {
                cls: dict(counts, f1=_binary_f1(counts))
                for cls, counts in self.per_class.items()
            }
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _binary_f1(counts: dict[str, int]) -> float:
    tp, fp, fn = counts["tp"], counts["fp"], counts["fn"]
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    return 2.0 * p * r / (p + r) if p + r > 0.0 else 0.0


def _check_lengths(pred: Sequence[str], gold: Sequence[str]) -> None:
    if len(pred) != len(gold):
        raise InvalidInputError(
            f"tag sequences differ in length: {len(pred)} vs {len(gold)}"
        )


def f1_sentence_boundary(pred: Sequence[str], gold: Sequence[str]) -> MetricsReport:
    """Binary F1 with sb as the positive class, exact position match."""
    _check_lengths(pred, gold)
    tp = sum(1 for p, g in zip(pred, gold) if p == "sb" and g == "sb")
    fp = sum(1 for p, g in zip(pred, gold) if p == "sb" and g != "sb")
    fn = sum(1 for p, g in zip(pred, gold) if p != "sb" and g == "sb")
    return MetricsReport("sentence_boundary", tp, fp, fn)


def f1_overall_punct(pred: Sequence[str], gold: Sequence[str]) -> MetricsReport:
    """Micro-averaged F1 over the punctuation classes; O is ignored."""
    _check_lengths(pred, gold)
    tp = sum(1 for p, g in zip(pred, gold) if p != "O" and p == g)
    pred_pos = sum(1 for p in pred if p != "O")
    gold_pos = sum(1 for g in gold if g != "O")
    per_class = {}
    for cls in PUNCT_CLASSES:
        ctp = sum(1 for p, g in zip(pred, gold) if p == cls and g == cls)
        cfp = sum(1 for p, g in zip(pred, gold) if p == cls and g != cls)
        cfn = sum(1 for p, g in zip(pred, gold) if p != cls and g == cls)
        per_class[cls] = {"tp": ctp, "fp": cfp, "fn": cfn}
    return MetricsReport("overall_punctuation", tp, pred_pos - tp, gold_pos - tp, per_class)


def f1_two_class(pred: Sequence[str], gold: Sequence[str]) -> MetricsReport:
    """Collapse every non-O tag to a single punctuation class, then binary F1
    on positions."""
    _check_lengths(pred, gold)
    tp = sum(1 for p, g in zip(pred, gold) if p != "O" and g != "O")
    fp = sum(1 for p, g in zip(pred, gold) if p != "O" and g == "O")
    fn = sum(1 for p, g in zip(pred, gold) if p == "O" and g != "O")
    return MetricsReport("two_class_punctuation", tp, fp, fn)


# ---------------------------------------------------------------------------
# paired t-test


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta function (Lentz's method)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 200):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-14:
            break
    return h


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log(1.0 - x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_two_tailed_p(t_stat: float, df: int) -> float:
    """Two-tailed p-value from the Student-t distribution."""
    if df < 1:
        raise InvalidInputError("degrees of freedom must be >= 1")
    x = df / (df + t_stat * t_stat)
    return regularized_incomplete_beta(df / 2.0, 0.5, x)


@dataclass(frozen=True)
class TTestResult:
    mean_difference: float
    t_stat: float
    df: int
    p_value: float
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {
            "mean_difference": self.mean_difference,
            "t_stat": self.t_stat,
            "df": self.df,
            "p_value": self.p_value,
            "degenerate": self.degenerate,
        }


def paired_t_test(scores_a: Sequence[float], scores_b: Sequence[float]) -> TTestResult:
    """Two-tailed paired t-test on per-fold score lists (a minus b)."""
    if len(scores_a) != len(scores_b):
        raise InvalidInputError("paired t-test needs equal-length score lists")
    n = len(scores_a)
    if n < 2:
        raise InvalidInputError("paired t-test needs at least two folds")
    diffs = [a - b for a, b in zip(scores_a, scores_b)]
    mean = sum(diffs) / n
    var = sum((d - mean) ** 2 for d in diffs) / (n - 1)
    df = n - 1
    if var == 0.0:
        if mean == 0.0:
            return TTestResult(0.0, 0.0, df, 1.0)
        # all folds moved identically: infinitely significant under this test
        return TTestResult(mean, math.inf if mean > 0 else -math.inf, df, 0.0, degenerate=True)
    t_stat = mean / math.sqrt(var / n)
    return TTestResult(mean, t_stat, df, student_t_two_tailed_p(t_stat, df))
