"""Evaluation scorers: accuracy and weighted F1.

Accuracy is the fraction of Correct verdicts. Weighted F1 averages per-class
F1 with weights proportional to gold-class support; classes are the union of
gold and predicted labels, and undefined precision/recall/F1 terms are 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Sequence

from .errors import DataError
from .reward import normalize_answer
from .verify import Verdict

Scorer = Callable[[str, str], Verdict]  # (prediction, reference)


class Metric(str, Enum):
    ACCURACY = "accuracy"
    WEIGHTED_F1 = "weighted_f1"


@dataclass(frozen=True, slots=True)
class ClassScores:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True, slots=True)
class EvalReport:
    metric: Metric
    value: float
    n: int
    per_class: dict[str, ClassScores] | None = None

    def to_json_dict(self) -> dict:
        out: dict = {"metric": self.metric.value, "value": self.value, "n": self.n}
        if self.per_class is not None:
            out["per_class"] = {
                label: {
                    "precision": scores.precision,
                    "recall": scores.recall,
                    "f1": scores.f1,
                    "support": scores.support,
                }
                for label, scores in sorted(self.per_class.items())
            }
        return out


def accuracy(verdicts: Sequence[Verdict]) -> EvalReport:
    """Fraction of Correct verdicts."""
    if not verdicts:
        raise DataError("accuracy requires at least one verdict")
    correct = sum(1 for v in verdicts if v is Verdict.CORRECT)
    return EvalReport(metric=Metric.ACCURACY, value=correct / len(verdicts), n=len(verdicts))


def weighted_f1(gold: Sequence[str], predicted: Sequence[str]) -> EvalReport:
    """Support-weighted mean of per-class F1 over gold ∪ predicted classes."""
    if len(gold) != len(predicted):
        raise DataError(f"gold and predicted lengths differ: {len(gold)} vs {len(predicted)}")
    if not gold:
        raise DataError("weighted F1 requires at least one pair")
    classes = sorted(set(gold) | set(predicted))
    n = len(gold)
    per_class: dict[str, ClassScores] = {}
    weighted_sum = 0.0  # divide by n once at the end so perfect predictions score exactly 1.0
    for label in classes:
        tp = sum(1 for g, p in zip(gold, predicted) if g == label and p == label)
        fp = sum(1 for g, p in zip(gold, predicted) if g != label and p == label)
        fn = sum(1 for g, p in zip(gold, predicted) if g == label and p != label)
        support = tp + fn
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_class[label] = ClassScores(precision=precision, recall=recall, f1=f1, support=support)
        weighted_sum += support * f1
    return EvalReport(metric=Metric.WEIGHTED_F1, value=weighted_sum / n, n=n, per_class=per_class)


def evaluate(
    predictions: Sequence[str],
    references: Sequence[str],
    scorer: Scorer,
    metric: Metric = Metric.ACCURACY,
) -> EvalReport:
    """Score prediction/reference pairs and fold them into the chosen metric.

    For weighted F1, both sides are normalized the same way rule matching
    normalizes answers, so "Positive." and "positive" land in one class.
    """
    if len(predictions) != len(references):
        raise DataError(f"predictions and references lengths differ: {len(predictions)} vs {len(references)}")
    metric = Metric(metric)
    if metric is Metric.ACCURACY:
        verdicts = [scorer(pred, ref) for pred, ref in zip(predictions, references)]
        return accuracy(verdicts)
    gold = [normalize_answer(ref) for ref in references]
    pred = [normalize_answer(p) for p in predictions]
    return weighted_f1(gold, pred)
