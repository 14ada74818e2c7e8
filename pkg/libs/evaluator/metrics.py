from __future__ import annotations

from typing import Iterable, Tuple, Union

from libs.core.errors import InputError
from libs.core.models import AiStatus, ConfusionCounts, Verdict

StatusLike = Union[AiStatus, Verdict, str]

_ABNORMAL = "Abnormal"
_NORMAL = "Normal"


def _binary(value: StatusLike, what: str) -> bool:
    text = value.value if isinstance(value, (AiStatus, Verdict)) else str(value)
    if text == _ABNORMAL:
        return True
    if text == _NORMAL:
        return False
    raise InputError(f"{what} must be Normal or Abnormal, got {text!r}")


def confusion(pairs: Iterable[Tuple[StatusLike, StatusLike]]) -> ConfusionCounts:
    """Tally (ai_status, report_label) pairs; the positive class is Abnormal."""
    tp = fp = fn = tn = 0
    for ai_status, report_label in pairs:
        predicted = _binary(ai_status, "ai_status")
        actual = _binary(report_label, "report_label")
        if predicted and actual:
            tp += 1
        elif predicted:
            fp += 1
        elif actual:
            fn += 1
        else:
            tn += 1
    return ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn)


def f1(counts: ConfusionCounts) -> float:
    """tp / (tp + (fp + fn) / 2); 1.0 when there is nothing to get wrong."""
    denominator = counts.tp + (counts.fp + counts.fn) / 2
    if denominator == 0:
        return 1.0
    return counts.tp / denominator


def precision(counts: ConfusionCounts) -> float:
    predicted = counts.tp + counts.fp
    return counts.tp / predicted if predicted else 0.0


def recall(counts: ConfusionCounts) -> float:
    actual = counts.tp + counts.fn
    return counts.tp / actual if actual else 0.0


def prevalence(counts: ConfusionCounts) -> float:
    return (counts.tp + counts.fn) / counts.total if counts.total else 0.0
