"""Binary sleep/wake evaluation: accuracy, precision, recall, F1, Cohen's kappa.

Sleep (label 1) is the positive class throughout. Metrics whose denominator
is zero are reported as None ("undefined"), never NaN, so degenerate ablation
runs stay honest.

Serialized report keys (text block and JSON): tp, fp, fn, tn, accuracy,
precision, recall, f1, kappa. Undefined values render as "undefined" in the
text block and null in JSON.
"""

import json
from dataclasses import asdict, dataclass

import numpy as np


class MetricsInputError(ValueError):
    """Predictions/labels are empty, mismatched, or not in {0, 1}."""


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise MetricsInputError("confusion counts must be nonnegative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    precision: float | None
    recall: float | None
    f1: float | None
    kappa: float

    def to_text(self, cm: ConfusionMatrix | None = None) -> str:
        lines = []
        if cm is not None:
            for key in ("tp", "fp", "fn", "tn"):
                lines.append(f"{key}={getattr(cm, key)}")
        for key, value in asdict(self).items():
            lines.append(f"{key}={'undefined' if value is None else f'{value:.6f}'}")
        return "\n".join(lines)

    def to_json(self, cm: ConfusionMatrix | None = None) -> str:
        payload = {}
        if cm is not None:
            payload.update({k: getattr(cm, k) for k in ("tp", "fp", "fn", "tn")})
        payload.update(asdict(self))
        return json.dumps(payload, indent=2)


def confusion(preds, labels) -> ConfusionMatrix:
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    if preds.size == 0:
        raise MetricsInputError("cannot build a confusion matrix from empty inputs")
    if preds.shape != labels.shape:
        raise MetricsInputError(f"length mismatch: {preds.shape} predictions vs {labels.shape} labels")
    for name, arr in (("predictions", preds), ("labels", labels)):
        if not np.isin(arr, (0, 1)).all():
            raise MetricsInputError(f"{name} must all be 0 (wake) or 1 (sleep)")
    tp = int(np.sum((preds == 1) & (labels == 1)))
    fp = int(np.sum((preds == 1) & (labels == 0)))
    fn = int(np.sum((preds == 0) & (labels == 1)))
    tn = int(np.sum((preds == 0) & (labels == 0)))
    return ConfusionMatrix(tp=tp, fp=fp, fn=fn, tn=tn)


def report(cm: ConfusionMatrix) -> MetricsReport:
    n = cm.total
    if n == 0:
        raise MetricsInputError("confusion matrix is empty")

    accuracy = (cm.tp + cm.tn) / n
    precision = cm.tp / (cm.tp + cm.fp) if (cm.tp + cm.fp) > 0 else None
    recall = cm.tp / (cm.tp + cm.fn) if (cm.tp + cm.fn) > 0 else None
    if precision is None or recall is None or (precision + recall) == 0.0:
        f1 = None
    else:
        f1 = 2.0 * precision * recall / (precision + recall)

    # chance agreement from the marginals; kappa = (p_o - p_e) / (1 - p_e)
    p_o = accuracy
    p_e = ((cm.tp + cm.fp) * (cm.tp + cm.fn) + (cm.fn + cm.tn) * (cm.fp + cm.tn)) / (n * n)
    if abs(1.0 - p_e) < 1e-15:
        # either side constant with full agreement: no skill beyond chance
        kappa = 0.0
    else:
        kappa = (p_o - p_e) / (1.0 - p_e)

    return MetricsReport(accuracy=accuracy, precision=precision, recall=recall, f1=f1, kappa=kappa)
