import itertools
import json

import numpy as np
import pytest

from trisleep.metrics import ConfusionMatrix, MetricsInputError, confusion, report


def brute_force_report(preds, labels):
    """Independent evaluation straight from the observation pairs."""
    preds = list(preds)
    labels = list(labels)
    n = len(preds)
    p_o = sum(p == y for p, y in zip(preds, labels)) / n
    acc = p_o
    tp = sum(p == 1 and y == 1 for p, y in zip(preds, labels))
    pred_pos = sum(p == 1 for p in preds)
    actual_pos = sum(y == 1 for y in labels)
    prec = tp / pred_pos if pred_pos else None
    rec = tp / actual_pos if actual_pos else None
    f1 = 2 * prec * rec / (prec + rec) if prec is not None and rec is not None and prec + rec > 0 else None
    p_e = (pred_pos / n) * (actual_pos / n) + ((n - pred_pos) / n) * ((n - actual_pos) / n)
    kappa = 0.0 if abs(1 - p_e) < 1e-15 else (p_o - p_e) / (1 - p_e)
    return acc, prec, rec, f1, kappa


def test_confusion_exact_counts():
    cm = confusion([1, 1, 0, 0], [1, 1, 0, 0])
    assert (cm.tp, cm.tn, cm.fp, cm.fn) == (2, 2, 0, 0)


def test_confusion_all_predicted_sleep():
    cm = confusion([1, 1, 1, 1], [1, 1, 0, 0])
    assert cm.fp == 2 and cm.fn == 0


def test_confusion_empty_input_errors():
    with pytest.raises(MetricsInputError):
        confusion([], [])


def test_confusion_validates_values_and_lengths():
    with pytest.raises(MetricsInputError):
        confusion([0, 2], [0, 1])
    with pytest.raises(MetricsInputError):
        confusion([0, 1, 1], [0, 1])


def test_perfect_agreement():
    r = report(ConfusionMatrix(tp=2, fp=0, fn=0, tn=2))
    assert r.accuracy == r.precision == r.recall == r.f1 == 1.0
    assert r.kappa == 1.0


def test_hand_case_kappa_0_8():
    r = report(ConfusionMatrix(tp=45, fp=5, fn=5, tn=45))
    assert abs(r.accuracy - 0.9) < 1e-12
    assert abs(r.precision - 0.9) < 1e-12
    assert abs(r.recall - 0.9) < 1e-12
    assert abs(r.f1 - 0.9) < 1e-12
    assert abs(r.kappa - 0.8) < 1e-12


def test_all_sleep_predictor_has_zero_kappa():
    # 70/30 sleep/wake, everything predicted sleep: agreement is pure chance
    r = report(ConfusionMatrix(tp=70, fp=30, fn=0, tn=0))
    assert abs(r.kappa) < 1e-12
    assert r.recall == 1.0


def test_undefined_metrics_are_none_not_nan():
    # nothing predicted positive -> precision undefined
    r = report(ConfusionMatrix(tp=0, fp=0, fn=3, tn=7))
    assert r.precision is None
    assert r.f1 is None
    assert r.recall == 0.0


def test_swapping_preds_and_labels_preserves_accuracy_and_kappa():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n = int(rng.integers(2, 30))
        preds = rng.integers(0, 2, n)
        labels = rng.integers(0, 2, n)
        a = report(confusion(preds, labels))
        b = report(confusion(labels, preds))
        assert abs(a.accuracy - b.accuracy) < 1e-12
        assert abs(a.kappa - b.kappa) < 1e-12


def test_kappa_zero_for_constant_output():
    rng = np.random.default_rng(1)
    for _ in range(50):
        n = int(rng.integers(1, 20))
        labels = rng.integers(0, 2, n)
        for const in (0, 1):
            r = report(confusion(np.full(n, const), labels))
            assert abs(r.kappa) < 1e-12


def test_report_matches_brute_force_exhaustively():
    # every label/pred pattern up to length 6
    for n in range(1, 7):
        for preds in itertools.product((0, 1), repeat=n):
            for labels in itertools.product((0, 1), repeat=n):
                r = report(confusion(preds, labels))
                acc, prec, rec, f1, kappa = brute_force_report(preds, labels)
                assert abs(r.accuracy - acc) < 1e-12
                assert abs(r.kappa - kappa) < 1e-12
                for got, want in ((r.precision, prec), (r.recall, rec), (r.f1, f1)):
                    if want is None:
                        assert got is None
                    else:
                        assert abs(got - want) < 1e-12


def test_serialization_round_trip_keys():
    cm = ConfusionMatrix(tp=0, fp=0, fn=2, tn=3)
    r = report(cm)
    text = r.to_text(cm)
    assert "precision=undefined" in text
    assert text.splitlines()[0] == "tp=0"
    payload = json.loads(r.to_json(cm))
    assert payload["precision"] is None
    assert set(payload) == {"tp", "fp", "fn", "tn", "accuracy", "precision", "recall", "f1", "kappa"}
