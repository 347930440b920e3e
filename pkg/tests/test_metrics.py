import itertools
import json
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from audiotag.metrics import (
    auc_roc,
    auc_trapezoid,
    average_precision,
    classwise_report,
    d_prime,
    evaluate_scores,
    format_table,
    norm_ppf,
    roc_curve,
)


def brute_ap(ranked_labels):
    """AP of a list of labels already in rank order."""
    hits, total = 0, 0.0
    for r, y in enumerate(ranked_labels, start=1):
        if y:
            hits += 1
            total += hits / r
    return total / hits if hits else float("nan")


def brute_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


def test_ap_and_auc_exhaustive_small_rankings():
    rng = np.random.default_rng(0)
    for n in range(1, 9):
        for labels in itertools.product([0, 1], repeat=n):
            labels = np.array(labels)
            scores = np.arange(n, 0, -1, dtype=float)  # rank order = index order
            perm = rng.permutation(n)  # present items shuffled
            s, y = scores[perm], labels[perm]
            if labels.any():
                assert average_precision(s, y) == pytest.approx(brute_ap(labels), abs=1e-12)
            else:
                assert math.isnan(average_precision(s, y))
            if 0 < labels.sum() < n:
                assert auc_roc(s, y) == pytest.approx(brute_auc(s, y), abs=1e-12)


def test_auc_with_ties_matches_pairwise():
    rng = np.random.default_rng(1)
    for _ in range(200):
        n = int(rng.integers(2, 12))
        s = rng.integers(0, 3, size=n).astype(float)
        y = rng.integers(0, 2, size=n)
        if 0 < y.sum() < n:
            assert auc_roc(s, y) == pytest.approx(brute_auc(s, y), abs=1e-12)
            assert auc_trapezoid(s, y) == pytest.approx(brute_auc(s, y), abs=1e-12)


def test_auc_pairwise_equals_trapezoid_random():
    rng = np.random.default_rng(2)
    for _ in range(100):
        n = int(rng.integers(5, 300))
        s = rng.normal(size=n)
        y = rng.integers(0, 2, size=n)
        y[0], y[1] = 0, 1
        assert abs(auc_roc(s, y) - auc_trapezoid(s, y)) <= 1e-12


def test_ap_ties_keep_input_order():
    assert average_precision([1, 1], [1, 0]) == 1.0
    assert average_precision([1, 1], [0, 1]) == 0.5


def test_roc_curve_endpoints():
    fpr, tpr = roc_curve([0.9, 0.1, 0.5], [1, 0, 1])
    assert (fpr[0], tpr[0], fpr[-1], tpr[-1]) == (0, 0, 1, 1)


@pytest.mark.parametrize("p", [1e-6, 0.01, 0.02425, 0.1, 0.5, 0.7, 0.959, 0.99, 1 - 1e-7])
def test_norm_ppf_against_mpmath(p):
    mpmath.mp.dps = 30
    want = float(mpmath.sqrt(2) * mpmath.erfinv(2 * mpmath.mpf(p) - 1))
    assert norm_ppf(p) == pytest.approx(want, abs=1e-12, rel=1e-12)


def test_d_prime_anchors():
    assert d_prime(0.5) == 0.0
    assert abs(d_prime(0.959) - 2.452) < 0.02
    assert d_prime(1.0) == math.inf and d_prime(0.0) == -math.inf
    assert math.isnan(d_prime(float("nan")))
    with pytest.raises(ValueError):
        norm_ppf(1.5)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.001, 0.999))
def test_d_prime_antisymmetric(a):
    assert d_prime(a) == pytest.approx(-d_prime(1 - a), abs=1e-9)


def test_evaluate_scores_excludes_classes_without_positives():
    scores = np.array([[0.9, 0.2, 0.1], [0.1, 0.8, 0.3], [0.2, 0.3, 0.4]])
    targets = np.array([[1, 0, 0], [0, 1, 0], [0, 0, 0]])
    rep = evaluate_scores(scores, targets)
    assert rep.excluded == [2]
    assert rep.mAP == 1.0 and rep.mAUC == 1.0
    assert rep.d_prime == math.inf
    d = json.loads(rep.to_json())
    assert d["macro"]["d_prime"] is None
    assert d["per_class"][0]["d_prime_saturated"] is True


def test_evaluate_scores_shape_check():
    with pytest.raises(ValueError):
        evaluate_scores(np.zeros((2, 2)), np.zeros((2, 3)))


def test_classwise_report_orders_by_train_count():
    rng = np.random.default_rng(0)
    rep = evaluate_scores(rng.uniform(size=(20, 3)), np.eye(3)[rng.integers(0, 3, 20)])
    rows = classwise_report(rep, np.array([5, 50, 10]), ["a", "b", "c"])
    assert [r["name"] for r in rows] == ["b", "c", "a"]
    table = format_table(rows, rep)
    assert table.splitlines()[1].startswith("b") and "mAP" in table
