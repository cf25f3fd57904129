from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hiersparse.metrics import auc, classify_metrics, evaluate, roc_curve, trapezoid_area

from oracles import auc_pairs


@st.composite
def scored(draw, max_n=200):
    n = draw(st.integers(2, max_n))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    levels = draw(st.integers(1, 12))
    scores = rng.integers(0, levels, n) / levels
    labels = rng.integers(0, 2, n)
    labels[0], labels[1] = 0, 1
    return scores, labels


class TestClassify:
    def test_hand_count(self):
        m = classify_metrics([0.9, 0.9, 0.1], [1, 0, 1], 0.5)
        assert m.confusion == (1, 1, 0, 1)
        assert (m.precision, m.recall, m.f1) == (0.5, 0.5, 0.5)

    def test_all_correct(self):
        m = classify_metrics([0.8, 0.2, 0.6], [1, 0, 1])
        assert m.f1 == 1.0

    def test_no_predicted_positive(self):
        m = classify_metrics([0.1, 0.2], [1, 0])
        assert (m.precision, m.recall, m.f1) == (0.0, 0.0, 0.0)

    def test_no_actual_positive_flagged(self):
        m = classify_metrics([0.9, 0.2], [0, 0])
        assert m.recall == 0.0 and m.recall_undefined

    def test_threshold_inclusive(self):
        assert classify_metrics([0.5], [1], 0.5).confusion == (1, 0, 0, 0)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            classify_metrics([0.1, 0.2], [1])

    @settings(max_examples=100, deadline=None)
    @given(scored(), st.floats(0, 1))
    def test_recomputed_from_counts(self, data, thr):
        scores, labels = data
        m = classify_metrics(scores, labels, thr)
        tp, fp, tn, fn = m.confusion
        assert tp + fp + tn + fn == len(labels)
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        f = 2 * p * r / (p + r) if p + r else 0.0
        assert (m.precision, m.recall, m.f1) == (p, r, f)


class TestAuc:
    def test_perfect(self):
        assert auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0

    def test_all_tied(self):
        assert auc([0.3] * 6, [0, 1, 0, 1, 1, 0]) == 0.5

    def test_single_class(self):
        with pytest.raises(ValueError):
            auc([0.1, 0.2], [1, 1])

    def test_pair_oracle_exact(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            n = int(rng.integers(2, 201))
            scores = rng.integers(0, int(rng.integers(1, 15)), n) / 7.0
            labels = rng.integers(0, 2, n)
            labels[:2] = (0, 1)
            expected = auc_pairs(scores, labels)
            assert auc(scores, labels) == float(expected)
            assert Fraction(auc(scores, labels)) == Fraction(float(expected))

    @settings(max_examples=100, deadline=None)
    @given(scored())
    def test_pair_oracle_property(self, data):
        scores, labels = data
        assert auc(scores, labels) == float(auc_pairs(scores, labels))


class TestRoc:
    def test_separated(self):
        assert roc_curve([0.2, 0.8], [0, 1]) == [(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)]

    def test_all_tied(self):
        assert roc_curve([0.4, 0.4, 0.4], [0, 1, 1]) == [(0.0, 0.0), (1.0, 1.0)]

    @settings(max_examples=100, deadline=None)
    @given(scored())
    def test_shape_and_area(self, data):
        scores, labels = data
        pts = roc_curve(scores, labels)
        assert pts[0] == (0.0, 0.0) and pts[-1] == (1.0, 1.0)
        assert len(pts) == len(np.unique(scores)) + 1
        for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
            assert x1 >= x0 and y1 >= y0
        assert abs(trapezoid_area(pts) - auc(scores, labels)) <= 1e-12


def test_evaluate_bundles_auc():
    m = evaluate([0.9, 0.4, 0.6, 0.1], [1, 0, 1, 0])
    assert m.auc == 1.0
    assert m.roc_points[-1] == (1.0, 1.0)
    d = m.to_dict()
    assert d["confusion"] == {"tp": 2, "fp": 0, "tn": 2, "fn": 0}
    single = evaluate([0.9, 0.4], [1, 1])
    assert single.auc is None and single.roc_points == []
