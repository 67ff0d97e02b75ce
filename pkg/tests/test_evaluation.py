import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from greenleaf import evaluation as E
from greenleaf import models as M
from greenleaf.data import ArrayDataset, scan_dataset
from greenleaf.fixtures import write_fixture
from greenleaf.train import TrainConfig, fit

from oracles import per_sample_metrics


def report_for(labels, preds, k):
    return E.metrics_from_confusion(E.confusion_matrix(preds, labels, k))


# ---------------------------------------------------------------- confusion matrix


def test_perfect_predictions_diagonal():
    cm = E.confusion_matrix([0, 1, 2, 2], [0, 1, 2, 2], 3)
    assert np.array_equal(cm.counts, np.diag([1, 1, 2]))


def test_hand_counted_matrix():
    cm = E.confusion_matrix([0, 1, 1, 1], [0, 0, 1, 1], 2)
    assert cm.counts.tolist() == [[1, 1], [0, 2]] and cm.total == 4


def test_empty_inputs_give_zero_matrix():
    cm = E.confusion_matrix([], [], 3)
    assert cm.counts.shape == (3, 3) and cm.total == 0
    with pytest.raises(ValueError):
        E.metrics_from_confusion(cm)


def test_confusion_errors():
    with pytest.raises(ValueError):
        E.confusion_matrix([0, 3], [0, 1], 3)
    with pytest.raises(ValueError):
        E.confusion_matrix([0, 1], [0], 3)


# ---------------------------------------------------------------- metrics


def test_diagonal_metrics_all_one():
    r = E.metrics_from_confusion(E.ConfusionMatrix(np.diag([3, 5, 2])))
    assert r.accuracy == r.macro_precision == r.macro_recall == r.macro_f_measure == 1.0
    assert r.precision == r.recall == r.f_measure == [1.0] * 3


def test_binary_hand_example():
    # class 1 is "positive": TP=8, FP=2, FN=1, TN=9
    r = E.metrics_from_confusion(E.ConfusionMatrix(np.array([[9, 2], [1, 8]])))
    assert r.precision[1] == pytest.approx(0.8, abs=1e-12)
    assert r.recall[1] == pytest.approx(8 / 9, abs=1e-12) and round(r.recall[1], 6) == 0.888889
    assert r.f_measure[1] == pytest.approx(16 / 19, abs=1e-12) and round(r.f_measure[1], 6) == 0.842105
    assert r.accuracy == pytest.approx(0.85, abs=1e-12)


@pytest.mark.parametrize("k", [2, 3, 4, 10])
@pytest.mark.parametrize("seed", range(25))
def test_metrics_match_per_sample_oracle(k, seed):
    r = np.random.default_rng(seed * 100 + k)
    n = int(r.integers(1, 200))
    labels, preds = r.integers(0, k, n).tolist(), r.integers(0, k, n).tolist()
    got, ref = report_for(labels, preds, k), per_sample_metrics(labels, preds, k)
    for name in ("accuracy", "macro_precision", "macro_recall", "macro_f_measure"):
        assert abs(getattr(got, name) - ref[name]) <= 1e-12
    for name in ("precision", "recall", "f_measure"):
        np.testing.assert_allclose(getattr(got, name), ref[name], atol=1e-12, rtol=0)


def test_empty_class_is_zero_and_flagged():
    r = report_for([0, 0, 1], [0, 0, 1], 3)
    assert r.precision[2] == r.recall[2] == r.f_measure[2] == 0.0
    assert r.empty_classes == [2]
    assert r.macro_recall == pytest.approx(2 / 3)


matrices = st.integers(2, 6).flatmap(
    lambda k: st.lists(st.integers(0, 30), min_size=k * k, max_size=k * k)
    .filter(lambda v: sum(v) > 0).map(lambda v: np.array(v).reshape(k, k)))


@settings(max_examples=200, deadline=None)
@given(matrices)
def test_micro_precision_recall_equal_accuracy(cm):
    tp = np.diag(cm).sum()
    micro_p = tp / (tp + (cm.sum(0) - np.diag(cm)).sum())
    micro_r = tp / (tp + (cm.sum(1) - np.diag(cm)).sum())
    acc = E.metrics_from_confusion(E.ConfusionMatrix(cm)).accuracy
    assert micro_p == pytest.approx(acc, abs=1e-12) and micro_r == pytest.approx(acc, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(matrices)
def test_metrics_bounded_and_f_between_p_and_r(cm):
    r = E.metrics_from_confusion(E.ConfusionMatrix(cm))
    for p, rec, f in zip(r.precision, r.recall, r.f_measure):
        assert 0 <= p <= 1 and 0 <= rec <= 1 and 0 <= f <= 1
        if p + rec > 0:
            assert min(p, rec) - 1e-12 <= f <= max(p, rec) + 1e-12
    assert all(0 <= v <= 1 for v in (r.accuracy, r.macro_precision, r.macro_recall, r.macro_f_measure))


@settings(max_examples=100, deadline=None)
@given(matrices, st.randoms(use_true_random=False))
def test_relabeling_invariance(cm, rnd):
    k = cm.shape[0]
    perm = list(range(k))
    rnd.shuffle(perm)
    a = E.metrics_from_confusion(E.ConfusionMatrix(cm))
    b = E.metrics_from_confusion(E.ConfusionMatrix(cm[np.ix_(perm, perm)]))
    assert b.accuracy == pytest.approx(a.accuracy, abs=1e-12)
    assert b.macro_f_measure == pytest.approx(a.macro_f_measure, abs=1e-12)
    np.testing.assert_allclose(b.recall, np.array(a.recall)[perm], atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 6).flatmap(lambda k: st.tuples(
    st.just(k), st.integers(1, 20),
    st.lists(st.integers(0, 10 ** 6), min_size=k * k, max_size=k * k))))
def test_balanced_macro_recall_equals_accuracy(args):
    k, per_class, raw = args
    rows = np.array(raw, dtype=float).reshape(k, k) + 1e-9
    # integer rows each summing to per_class
    cm = np.floor(rows / rows.sum(1, keepdims=True) * per_class).astype(int)
    cm[np.arange(k), np.arange(k)] += per_class - cm.sum(1)
    r = E.metrics_from_confusion(E.ConfusionMatrix(cm))
    assert abs(r.macro_recall - r.accuracy) <= 1e-12


def test_tie_break_lowest_index():
    assert E.argmax_lowest(np.array([[1.0, 1.0, 0.0], [0.0, 2.0, 2.0]])).tolist() == [0, 1]


# ---------------------------------------------------------------- evaluate


def _zero_head(f=5, k=4):
    model = M.head_only_model(f, M.HeadConfig(), k)
    for t in model.tensors().values():
        t.data[...] = 0.0
    return model


def test_constant_predictor_on_balanced_data():
    ds = ArrayDataset(np.random.default_rng(0).normal(size=(40, 5)), np.repeat(np.arange(4), 10),
                      list("abcd"))
    r = E.evaluate(_zero_head(), ds)
    assert r.accuracy == 0.25
    assert r.confusion.counts[:, 0].tolist() == [10] * 4


def test_memorized_set_scores_perfectly(tmp_path):
    rng = np.random.default_rng(4)
    ds = ArrayDataset(rng.normal(size=(12, 6)), np.arange(12) % 3, list("abc"))
    model = M.head_only_model(6, M.HeadConfig(dropout_rate=0.0), 3, seed=1)
    fit(model, ds, ds, TrainConfig(learning_rate=1e-2, max_epochs=300, batch_size=12, l2_lambda=0.0,
                                   early_stop=False))
    r = E.evaluate(model, ds, json_path=tmp_path / "report.json")
    assert r.accuracy == 1.0 and r.macro_f_measure == 1.0
    doc = json.loads((tmp_path / "report.json").read_text())
    assert doc["schema_version"] == 1 and doc["samples"] == 12 and doc["accuracy"] == 1.0
    assert doc["class_names"] == ["a", "b", "c"] and doc["confusion_matrix"] == np.diag([4] * 3).tolist()
    assert set(doc["per_class"]["a"]) == {"precision", "recall", "f_measure"}


def test_evaluate_counts_decode_failures(tmp_path):
    write_fixture(tmp_path, per_class=2, size=8)
    (tmp_path / "Healthy" / "bad.png").write_bytes(b"junk")
    idx = scan_dataset(tmp_path)
    model = M.build_model("shufflenet", width_scale=0.25, resolution=16)
    r = E.evaluate(model, idx, resolution=16)
    assert r.failures == 1 and r.confusion.total == len(idx) - 1 == 8
    assert r.to_dict()["decode_failures"] == 1


def test_evaluate_rejects_empty():
    with pytest.raises(ValueError):
        E.evaluate(_zero_head(), ArrayDataset(np.zeros((0, 5)), np.zeros(0, dtype=int), list("abcd")))
