from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from admelabel.annotator import Topic
from admelabel.errors import DimensionError, FitError
from admelabel.tfidf_linear import (
    TfidfClassifier,
    fit_tfidf,
    logistic_loss_and_grad,
    predict,
    predict_indices,
    splitmix64,
    tokenize_words,
    train_linear_svm,
    train_logistic,
    train_random_forest,
    transform,
    tree_seeds,
)

TOY = [["a", "b"], ["a", "c"], ["a"]]

# 4 separable points, 2 classes
SEP_X = np.array([[1.0, 0.0], [0.9, 0.1], [0.0, 1.0], [0.1, 0.9]])
SEP_Y = np.array([0, 0, 1, 1])


def test_tokenize_words():
    assert tokenize_words("CYP2D6-mediated metabolism.") == ["cyp2d6", "mediated", "metabolism"]
    assert tokenize_words("") == []
    assert tokenize_words("50% bioavailability") == ["50", "bioavailability"]


def test_idf_hand_computation():
    m = fit_tfidf(TOY)
    idf = dict(zip(m.vocabulary, m.idf))
    assert idf["a"] == pytest.approx(1.0, abs=1e-12)
    assert idf["b"] == pytest.approx(math.log(2) + 1, abs=1e-12)
    assert idf["c"] == pytest.approx(1.6931471805599454, abs=1e-12)
    assert m.doc_count == 3


def test_vocabulary_size_and_tie_order():
    assert len(fit_tfidf([["a", "b", "c", "d", "e"]]).vocabulary) == 5
    assert fit_tfidf(TOY, max_features=2).vocabulary == ["a", "b"]


def test_empty_corpus_fails():
    with pytest.raises(FitError):
        fit_tfidf([])


def test_transform_hand_oracle():
    m = fit_tfidf(TOY)
    raw = np.array([2 * 1.0, 1 * (math.log(2) + 1), 0.0])
    np.testing.assert_allclose(transform(m, ["a", "a", "b"]), raw / np.linalg.norm(raw), atol=1e-12)
    assert not transform(m, ["zzz"]).any()
    assert not transform(m, []).any()


@given(st.lists(st.sampled_from(["a", "b", "c", "x", "y"]), max_size=20))
def test_transform_norm_and_sign(tokens):
    m = fit_tfidf(TOY)
    v = transform(m, tokens)
    assert (v >= 0).all()
    if any(t in m.index for t in tokens):
        assert abs(np.linalg.norm(v) - 1) <= 1e-6
    else:
        assert np.linalg.norm(v) == 0


def test_logistic_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    X, y = rng.normal(size=(5, 4)), np.array([0, 1, 2, 1, 0])
    W, b = rng.normal(size=(3, 4)), rng.normal(size=3)
    _, gW, gb = logistic_loss_and_grad(W, b, X, y, 0.1)
    eps = 1e-6
    for arr, g in ((W, gW), (b, gb)):
        num = np.zeros_like(arr)
        for i in np.ndindex(arr.shape):
            old = arr[i]
            arr[i] = old + eps
            lp = logistic_loss_and_grad(W, b, X, y, 0.1)[0]
            arr[i] = old - eps
            lm = logistic_loss_and_grad(W, b, X, y, 0.1)[0]
            arr[i] = old
            num[i] = (lp - lm) / (2 * eps)
        assert np.linalg.norm(num - g) / max(np.linalg.norm(num), np.linalg.norm(g)) < 1e-5


def test_logistic_separable_and_monotone():
    m = train_logistic(SEP_X, SEP_Y, num_classes=2)
    assert (predict_indices(m, SEP_X) == SEP_Y).all()
    assert all(b <= a + 1e-15 for a, b in zip(m.loss_history, m.loss_history[1:]))
    assert m.loss_history[-1] <= m.loss_history[0]


def test_logistic_requires_every_class():
    with pytest.raises(FitError):
        train_logistic(SEP_X, np.zeros(4, dtype=int), num_classes=2)


def test_zero_epochs_gives_uniform_model():
    m = train_logistic(SEP_X, SEP_Y, epochs=0, num_classes=2)
    assert not m.weights.any()
    np.testing.assert_allclose(m.probabilities(SEP_X), 0.5)
    assert predict(m, np.zeros(2)) is Topic.ABSORPTION


def test_svm_margins_on_separable_set():
    m = train_linear_svm(SEP_X, SEP_Y, num_classes=2)
    s = m.scores(SEP_X)
    assert (s[np.arange(4), SEP_Y] >= 0).all()
    assert (predict_indices(m, SEP_X) == SEP_Y).all()


def test_svm_duplicates_keep_training_predictions():
    a = train_linear_svm(SEP_X, SEP_Y, num_classes=2)
    b = train_linear_svm(np.vstack([SEP_X, SEP_X]), np.concatenate([SEP_Y, SEP_Y]), num_classes=2)
    assert (predict_indices(a, SEP_X) == predict_indices(b, SEP_X)).all()


def test_svm_zero_epochs_ties_to_lowest_index():
    m = train_linear_svm(SEP_X, SEP_Y, epochs=0, num_classes=2)
    assert (predict_indices(m, SEP_X) == 0).all()


def test_forest_on_pure_single_feature_split():
    X = np.array([[0.0], [0.1], [0.2], [0.8], [0.9], [1.0]])
    y = np.array([0, 0, 0, 1, 1, 1])
    f = train_random_forest(X, y, tree_count=10, seed=3)
    single = train_random_forest(X, y, tree_count=1, bootstrap=False)
    assert (single.trees[0].predict(X) == y).all()
    assert (predict_indices(f, X) == y).all()


def test_every_bootstrap_tree_fits_pure_split():
    X = np.array([[0.0], [0.1], [0.2], [0.8], [0.9], [1.0]])
    y = np.array([0, 0, 0, 1, 1, 1])
    forest = train_random_forest(X, y, tree_count=20, seed=1)
    for tree, s in zip(forest.trees, tree_seeds(1, 20)):
        # Rebuild each tree's bootstrap resample from its documented seed.
        rows = np.random.default_rng(s).integers(0, len(X), size=len(X))
        assert (tree.predict(X[rows]) == y[rows]).all()


def test_forest_is_deterministic():
    rng = np.random.default_rng(0)
    X, y = rng.random((60, 6)), rng.integers(0, 3, 60)
    a = train_random_forest(X, y, tree_count=15, seed=5, num_classes=3)
    b = train_random_forest(X, y, tree_count=15, seed=5, num_classes=3)
    assert (a.votes(X) == b.votes(X)).all()
    assert a.to_dict() == b.to_dict()


def test_forest_vote_tie_goes_to_lowest_index():
    X = np.array([[0.0], [1.0]])
    y = np.array([1, 0])
    f = train_random_forest(X, y, tree_count=2, bootstrap=False, num_classes=2)
    f.trees[1].value = f.trees[1].value[:, ::-1].copy()  # second tree votes the opposite way
    assert (f.votes(X) == 1).all()
    assert (predict_indices(f, X) == 0).all()


def test_forest_errors():
    with pytest.raises(FitError):
        train_random_forest(np.zeros((0, 2)), np.zeros(0, dtype=int))
    with pytest.raises(FitError):
        train_random_forest(np.zeros((3, 2)), np.zeros(3, dtype=int))


def test_dimension_mismatch():
    m = train_logistic(SEP_X, SEP_Y, num_classes=2)
    with pytest.raises(DimensionError):
        predict(m, np.zeros(3))
    f = train_random_forest(SEP_X, SEP_Y, tree_count=2, num_classes=2)
    with pytest.raises(DimensionError):
        predict(f, np.zeros(3))


@settings(max_examples=15, deadline=None)
@given(hnp.arrays(np.float64, (12, 3), elements=st.floats(0, 1)), st.integers(1, 4))
def test_zero_columns_do_not_change_predictions(X, pad):
    y = np.arange(12) % 3
    Xp = np.hstack([X, np.zeros((12, pad))])
    for train in (train_logistic, train_linear_svm):
        a, b = train(X, y, num_classes=3, epochs=50), train(Xp, y, num_classes=3, epochs=50)
        assert (predict_indices(a, X) == predict_indices(b, Xp)).all()
    a = train_random_forest(X, y, tree_count=5, seed=2, num_classes=3)
    b = train_random_forest(Xp, y, tree_count=5, seed=2, num_classes=3)
    assert (predict_indices(a, X) == predict_indices(b, Xp)).all()


def test_splitmix_reference_value():
    # First output of the reference splitmix64 generator seeded with 0.
    assert splitmix64(0) == 0xE220A8397B1DCDAF


@pytest.mark.parametrize("kind", ["logreg", "svm", "forest"])
def test_classifier_round_trip(tmp_path, kind):
    texts = ["absorbed quickly", "bound to albumin", "metabolized by liver", "excreted in urine", "other stuff"] * 3
    topics = [Topic(i % 5) for i in range(15)]
    hyper = {"tree_count": 5} if kind == "forest" else {}
    clf = TfidfClassifier(kind, **hyper).fit(texts, topics)
    clf.save(tmp_path / "m.json")
    back = TfidfClassifier.load(tmp_path / "m.json")
    assert back.predict(texts) == clf.predict(texts)
    assert clf.predict(texts) == topics
