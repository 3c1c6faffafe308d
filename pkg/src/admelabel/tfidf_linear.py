"""TF-IDF features with logistic regression, linear SVM and random forest.

Everything here is dependency-free numpy: a capped-vocabulary TF-IDF
vectorizer, full-batch gradient descent for the two linear models and a
CART random forest with Gini splits.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .annotator import TOPICS, Topic
from .baseline_rules import word_tokens
from .errors import DimensionError, FitError

FORMAT_VERSION = 1
NUM_CLASSES = len(TOPICS)


def tokenize_words(text: str) -> list[str]:
    """Lowercase and split on runs of non-alphanumerics."""
    return word_tokens(text)


# ---------------------------------------------------------------------------
# TF-IDF
# ---------------------------------------------------------------------------


@dataclass
class TfidfModel:
    vocabulary: list[str]
    idf: np.ndarray
    doc_count: int
    index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.idf = np.asarray(self.idf, dtype=np.float64)
        self.index = {t: i for i, t in enumerate(self.vocabulary)}

    def to_dict(self) -> dict:
        return {"vocabulary": self.vocabulary, "idf": self.idf.tolist(), "doc_count": self.doc_count}

    @classmethod
    def from_dict(cls, d: dict) -> "TfidfModel":
        return cls(list(d["vocabulary"]), np.array(d["idf"], dtype=np.float64), int(d["doc_count"]))


def fit_tfidf(corpus: Sequence[Sequence[str]], max_features: int = 128) -> TfidfModel:
    """Keep the ``max_features`` terms with highest document frequency.

    Ties are broken lexicographically. idf(t) = ln((1 + N) / (1 + df(t))) + 1.
    """
    if len(corpus) == 0:
        raise FitError("cannot fit TF-IDF on an empty corpus")
    df = Counter()
    for tokens in corpus:
        df.update(set(tokens))
    ranked = sorted(df.items(), key=lambda kv: (-kv[1], kv[0]))[:max_features]
    n = len(corpus)
    vocab = [t for t, _ in ranked]
    idf = np.array([math.log((1 + n) / (1 + c)) + 1.0 for _, c in ranked], dtype=np.float64)
    return TfidfModel(vocab, idf, n)


def transform(model: TfidfModel, tokens: Sequence[str]) -> np.ndarray:
    """Count-times-idf vector, L2-normalized; all-zero stays all-zero."""
    vec = np.zeros(len(model.vocabulary), dtype=np.float64)
    for tok in tokens:
        j = model.index.get(tok)
        if j is not None:
            vec[j] += 1.0
    vec *= model.idf
    norm = np.linalg.norm(vec)
    if norm > 0:
        vec /= norm
    return vec


def transform_many(model: TfidfModel, token_lists: Sequence[Sequence[str]]) -> np.ndarray:
    if not token_lists:
        return np.zeros((0, len(model.vocabulary)))
    return np.stack([transform(model, t) for t in token_lists])


# ---------------------------------------------------------------------------
# Linear models
# ---------------------------------------------------------------------------


@dataclass
class LinearModel:
    kind: str  # "logistic" or "svm"
    weights: np.ndarray  # [num_classes, feature_len]
    bias: np.ndarray  # [num_classes]
    loss_history: list[float] = field(default_factory=list, repr=False)

    def scores(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        if X.shape[1] != self.weights.shape[1]:
            raise DimensionError(f"expected {self.weights.shape[1]} features, got {X.shape[1]}")
        return X @ self.weights.T + self.bias

    def probabilities(self, X: np.ndarray) -> np.ndarray:
        return _softmax(self.scores(X))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "weights": self.weights.tolist(), "bias": self.bias.tolist()}


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _check_training_data(X, y, num_classes):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or len(X) == 0:
        raise FitError("training features must be a non-empty 2-D array")
    if len(X) != len(y):
        raise DimensionError(f"{len(X)} feature rows but {len(y)} labels")
    missing = sorted(set(range(num_classes)) - set(y.tolist()))
    if missing:
        raise FitError(f"classes {missing} have no training samples")
    return X, y


def logistic_loss_and_grad(W, b, X, y, l2_strength):
    """Mean softmax cross-entropy plus ``l2/2 * ||W||^2`` and its gradient."""
    n = len(X)
    P = _softmax(X @ W.T + b)
    loss = -np.mean(np.log(P[np.arange(n), y])) + 0.5 * l2_strength * np.sum(W * W)
    G = P
    G[np.arange(n), y] -= 1.0
    G /= n
    return loss, G.T @ X + l2_strength * W, G.sum(axis=0)


def train_logistic(X, y, *, l2_strength=1e-3, learning_rate=0.5, epochs=500, seed=0,
                   num_classes=NUM_CLASSES) -> LinearModel:
    """Multinomial logistic regression by full-batch gradient descent.

    Weights start at zero, so ``seed`` has no effect; it is accepted to keep
    the trainer signatures uniform.
    """
    X, y = _check_training_data(X, y, num_classes)
    W = np.zeros((num_classes, X.shape[1]))
    b = np.zeros(num_classes)
    history = []
    for _ in range(epochs):
        loss, gW, gb = logistic_loss_and_grad(W, b, X, y, l2_strength)
        history.append(float(loss))
        W -= learning_rate * gW
        b -= learning_rate * gb
    if epochs:
        history.append(float(logistic_loss_and_grad(W, b, X, y, l2_strength)[0]))
    return LinearModel("logistic", W, b, history)


def svm_loss_and_grad(W, b, X, y, l2_strength):
    """One-vs-rest hinge loss (mean over samples, summed over classes) plus L2."""
    n, C = len(X), W.shape[0]
    Y = -np.ones((n, C))
    Y[np.arange(n), y] = 1.0
    margins = Y * (X @ W.T + b)
    active = margins < 1.0
    loss = np.sum(np.where(active, 1.0 - margins, 0.0)) / n + 0.5 * l2_strength * np.sum(W * W)
    G = np.where(active, -Y, 0.0) / n
    return loss, G.T @ X + l2_strength * W, G.sum(axis=0)


def train_linear_svm(X, y, *, l2_strength=1e-3, learning_rate=0.5, epochs=500, seed=0,
                     num_classes=NUM_CLASSES) -> LinearModel:
    X, y = _check_training_data(X, y, num_classes)
    W = np.zeros((num_classes, X.shape[1]))
    b = np.zeros(num_classes)
    history = []
    for _ in range(epochs):
        loss, gW, gb = svm_loss_and_grad(W, b, X, y, l2_strength)
        history.append(float(loss))
        W -= learning_rate * gW
        b -= learning_rate * gb
    return LinearModel("svm", W, b, history)


# ---------------------------------------------------------------------------
# Random forest
# ---------------------------------------------------------------------------

_MASK64 = (1 << 64) - 1


def splitmix64(state: int) -> int:
    """One output of the splitmix64 generator seeded with ``state``."""
    z = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def tree_seeds(master_seed: int, count: int) -> list[int]:
    """Per-tree seeds: splitmix64 of ``master_seed * 2**32 + tree_index``."""
    return [splitmix64(((master_seed & 0xFFFFFFFF) << 32) + i) for i in range(count)]


@dataclass
class DecisionTree:
    """Array-encoded binary tree; ``feature[i] == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # [nodes, num_classes] class histograms

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        while True:
            f = self.feature[node]
            internal = f >= 0
            if not internal.any():
                return node
            rows = np.nonzero(internal)[0]
            go_left = X[rows, f[rows]] <= self.threshold[node[rows]]
            node[rows] = np.where(go_left, self.left[node[rows]], self.right[node[rows]])

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.value[self.apply(X)], axis=1)

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("feature", "threshold", "left", "right", "value")}

    @classmethod
    def from_dict(cls, d: dict) -> "DecisionTree":
        return cls(np.array(d["feature"], dtype=np.int64), np.array(d["threshold"], dtype=np.float64),
                   np.array(d["left"], dtype=np.int64), np.array(d["right"], dtype=np.int64),
                   np.array(d["value"], dtype=np.float64))


@dataclass
class ForestModel:
    trees: list[DecisionTree]
    num_classes: int
    feature_len: int

    @property
    def tree_count(self) -> int:
        return len(self.trees)

    def votes(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.feature_len:
            raise DimensionError(f"expected {self.feature_len} features, got {X.shape[1]}")
        counts = np.zeros((len(X), self.num_classes))
        for tree in self.trees:
            counts[np.arange(len(X)), tree.predict(X)] += 1
        return counts

    scores = votes

    def to_dict(self) -> dict:
        return {"kind": "forest", "num_classes": self.num_classes, "feature_len": self.feature_len,
                "trees": [t.to_dict() for t in self.trees]}


def _best_split(Xn: np.ndarray, yn: np.ndarray, num_classes: int, min_leaf: int):
    """Best (impurity, threshold) for one feature column, or None."""
    order = np.argsort(Xn, kind="stable")
    xs, ys = Xn[order], yn[order]
    n = len(xs)
    onehot = np.zeros((n, num_classes))
    onehot[np.arange(n), ys] = 1.0
    left = np.cumsum(onehot, axis=0)[:-1]
    total = left[-1] + onehot[-1]
    right = total - left
    nl = np.arange(1, n, dtype=np.float64)
    nr = n - nl
    valid = (xs[1:] > xs[:-1]) & (nl >= min_leaf) & (nr >= min_leaf)
    if not valid.any():
        return None
    gini_l = 1.0 - np.sum(left * left, axis=1) / (nl * nl)
    gini_r = 1.0 - np.sum(right * right, axis=1) / (nr * nr)
    impurity = np.where(valid, nl * gini_l + nr * gini_r, np.inf)
    i = int(np.argmin(impurity))
    return impurity[i], 0.5 * (xs[i] + xs[i + 1])


def _fit_tree(X, y, idx, rng, num_classes, max_depth, min_leaf, k, candidates) -> DecisionTree:
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(rows):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(np.bincount(y[rows], minlength=num_classes).astype(np.float64))
        return len(feature) - 1

    stack = [(new_node(idx), idx, 0)]
    while stack:
        node, rows, depth = stack.pop()
        hist = value[node]
        if np.count_nonzero(hist) <= 1 or len(rows) < 2 * min_leaf:
            continue
        if max_depth is not None and depth >= max_depth:
            continue
        Xr = X[rows]
        live = candidates[np.ptp(Xr[:, candidates], axis=0) > 0] if len(candidates) else candidates
        if len(live) == 0:
            continue
        order = rng.permutation(len(live))
        best = None
        tried = 0
        for j in live[order]:
            found = _best_split(Xr[:, j], y[rows], num_classes, min_leaf)
            tried += 1
            if found is not None and (best is None or found[0] < best[0]):
                best = (found[0], found[1], j)
            if tried >= k and best is not None:
                break
        if best is None:
            continue
        _, thr, j = best
        mask = Xr[:, j] <= thr
        l_rows, r_rows = rows[mask], rows[~mask]
        feature[node], threshold[node] = int(j), float(thr)
        left[node] = new_node(l_rows)
        right[node] = new_node(r_rows)
        stack.append((right[node], r_rows, depth + 1))
        stack.append((left[node], l_rows, depth + 1))
    return DecisionTree(np.array(feature, dtype=np.int64), np.array(threshold), np.array(left, dtype=np.int64),
                        np.array(right, dtype=np.int64), np.array(value))


def train_random_forest(X, y, *, tree_count=100, max_depth=None, min_leaf=1, features_per_split="sqrt",
                        bootstrap=True, seed=0, num_classes=NUM_CLASSES) -> ForestModel:
    """Bagged CART trees with Gini splits over random feature subsets.

    The subset size is taken relative to the number of non-constant training
    columns, and constant columns are never candidates, so appending all-zero
    features leaves the fitted forest unchanged.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or len(X) == 0:
        raise FitError("random forest needs a non-empty 2-D feature array")
    if len(X) != len(y):
        raise DimensionError(f"{len(X)} feature rows but {len(y)} labels")
    if len(np.unique(y)) < 2:
        raise FitError("random forest needs at least two classes")
    candidates = np.nonzero(np.ptp(X, axis=0) > 0)[0]
    m = max(len(candidates), 1)
    if features_per_split == "sqrt":
        k = max(1, int(math.sqrt(m)))
    elif features_per_split in ("all", None):
        k = m
    else:
        k = max(1, int(features_per_split))
    trees = []
    for s in tree_seeds(seed, tree_count):
        rng = np.random.default_rng(s)
        idx = rng.integers(0, len(X), size=len(X)) if bootstrap else np.arange(len(X))
        trees.append(_fit_tree(X, y, idx, rng, num_classes, max_depth, min_leaf, k, candidates))
    return ForestModel(trees, num_classes, X.shape[1])


# ---------------------------------------------------------------------------
# Prediction and persistence
# ---------------------------------------------------------------------------


def predict_indices(model: LinearModel | ForestModel, X: np.ndarray) -> np.ndarray:
    """Argmax class index per row; ``np.argmax`` breaks ties to the lowest index."""
    return np.argmax(model.scores(X), axis=1)


def predict(model: LinearModel | ForestModel, x: np.ndarray) -> Topic:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionError("predict expects a single feature vector")
    return Topic(int(predict_indices(model, x[None, :])[0]))


def model_from_dict(d: dict) -> LinearModel | ForestModel:
    if d["kind"] == "forest":
        return ForestModel([DecisionTree.from_dict(t) for t in d["trees"]], int(d["num_classes"]),
                           int(d["feature_len"]))
    return LinearModel(d["kind"], np.array(d["weights"], dtype=np.float64), np.array(d["bias"], dtype=np.float64))


TRAINERS = {"logreg": train_logistic, "svm": train_linear_svm, "forest": train_random_forest}


class TfidfClassifier:
    """Text-in, topic-out pipeline: tokenizer, TF-IDF, then one model."""

    def __init__(self, kind: str = "logreg", max_features: int = 128, **hyper):
        if kind not in TRAINERS:
            raise ValueError(f"unknown model kind {kind!r}; expected one of {sorted(TRAINERS)}")
        self.kind = kind
        self.max_features = max_features
        self.hyper = hyper
        self.tfidf: TfidfModel | None = None
        self.model: LinearModel | ForestModel | None = None

    def fit(self, texts: Sequence[str], topics: Sequence[Topic]) -> "TfidfClassifier":
        tokens = [tokenize_words(t) for t in texts]
        self.tfidf = fit_tfidf(tokens, self.max_features)
        X = transform_many(self.tfidf, tokens)
        y = np.array([int(t) for t in topics])
        hyper = dict(self.hyper)
        if self.kind != "forest":
            hyper.setdefault("num_classes", NUM_CLASSES)
        self.model = TRAINERS[self.kind](X, y, **hyper)
        return self

    def features(self, texts: Sequence[str]) -> np.ndarray:
        return transform_many(self.tfidf, [tokenize_words(t) for t in texts])

    def predict(self, texts: Sequence[str]) -> list[Topic]:
        if not texts:
            return []
        return [Topic(int(i)) for i in predict_indices(self.model, self.features(texts))]

    def save(self, path: str | Path) -> None:
        payload = {
            "format": "admelabel.tfidf",
            "format_version": FORMAT_VERSION,
            "kind": self.kind,
            "max_features": self.max_features,
            "hyper": self.hyper,
            "tfidf": self.tfidf.to_dict(),
            "model": self.model.to_dict(),
        }
        Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "TfidfClassifier":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        if payload.get("format") != "admelabel.tfidf" or payload.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported model file (format_version {payload.get('format_version')!r})")
        obj = cls(payload["kind"], payload["max_features"], **payload["hyper"])
        obj.tfidf = TfidfModel.from_dict(payload["tfidf"])
        obj.model = model_from_dict(payload["model"])
        return obj
