"""Stratified cross-validation, macro metrics and learning curves."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .annotator import TOPICS, LabeledParagraph, Topic
from .errors import ConfigError, CrossValidationError, DimensionError

logger = logging.getLogger(__name__)

NUM_CLASSES = len(TOPICS)
REPORT_SCHEMA_VERSION = 1

Trainer = Callable[[Sequence[LabeledParagraph], Sequence[LabeledParagraph]], object]


def _label_array(items) -> np.ndarray:
    return np.asarray([int(getattr(x, "topic", x)) for x in items], dtype=np.int64)


def confusion_matrix(predictions, golds) -> np.ndarray:
    """Rows are gold classes, columns predictions, in fixed topic order."""
    pred = _label_array(predictions)
    gold = _label_array(golds)
    if len(pred) != len(gold):
        raise DimensionError(f"{len(pred)} predictions but {len(gold)} gold labels")
    cm = np.zeros((NUM_CLASSES, NUM_CLASSES), dtype=np.int64)
    np.add.at(cm, (gold, pred), 1)
    return cm


def metrics_from_confusion(cm: np.ndarray) -> tuple[float, float, float]:
    """Macro P/R/F1 over the classes that occur in the gold labels (0/0 = 0)."""
    tp = np.diag(cm).astype(np.float64)
    gold_n = cm.sum(axis=1).astype(np.float64)
    pred_n = cm.sum(axis=0).astype(np.float64)
    prec = np.divide(tp, pred_n, out=np.zeros_like(tp), where=pred_n > 0)
    rec = np.divide(tp, gold_n, out=np.zeros_like(tp), where=gold_n > 0)
    denom = prec + rec
    f1 = np.divide(2 * prec * rec, denom, out=np.zeros_like(tp), where=denom > 0)
    present = gold_n > 0
    if not present.any():
        raise ConfigError("no gold labels")
    return float(prec[present].mean()), float(rec[present].mean()), float(f1[present].mean())


def macro_metrics(predictions, golds) -> tuple[float, float, float]:
    if len(predictions) != len(golds):
        raise DimensionError(f"{len(predictions)} predictions but {len(golds)} gold labels")
    if len(golds) == 0:
        raise ConfigError("macro metrics need at least one example")
    return metrics_from_confusion(confusion_matrix(predictions, golds))


# ---------------------------------------------------------------------------
# Fold planning
# ---------------------------------------------------------------------------


@dataclass
class FoldPlan:
    k: int
    assignments: np.ndarray
    seed: int

    def fold(self, i: int) -> np.ndarray:
        return np.nonzero(self.assignments == i)[0]

    def per_class_counts(self, labels) -> np.ndarray:
        y = _label_array(labels)
        counts = np.zeros((self.k, NUM_CLASSES), dtype=np.int64)
        np.add.at(counts, (self.assignments, y), 1)
        return counts


def stratified_kfold(dataset, k: int = 5, seed: int = 0) -> FoldPlan:
    """Shuffle each class with ``seed`` and deal it round-robin over ``k`` folds.

    The dealing position carries over from one class to the next, which keeps
    total fold sizes within one of each other as well.
    """
    y = _label_array(dataset)
    if k < 2:
        raise ConfigError("k must be at least 2")
    rng = np.random.default_rng(seed)
    assignments = np.full(len(y), -1, dtype=np.int64)
    cursor = 0
    for c in range(NUM_CLASSES):
        idx = np.nonzero(y == c)[0]
        if len(idx) == 0:
            continue
        if len(idx) < k:
            raise ConfigError(f"class {Topic(c).label} has {len(idx)} examples, fewer than k={k}")
        idx = idx[rng.permutation(len(idx))]
        assignments[idx] = (cursor + np.arange(len(idx))) % k
        cursor = (cursor + len(idx)) % k
    return FoldPlan(k, assignments, seed)


# ---------------------------------------------------------------------------
# Cross-validation
# ---------------------------------------------------------------------------


@dataclass
class EvalReport:
    runs: list[dict]
    config: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @property
    def aggregate(self) -> dict:
        out = {}
        for key in ("precision", "recall", "f1"):
            vals = np.array([r[key] for r in self.runs], dtype=np.float64)
            # population standard deviation (divisor = number of runs)
            out[key] = {"mean": float(vals.mean()), "std": float(vals.std(ddof=0))}
        return out

    def to_dict(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "std_kind": "population",
            "macro_over": "classes present in gold labels",
            "class_order": [t.label for t in TOPICS],
            "config": self.config,
            "seeds": self.seeds,
            "runs": self.runs,
            "aggregate": self.aggregate,
            **self.extra,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _score(model, items: Sequence[LabeledParagraph]) -> dict:
    preds = model.predict([p.text for p in items])
    cm = confusion_matrix(preds, items)
    p, r, f = metrics_from_confusion(cm)
    return {"precision": p, "recall": r, "f1": f, "confusion_matrix": cm.tolist(), "n_test": len(items)}


def run_cv(trainer: Trainer, dataset: Sequence[LabeledParagraph], plan: FoldPlan, config: Mapping | None = None) -> EvalReport:
    """Rotate test/validation/train folds over ``plan``.

    Run ``r`` tests on fold ``r``, validates on fold ``(r + 1) mod k`` and
    trains on the rest. The trainer sees only train and validation items.
    """
    if len(plan.assignments) != len(dataset):
        raise ConfigError("fold plan does not match the dataset size")
    runs: list[dict] = []
    for r in range(plan.k):
        test_idx, val_idx = plan.fold(r), plan.fold((r + 1) % plan.k)
        train_idx = np.nonzero((plan.assignments != r) & (plan.assignments != (r + 1) % plan.k))[0]
        train = [dataset[i] for i in train_idx]
        val = [dataset[i] for i in val_idx]
        test = [dataset[i] for i in test_idx]
        try:
            model = trainer(train, val)
            row = _score(model, test)
        except Exception as exc:
            raise CrossValidationError(f"trainer failed in run {r}: {exc}", completed=runs) from exc
        row.update({"run": r, "test_fold": r, "val_fold": (r + 1) % plan.k})
        runs.append(row)
        logger.info("run %d f1 %.4f", r, row["f1"])
    return EvalReport(runs, dict(config or {}), {"fold_seed": plan.seed})


def evaluate_unseen(trainer: Trainer, dataset: Sequence[LabeledParagraph], unseen: Sequence[LabeledParagraph],
                    plan: FoldPlan) -> dict:
    """Train on all but the plan's fold 0 (validating on fold 0) and score ``unseen``."""
    val_idx = plan.fold(0)
    train = [dataset[i] for i in np.nonzero(plan.assignments != 0)[0]]
    model = trainer(train, [dataset[i] for i in val_idx])
    return _score(model, unseen)


# ---------------------------------------------------------------------------
# Learning curves
# ---------------------------------------------------------------------------


@dataclass
class LearningCurve:
    rows: list[tuple[int, str, float]]
    holdout: np.ndarray
    train_indices: dict[int, np.ndarray]

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["size", "model", "f1"])
            for size, name, f1 in self.rows:
                w.writerow([size, name, f"{f1:.6f}"])


def learning_curve(trainers: Mapping[str, Trainer], dataset: Sequence[LabeledParagraph], per_class_sizes,
                   holdout_per_class: int = 200, seed: int = 0) -> LearningCurve:
    """Macro-F1 on a fixed per-class holdout as training data per class grows.

    The trainer gets an empty validation list. Sizes larger than a class can
    supply after the holdout are capped (with a warning).
    """
    sizes = sorted(set(int(s) for s in per_class_sizes))
    if not sizes:
        raise ConfigError("per_class_sizes is empty")
    y = _label_array(dataset)
    rng = np.random.default_rng(seed)
    holdout, pools = [], {}
    for c in range(NUM_CLASSES):
        idx = np.nonzero(y == c)[0]
        if len(idx) == 0:
            continue
        idx = idx[rng.permutation(len(idx))]
        h = min(holdout_per_class, len(idx))
        holdout.extend(idx[:h].tolist())
        pools[c] = idx[h:]
    available = min(len(p) for p in pools.values())
    if sizes[-1] > available:
        logger.warning("capping learning-curve sizes at %d per class", available)
    holdout_arr = np.sort(np.asarray(holdout))
    test = [dataset[i] for i in holdout_arr]
    rows, used = [], {}
    for size in sizes:
        s = min(size, available)
        take = np.sort(np.concatenate([p[:s] for p in pools.values()]))
        used[size] = take
        train = [dataset[i] for i in take]
        for name, trainer in trainers.items():
            model = trainer(train, [])
            rows.append((size, name, _score(model, test)["f1"]))
    return LearningCurve(rows, holdout_arr, used)
