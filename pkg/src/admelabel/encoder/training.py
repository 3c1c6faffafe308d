"""Masked-LM pretraining, classification fine-tuning and layer surgery."""

from __future__ import annotations

import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from ..errors import ConfigError, FitError
from .model import (
    EncoderParams,
    cross_entropy,
    backward,
    forward,
    init_group,
    layer_group,
    softmax,
    trim_batch,
    _kind,
)
from .tokenizer import MASK, NUM_SPECIALS, SubwordVocab, encode_batch

logger = logging.getLogger(__name__)

DEFAULT_BATCH_SIZES = (10, 16, 32, 64)
DEFAULT_LEARNING_RATES = (5e-6, 1e-5, 3e-5, 5e-5)


class MetricsLog:
    """Line-delimited ``{step, loss, lr, split}`` records, in memory and optionally on disk."""

    def __init__(self, path=None):
        self.records: list[dict] = []
        self._fh = open(path, "a", encoding="utf-8") if path else None

    def write(self, **record) -> None:
        self.records.append(record)
        if self._fh:
            self._fh.write(json.dumps(record, sort_keys=True) + "\n")

    def close(self) -> None:
        if self._fh:
            self._fh.close()
            self._fh = None


@dataclass
class AdamW:
    """Adam with decoupled weight decay and linear warmup then linear decay."""

    learning_rate: float
    total_steps: int
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.01
    warmup_fraction: float = 0.1
    clip_norm: float | None = 1.0
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def lr_at(self, step: int) -> float:
        warm = max(1, int(math.ceil(self.warmup_fraction * self.total_steps)))
        if step <= warm:
            return self.learning_rate * step / warm
        remaining = max(self.total_steps - warm, 1)
        return self.learning_rate * max(0.0, (self.total_steps - step) / remaining)

    def step(self, params: EncoderParams, grads: Mapping[str, np.ndarray]) -> float:
        """Apply one update; tensors in frozen groups are never touched."""
        from .model import group_of

        live = {n: g for n, g in grads.items() if not params.freeze.get(group_of(n), False)}
        if self.clip_norm is not None and live:
            norm = math.sqrt(sum(float(np.sum(g * g)) for g in live.values()))
            if norm > self.clip_norm:
                live = {n: g * (self.clip_norm / norm) for n, g in live.items()}
        self.step_count += 1
        lr = self.lr_at(self.step_count)
        b1, b2 = self.betas
        c1 = 1.0 - b1 ** self.step_count
        c2 = 1.0 - b2 ** self.step_count
        for name, g in live.items():
            p = params.tensors[name]
            m = self.m.get(name)
            if m is None:
                m = self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            v = self.v[name]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            update = (m / c1) / (np.sqrt(v / c2) + self.eps)
            if self.weight_decay and _kind(name) == "weight":
                update = update + self.weight_decay * p
            p -= lr * update
        return lr


# ---------------------------------------------------------------------------
# Masked-LM pretraining
# ---------------------------------------------------------------------------


@dataclass
class PretrainConfig:
    mask_fraction: float = 0.15
    epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 1e-3
    weight_decay: float = 0.01
    seed: int = 0


def mask_tokens(ids: np.ndarray, mask: np.ndarray, vocab_size: int, fraction: float, rng: np.random.Generator):
    """Choose masked-LM targets.

    Per sequence ``max(1, round(fraction * n))`` of the ``n`` non-special
    positions are selected; of those 80% become ``[MASK]``, 10% a random
    piece and 10% stay. Returns ``(corrupted_ids, (batch_idx, pos_idx), targets)``.
    """
    corrupted = ids.copy()
    bis, tis = [], []
    for b in range(len(ids)):
        cand = np.nonzero(mask[b] & (ids[b] >= NUM_SPECIALS))[0]
        if len(cand) == 0:
            continue
        k = max(1, int(round(fraction * len(cand))))
        chosen = np.sort(rng.choice(cand, size=min(k, len(cand)), replace=False))
        bis.append(np.full(len(chosen), b))
        tis.append(chosen)
    if not bis:
        return corrupted, (np.zeros(0, int), np.zeros(0, int)), np.zeros(0, int)
    bi, ti = np.concatenate(bis), np.concatenate(tis)
    targets = ids[bi, ti].copy()
    roll = rng.random(len(bi))
    random_ids = rng.integers(NUM_SPECIALS, vocab_size, size=len(bi))
    corrupted[bi[roll < 0.8], ti[roll < 0.8]] = MASK
    swap = (roll >= 0.8) & (roll < 0.9)
    corrupted[bi[swap], ti[swap]] = random_ids[swap]
    return corrupted, (bi, ti), targets


def length_bucketed_batches(lengths: np.ndarray, batch_size: int, rng: np.random.Generator,
                            bucket_batches: int = 50) -> list[np.ndarray]:
    """Shuffled batches of indices whose members have similar lengths.

    Indices are shuffled, cut into chunks of ``bucket_batches`` batches,
    sorted by length within each chunk and split into batches; the batch
    order is shuffled again. Every index appears exactly once.
    """
    order = rng.permutation(len(lengths))
    chunk = batch_size * bucket_batches
    batches = []
    for s in range(0, len(order), chunk):
        part = order[s:s + chunk]
        part = part[np.argsort(lengths[part], kind="stable")]
        batches.extend(part[i:i + batch_size] for i in range(0, len(part), batch_size))
    return [batches[i] for i in rng.permutation(len(batches))]


def pretrain_mlm(params: EncoderParams, corpus: Sequence[str], vocab: SubwordVocab,
                 config: PretrainConfig | None = None, log: MetricsLog | None = None):
    """Masked-LM training on raw texts. Returns ``(params, per_epoch_mean_loss)``.

    ``params`` is copied, never mutated.
    """
    config = config or PretrainConfig()
    if not corpus:
        raise FitError("cannot pretrain on an empty corpus")
    if not 0.0 < config.mask_fraction <= 1.0:
        raise ConfigError("mask_fraction must lie in (0, 1]; with no masked targets the loss is undefined")
    params = params.copy()
    cfg = params.config
    ids_all, mask_all = encode_batch(vocab, corpus, cfg.max_seq_len)
    lengths = mask_all.sum(axis=1)
    rng = np.random.default_rng(config.seed)
    n = len(corpus)
    steps_per_epoch = math.ceil(n / config.batch_size)
    opt = AdamW(config.learning_rate, steps_per_epoch * config.epochs, weight_decay=config.weight_decay)
    history = []
    for epoch in range(config.epochs):
        losses = []
        for sel in length_bucketed_batches(lengths, config.batch_size, rng):
            ids, mask = trim_batch(ids_all[sel], mask_all[sel])
            corrupted, positions, targets = mask_tokens(ids, mask, cfg.vocab_size, config.mask_fraction, rng)
            if len(targets) == 0:
                continue
            res = forward(params, corrupted, mask, train=True, rng=rng, mlm_positions=positions, keep_cache=True)
            loss, d_logits = cross_entropy(res.mlm_logits, targets)
            grads = backward(params, res, d_mlm_logits=d_logits)
            lr = opt.step(params, grads)
            losses.append(loss)
            if log is not None:
                log.write(step=opt.step_count, loss=loss, lr=lr, split="pretrain")
        history.append(float(np.mean(losses)) if losses else float("nan"))
        logger.info("mlm epoch %d loss %.4f", epoch + 1, history[-1])
    return params, history


def mlm_loss(params: EncoderParams, corpus: Sequence[str], vocab: SubwordVocab, fraction=0.15, seed=0) -> float:
    """Masked-LM loss of ``params`` on ``corpus`` with a fixed masking draw."""
    cfg = params.config
    ids, mask = encode_batch(vocab, corpus, cfg.max_seq_len)
    rng = np.random.default_rng(seed)
    total, count = 0.0, 0
    for s in range(0, len(ids), 64):
        bi_ids, bi_mask = trim_batch(ids[s:s + 64], mask[s:s + 64])
        corrupted, pos, targets = mask_tokens(bi_ids, bi_mask, cfg.vocab_size, fraction, rng)
        if len(targets) == 0:
            continue
        res = forward(params, corrupted, bi_mask, mlm_positions=pos)
        total += cross_entropy(res.mlm_logits, targets)[0] * len(targets)
        count += len(targets)
    return total / max(count, 1)


# ---------------------------------------------------------------------------
# Fine-tuning
# ---------------------------------------------------------------------------


@dataclass
class FinetuneConfig:
    batch_size: int = 32
    learning_rate: float = 5e-5
    epochs: int = 10
    freeze_top_n: int | None = None
    weight_decay: float = 0.01
    seed: int = 0


def apply_freeze(params: EncoderParams, freeze_top_n: int | None) -> None:
    """Set freeze flags for fine-tuning.

    ``None`` trains everything. ``n`` trains the top ``n`` layers plus the
    classifier; embeddings and layers ``1..L-n`` are frozen, so ``n = 0``
    trains the classifier head only.
    """
    L = params.config.num_layers
    for g in params.groups():
        params.freeze[g] = False
    if freeze_top_n is None:
        return
    if not 0 <= freeze_top_n <= L:
        raise ConfigError(f"freeze_top_n must lie in [0, {L}], got {freeze_top_n}")
    params.freeze["embeddings"] = True
    for i in range(1, L - freeze_top_n + 1):
        params.freeze[layer_group(i)] = True


def predict_logits(params: EncoderParams, ids: np.ndarray, mask: np.ndarray, batch_size: int = 64) -> np.ndarray:
    out = np.empty((len(ids), params.config.num_classes))
    for s in range(0, len(ids), batch_size):
        b_ids, b_mask = trim_batch(ids[s:s + batch_size], mask[s:s + batch_size])
        out[s:s + batch_size] = forward(params, b_ids, b_mask).cls_logits
    return out


def _macro_f1(pred: np.ndarray, gold: np.ndarray) -> float:
    from ..eval_harness import macro_metrics

    return macro_metrics(pred.tolist(), gold.tolist())[2]


def finetune(params: EncoderParams, texts: Sequence[str], labels: Sequence[int], vocab: SubwordVocab,
             config: FinetuneConfig | None = None, *, val_texts: Sequence[str] | None = None,
             val_labels: Sequence[int] | None = None, log: MetricsLog | None = None):
    """Cross-entropy fine-tuning of the classifier (and unfrozen layers).

    With a validation set, the parameters from the epoch with the best
    validation macro-F1 are returned (earliest epoch on ties). Returns
    ``(params, history)``; the input ``params`` is not mutated.
    """
    config = config or FinetuneConfig()
    if len(texts) == 0:
        raise FitError("cannot fine-tune on an empty dataset")
    if len(texts) != len(labels):
        raise FitError(f"{len(texts)} texts but {len(labels)} labels")
    params = params.copy()
    apply_freeze(params, config.freeze_top_n)
    cfg = params.config
    y = np.asarray([int(l) for l in labels], dtype=np.int64)
    ids_all, mask_all = encode_batch(vocab, texts, cfg.max_seq_len)
    has_val = val_texts is not None and len(val_texts) > 0
    if has_val:
        v_ids, v_mask = encode_batch(vocab, val_texts, cfg.max_seq_len)
        v_y = np.asarray([int(l) for l in val_labels], dtype=np.int64)
    rng = np.random.default_rng(config.seed)
    n = len(texts)
    steps = math.ceil(n / config.batch_size) * config.epochs
    opt = AdamW(config.learning_rate, max(steps, 1), weight_decay=config.weight_decay)
    history = []
    best, best_f1 = params.copy(), -1.0
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        losses = []
        for s in range(0, n, config.batch_size):
            sel = order[s:s + config.batch_size]
            ids, mask = trim_batch(ids_all[sel], mask_all[sel])
            res = forward(params, ids, mask, train=True, rng=rng, keep_cache=True)
            loss, d_logits = cross_entropy(res.cls_logits, y[sel])
            grads = backward(params, res, d_cls_logits=d_logits)
            lr = opt.step(params, grads)
            losses.append(loss)
            if log is not None:
                log.write(step=opt.step_count, loss=loss, lr=lr, split="train")
        row = {"epoch": epoch + 1, "train_loss": float(np.mean(losses))}
        if has_val:
            pred = np.argmax(predict_logits(params, v_ids, v_mask), axis=1)
            row["val_f1"] = _macro_f1(pred, v_y)
            if log is not None:
                log.write(step=opt.step_count, loss=row["val_f1"], lr=0.0, split="val_f1")
            if row["val_f1"] > best_f1:
                best, best_f1 = params.copy(), row["val_f1"]
        history.append(row)
        logger.info("finetune epoch %d %s", epoch + 1, row)
    return (best if has_val else params), history


def reinit_top_layers(params: EncoderParams, n: int, scheme: str = "truncated_normal", seed: int = 0) -> EncoderParams:
    """Copy of ``params`` with the top ``n`` layers and the classifier re-sampled."""
    L = params.config.num_layers
    if not 0 <= n <= L:
        raise ConfigError(f"n must lie in [0, {L}], got {n}")
    out = params.copy()
    for i in range(L - n + 1, L + 1):
        init_group(out, layer_group(i), scheme, seed)
    init_group(out, "classifier", scheme, seed)
    return out


# ---------------------------------------------------------------------------
# Inference wrapper and grid search
# ---------------------------------------------------------------------------


@dataclass
class EncoderClassifier:
    params: EncoderParams
    vocab: SubwordVocab

    def probabilities(self, texts: Sequence[str]) -> np.ndarray:
        ids, mask = encode_batch(self.vocab, texts, self.params.config.max_seq_len)
        return softmax(predict_logits(self.params, ids, mask))

    def predict(self, texts: Sequence[str]):
        from ..annotator import Topic

        if not texts:
            return []
        ids, mask = encode_batch(self.vocab, texts, self.params.config.max_seq_len)
        return [Topic(int(i)) for i in np.argmax(predict_logits(self.params, ids, mask), axis=1)]


@dataclass
class GridResult:
    best: tuple[int, float]
    scores: dict[tuple[int, float], float]

    def to_dict(self) -> dict:
        return {"best": {"batch_size": self.best[0], "learning_rate": self.best[1]},
                "cells": [{"batch_size": b, "learning_rate": lr, "val_f1": f}
                          for (b, lr), f in sorted(self.scores.items())]}


def grid_search(train_texts, train_labels, val_texts, val_labels,
                trainer: Callable[[Sequence[str], Sequence[int], int, float], object],
                batch_sizes: Iterable[int] = DEFAULT_BATCH_SIZES,
                learning_rates: Iterable[float] = DEFAULT_LEARNING_RATES) -> GridResult:
    """Exhaustive search scored by validation macro-F1.

    ``trainer(texts, labels, batch_size, learning_rate)`` returns any object
    with ``predict(texts)``. Ties prefer the larger batch, then the smaller
    learning rate.
    """
    gold = np.asarray([int(l) for l in val_labels])
    scores = {}
    for bs, lr in itertools.product(batch_sizes, learning_rates):
        model = trainer(train_texts, train_labels, bs, lr)
        pred = np.asarray([int(p) for p in model.predict(val_texts)])
        scores[(bs, lr)] = _macro_f1(pred, gold)
    if not scores:
        raise ConfigError("empty hyper-parameter grid")
    best = max(scores, key=lambda c: (scores[c], c[0], -c[1]))
    return GridResult(best, scores)
