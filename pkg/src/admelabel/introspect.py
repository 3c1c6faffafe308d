"""Attention capture, subword merging and before/after fine-tuning comparisons."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .annotator import TOPICS, LabeledParagraph
from .encoder.model import EncoderParams, forward, trim_batch
from .encoder.tokenizer import SPECIALS, SubwordVocab, basic_tokenize, encode, encode_batch
from .errors import ConfigError, DimensionError

VIEW_FORMAT = "admelabel.attention_view"
VIEW_FORMAT_VERSION = 1


class ZeroAttentionWarning(RuntimeWarning):
    """A cosine similarity was requested for an all-zero matrix."""


@dataclass
class AttentionRecord:
    """Attention maps of one text over its real tokens.

    ``attentions`` has shape ``[L, H, n, n]`` (query rows, key columns).
    ``word_alignment[i]`` is the word index of token ``i``, or ``None`` for
    special tokens.
    """

    text: str
    tokens: list[str]
    word_alignment: list[int | None]
    attentions: np.ndarray
    merged: bool = False
    drift: np.ndarray | None = None

    @property
    def num_layers(self) -> int:
        return self.attentions.shape[0]

    @property
    def num_heads(self) -> int:
        return self.attentions.shape[1]


def capture_attentions(params: EncoderParams, vocab: SubwordVocab, text: str) -> AttentionRecord:
    """Run one deterministic forward pass and keep attention over non-padding tokens."""
    ids, mask, align = encode(vocab, text, params.config.max_seq_len)
    n = int(mask.sum())
    res = forward(params, ids[None, :n], mask[None, :n], capture=True)
    tokens = [vocab.pieces[int(i)] for i in ids[:n]]
    return AttentionRecord(text, tokens, list(align[:n]), res.attentions[0].copy())


def _units(alignment: Sequence[int | None]) -> list[list[int]]:
    """Group token positions: each special token alone, word pieces by word."""
    units: list[list[int]] = []
    current_word = object()
    for pos, w in enumerate(alignment):
        if w is None:
            units.append([pos])
            current_word = object()
        elif w == current_word:
            units[-1].append(pos)
        else:
            units.append([pos])
            current_word = w
    return units


def merge_subword_attention(record: AttentionRecord) -> AttentionRecord:
    """Collapse word pieces into words.

    Keys of the same word are summed (so rows keep their mass); queries of
    the same word are averaged. Special tokens stay as separate units.
    """
    units = _units(record.word_alignment)
    if all(len(u) == 1 for u in units):
        return AttentionRecord(record.text, list(record.tokens), list(record.word_alignment),
                               record.attentions.copy(), True, record.drift)
    n_units = len(units)
    agg = np.zeros((len(record.tokens), n_units))
    avg = np.zeros((n_units, len(record.tokens)))
    for j, u in enumerate(units):
        agg[u, j] = 1.0
        avg[j, u] = 1.0 / len(u)
    merged = np.einsum("uq,lhqk,kv->lhuv", avg, record.attentions, agg)
    words = basic_tokenize(record.text)
    tokens, alignment = [], []
    for u in units:
        w = record.word_alignment[u[0]]
        if w is None:
            tokens.append(record.tokens[u[0]])
        elif w < len(words):
            tokens.append(words[w])
        else:
            tokens.append("".join(record.tokens[p].removeprefix("##") for p in u))
        alignment.append(w)
    return AttentionRecord(record.text, tokens, alignment, merged, True, record.drift)


def flattened_cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity of two matrices viewed as flat vectors.

    An all-zero input gives 0.0 and emits :class:`ZeroAttentionWarning`.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
    fa, fb = a.ravel(), b.ravel()
    na, nb = float(np.sqrt(np.dot(fa, fa))), float(np.sqrt(np.dot(fb, fb)))
    if na == 0.0 or nb == 0.0:
        warnings.warn("cosine of an all-zero attention matrix is defined as 0", ZeroAttentionWarning, stacklevel=2)
        return 0.0
    return float(np.dot(fa, fb) / (na * nb))


@dataclass
class DriftReport:
    """Mean per-layer, per-head cosine between two models' attentions."""

    matrix: np.ndarray
    num_texts: int
    merged: bool = False
    sample: dict = field(default_factory=dict)

    @property
    def argmin(self) -> tuple[int, int]:
        """1-based ``(layer, head)`` of the cell that changed most (first on ties)."""
        flat = int(np.argmin(self.matrix))
        l, h = np.unravel_index(flat, self.matrix.shape)
        return int(l) + 1, int(h) + 1

    def to_dict(self) -> dict:
        layer, head = self.argmin
        return {"matrix": self.matrix.tolist(), "num_texts": self.num_texts, "merged": self.merged,
                "min_cell": {"layer": layer, "head": head, "value": float(self.matrix.min())},
                "sample": self.sample}


def sample_texts_per_class(dataset: Sequence[LabeledParagraph], per_class: int = 1000,
                           seed: int = 0) -> tuple[list[str], list[int]]:
    """Seeded sample of ``min(per_class, available)`` paragraphs from each class.

    Returns texts and their dataset indices (sorted within each class).
    """
    rng = np.random.default_rng(seed)
    labels = np.asarray([int(p.topic) for p in dataset], dtype=np.int64)
    picked: list[int] = []
    for t in TOPICS:
        idx = np.nonzero(labels == int(t))[0]
        if len(idx):
            picked.extend(np.sort(rng.choice(idx, size=min(per_class, len(idx)), replace=False)).tolist())
    return [dataset[i].text for i in picked], picked


def _batched_attention(params: EncoderParams, ids: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return forward(params, ids, mask, capture=True).attentions


def attention_drift(before: EncoderParams, after: EncoderParams, vocab: SubwordVocab, texts: Sequence[str],
                    *, merged: bool = False, batch_size: int = 32, sample: dict | None = None) -> DriftReport:
    """Average flattened cosine between the two models' attention maps, per layer and head.

    Padding is removed before flattening. With ``merged=True`` the maps are
    first collapsed to word level.
    """
    if before.config != after.config:
        raise ConfigError("attention_drift needs two models with the same configuration")
    if len(texts) == 0:
        raise ConfigError("attention_drift needs at least one sample text")
    cfg = before.config
    total = np.zeros((cfg.num_layers, cfg.num_heads))
    if merged:
        for t in texts:
            ra = merge_subword_attention(capture_attentions(before, vocab, t)).attentions
            rb = merge_subword_attention(capture_attentions(after, vocab, t)).attentions
            total += _cell_cosines(ra[None], rb[None], None)[0]
        return DriftReport(total / len(texts), len(texts), True, dict(sample or {}))
    ids_all, mask_all = encode_batch(vocab, texts, cfg.max_seq_len)
    for s in range(0, len(texts), batch_size):
        ids, mask = trim_batch(ids_all[s:s + batch_size], mask_all[s:s + batch_size])
        A = _batched_attention(before, ids, mask)
        B = _batched_attention(after, ids, mask)
        total += _cell_cosines(A, B, mask).sum(axis=0)
    return DriftReport(total / len(texts), len(texts), False, dict(sample or {}))


def _cell_cosines(A: np.ndarray, B: np.ndarray, mask: np.ndarray | None) -> np.ndarray:
    """Per-sample, per-layer, per-head cosine over real query/key pairs: ``[N, L, H]``."""
    if mask is not None:
        m = (mask[:, :, None] & mask[:, None, :]).astype(np.float64)[:, None, None]
        A = A * m
        B = B * m
    dot = np.einsum("nlhqk,nlhqk->nlh", A, B)
    na = np.sqrt(np.einsum("nlhqk,nlhqk->nlh", A, A))
    nb = np.sqrt(np.einsum("nlhqk,nlhqk->nlh", B, B))
    denom = na * nb
    if np.any(denom == 0):
        warnings.warn("cosine of an all-zero attention matrix is defined as 0", ZeroAttentionWarning, stacklevel=3)
    return np.divide(dot, denom, out=np.zeros_like(dot), where=denom > 0)


def export_attention_view(record: AttentionRecord, path: str | Path, drift: DriftReport | np.ndarray | None = None) -> Path:
    """Write a JSON view: tokens, ``[L][H][n][n]`` weights and an optional drift matrix.

    Layers and heads are 1-based in ``layer_labels``/``head_labels`` but the
    arrays themselves are plain nested lists in layer, head, query, key order.
    """
    path = Path(path)
    if isinstance(drift, DriftReport):
        drift = drift.matrix
    drift = drift if drift is not None else record.drift
    payload = {
        "format": VIEW_FORMAT,
        "format_version": VIEW_FORMAT_VERSION,
        "text": record.text,
        "tokens": record.tokens,
        "word_alignment": record.word_alignment,
        "merged": record.merged,
        "num_layers": record.num_layers,
        "num_heads": record.num_heads,
        "axes": ["layer", "head", "query", "key"],
        "attentions": record.attentions.tolist(),
        "drift": None if drift is None else np.asarray(drift).tolist(),
        "special_tokens": list(SPECIALS),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1)
    return path


def read_attention_view(path: str | Path) -> AttentionRecord:
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    if d.get("format") != VIEW_FORMAT:
        raise ConfigError(f"{path}: not an attention view file")
    drift = None if d.get("drift") is None else np.asarray(d["drift"], dtype=np.float64)
    return AttentionRecord(d["text"], list(d["tokens"]), list(d["word_alignment"]),
                           np.asarray(d["attentions"], dtype=np.float64), bool(d["merged"]), drift)
