"""Keyword rule classifier (baseline 1)."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .annotator import ADME, Topic

_TOKEN_RE = re.compile(r"[^0-9a-z]+")


def default_keyword_table() -> dict[Topic, tuple[str, ...]]:
    return {
        Topic.ABSORPTION: ("absorption", "absorb", "food"),
        Topic.DISTRIBUTION: ("distribution", "distribute"),
        Topic.METABOLISM: ("metabolism", "metabolize"),
        Topic.EXCRETION: ("excretion", "elimination", "excrete", "eliminate"),
    }


def validate_keyword_table(table: Mapping[Topic, Sequence[str]]) -> dict[Topic, tuple[str, ...]]:
    """Check the table shape and return a normalized copy.

    Exactly the four ADME topics, lowercase non-empty keyword lists, and no
    keyword shared between topics.
    """
    keys = {Topic(k) for k in table}
    if keys != set(ADME):
        raise ValueError(f"keyword table must cover exactly {[t.label for t in ADME]}")
    owner: dict[str, Topic] = {}
    out = {}
    for topic in ADME:
        words = tuple(table[topic])
        if not words:
            raise ValueError(f"{topic.label} has no keywords")
        for w in words:
            if w != w.lower() or not w:
                raise ValueError(f"keyword {w!r} must be non-empty lowercase")
            if w in owner and owner[w] is not topic:
                raise ValueError(f"keyword {w!r} listed under {owner[w].label} and {topic.label}")
            owner[w] = topic
        out[topic] = words
    return out


def word_tokens(text: str) -> list[str]:
    return [t for t in _TOKEN_RE.split(text.lower()) if t]


def matched_topics(text: str, table: Mapping[Topic, Sequence[str]]) -> list[Topic]:
    """Topics with at least one keyword that prefixes some word token."""
    tokens = set(word_tokens(text))
    hits = []
    for topic in ADME:
        if any(tok.startswith(kw) for kw in table[topic] for tok in tokens):
            hits.append(topic)
    return hits


def rule_classify(text: str, table: Mapping[Topic, Sequence[str]] | None = None, seed: int = 0) -> Topic:
    """Classify by keyword presence; ties between topics are broken at random."""
    hits = matched_topics(text, table or default_keyword_table())
    if not hits:
        return Topic.OTHER
    if len(hits) == 1:
        return hits[0]
    rng = np.random.default_rng(seed)
    return hits[int(rng.integers(len(hits)))]


@dataclass(frozen=True)
class RuleClassifier:
    """Stateless wrapper used by the evaluation harness.

    Each text gets its own tie-break seed derived from ``seed`` and its
    position, so a batch prediction is reproducible.
    """

    table: Mapping[Topic, Sequence[str]] = field(default_factory=lambda: default_keyword_table())
    seed: int = 0

    def predict(self, texts: Sequence[str]) -> list[Topic]:
        return [rule_classify(t, self.table, seed=(self.seed, i)) for i, t in enumerate(texts)]

    def save(self, path: str | Path) -> None:
        payload = {
            "format": "admelabel.rules",
            "format_version": 1,
            "seed": self.seed,
            "keywords": {t.label: list(self.table[t]) for t in ADME},
        }
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "RuleClassifier":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        if payload.get("format_version") != 1:
            raise ValueError(f"unsupported rules format version {payload.get('format_version')!r}")
        table = {Topic.parse(k): tuple(v) for k, v in payload["keywords"].items()}
        return cls(validate_keyword_table(table), int(payload.get("seed", 0)))
