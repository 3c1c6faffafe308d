"""Subword vocabulary built by greedy pair merging, encoded by longest match."""

from __future__ import annotations

import heapq
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from ..errors import ConfigError

PAD, UNK, CLS, SEP, MASK = 0, 1, 2, 3, 4
SPECIALS = ("[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]")
NUM_SPECIALS = len(SPECIALS)
MAX_WORD_CHARS = 100

_WORD_RE = re.compile(r"\w+|[^\w\s]")


def basic_tokenize(text: str) -> list[str]:
    """Lowercase; words are ``\\w`` runs, every other non-space char stands alone."""
    return _WORD_RE.findall(text.lower())


@dataclass
class SubwordVocab:
    pieces: list[str]
    index: dict[str, int] = field(init=False, repr=False)
    _cache: dict[str, list[int]] = field(init=False, repr=False, default_factory=dict)

    def __post_init__(self):
        if tuple(self.pieces[:NUM_SPECIALS]) != SPECIALS:
            raise ValueError("the first five pieces must be the special tokens")
        self.index = {p: i for i, p in enumerate(self.pieces)}
        if len(self.index) != len(self.pieces):
            raise ValueError("vocabulary pieces must be unique")

    def __len__(self) -> int:
        return len(self.pieces)

    def word_pieces(self, word: str) -> list[int]:
        """Greedy longest-match split of one word; an unmatched char becomes UNK."""
        hit = self._cache.get(word)
        if hit is not None:
            return hit
        if len(word) > MAX_WORD_CHARS:
            out = [UNK]
        else:
            out = []
            start = 0
            while start < len(word):
                end = len(word)
                found = None
                while end > start:
                    piece = word[start:end] if start == 0 else "##" + word[start:end]
                    found = self.index.get(piece)
                    if found is not None:
                        break
                    end -= 1
                if found is None:
                    out.append(UNK)
                    start += 1
                else:
                    out.append(found)
                    start = end
        self._cache[word] = out
        return out

    def tokenize(self, text: str) -> tuple[list[int], list[int]]:
        """Piece ids and the word index each piece belongs to."""
        ids, words = [], []
        for w_i, word in enumerate(basic_tokenize(text)):
            for pid in self.word_pieces(word):
                ids.append(pid)
                words.append(w_i)
        return ids, words

    def to_dict(self) -> dict:
        return {"pieces": list(self.pieces)}

    @classmethod
    def from_dict(cls, d: dict) -> "SubwordVocab":
        return cls(list(d["pieces"]))


def train_subword_vocab(corpus: Sequence[str], target_size: int) -> SubwordVocab:
    """Build a vocabulary by repeatedly merging the most frequent adjacent pair.

    The alphabet holds every character seen, in both word-initial (``c``) and
    continuation (``##c``) form. Frequency ties go to the pair seen first.
    Merging stops at ``target_size`` pieces or when no pair occurs twice.
    """
    if not corpus:
        raise ConfigError("cannot train a vocabulary on an empty corpus")
    counts = Counter()
    for text in corpus:
        counts.update(basic_tokenize(text))
    chars = sorted({c for w in counts for c in w})
    alphabet = chars + ["##" + c for c in chars]
    minimum = len(alphabet) + NUM_SPECIALS
    if target_size < minimum:
        raise ConfigError(f"target_size {target_size} is below the minimum {minimum} "
                          f"(alphabet {len(alphabet)} + {NUM_SPECIALS} specials)")
    pieces = list(SPECIALS) + alphabet
    known = set(pieces)

    words = [[w[0]] + ["##" + c for c in w[1:]] for w in counts]
    freqs = list(counts.values())
    pair_count: dict[tuple[str, str], int] = {}
    pair_rank: dict[tuple[str, str], int] = {}
    where: dict[tuple[str, str], set[int]] = {}

    changed: set[tuple[str, str]] = set()

    def add_pairs(wi: int, sign: int) -> None:
        syms = words[wi]
        for pair in zip(syms, syms[1:]):
            changed.add(pair)
            if pair not in pair_rank:
                pair_rank[pair] = len(pair_rank)
            pair_count[pair] = pair_count.get(pair, 0) + sign * freqs[wi]
            if sign > 0:
                where.setdefault(pair, set()).add(wi)

    for wi in range(len(words)):
        add_pairs(wi, +1)
    heap = [(-c, pair_rank[p], p) for p, c in pair_count.items()]
    heapq.heapify(heap)

    while len(pieces) < target_size and heap:
        neg, _, pair = heapq.heappop(heap)
        if pair_count.get(pair, 0) != -neg:
            continue  # stale entry
        if -neg < 2:
            break
        a, b = pair
        merged = a + b[2:]
        if merged not in known:
            known.add(merged)
            pieces.append(merged)
        touched = sorted(where.pop(pair, ()))
        changed.clear()
        for wi in touched:
            syms = words[wi]
            if not any(x == a and y == b for x, y in zip(syms, syms[1:])):
                continue
            add_pairs(wi, -1)
            new = []
            i = 0
            while i < len(syms):
                if i + 1 < len(syms) and syms[i] == a and syms[i + 1] == b:
                    new.append(merged)
                    i += 2
                else:
                    new.append(syms[i])
                    i += 1
            words[wi] = new
            add_pairs(wi, +1)
        pair_count.pop(pair, None)
        for p in sorted(changed - {pair}, key=pair_rank.__getitem__):
            c = pair_count.get(p, 0)
            if c > 0:
                heapq.heappush(heap, (-c, pair_rank[p], p))
    return SubwordVocab(pieces)


def encode(vocab: SubwordVocab, text: str, max_len: int = 128):
    """``[CLS] pieces [SEP]`` padded to ``max_len``.

    Returns ``(ids, attention_mask, word_alignment)``; the alignment maps each
    position to its word index, or ``None`` for special and padding slots.
    """
    if max_len < 2:
        raise ConfigError("max_len must be at least 2")
    piece_ids, word_idx = vocab.tokenize(text)
    piece_ids = piece_ids[: max_len - 2]
    word_idx = word_idx[: max_len - 2]
    n = len(piece_ids) + 2
    ids = np.full(max_len, PAD, dtype=np.int64)
    ids[0] = CLS
    ids[1:n - 1] = piece_ids
    ids[n - 1] = SEP
    mask = np.zeros(max_len, dtype=bool)
    mask[:n] = True
    alignment: list[int | None] = [None] + list(word_idx) + [None] * (max_len - n + 1)
    return ids, mask, alignment


def encode_batch(vocab: SubwordVocab, texts: Iterable[str], max_len: int = 128):
    rows = [encode(vocab, t, max_len) for t in texts]
    if not rows:
        return np.zeros((0, max_len), dtype=np.int64), np.zeros((0, max_len), dtype=bool)
    return np.stack([r[0] for r in rows]), np.stack([r[1] for r in rows])
