"""Attention maps before and after fine-tuning, and where they changed most.

Uses the checkpoint written by demos/encoder_training.py if present,
otherwise a small freshly initialized encoder:

    python demos/attention_drift.py
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from admelabel.benchmark import split_corpus
from admelabel.encoder import (EncoderConfig, FinetuneConfig, finetune, init_params, load_checkpoint,
                               train_subword_vocab)
from admelabel.introspect import (attention_drift, capture_attentions, export_attention_view,
                                  merge_subword_attention, sample_texts_per_class)
from admelabel.synthetic import generate_corpus

train, val, test = split_corpus(generate_corpus(800, seed=1), 5, seed=1)
if Path("pretrained_demo.npz").exists():
    ckpt = load_checkpoint("pretrained_demo.npz")
    before, vocab = ckpt.params, ckpt.vocab
else:
    vocab = train_subword_vocab([p.text for p in train], 600)
    before = init_params(EncoderConfig(vocab_size=len(vocab), num_layers=4, num_heads=4, hidden_size=32,
                                       max_seq_len=96), "truncated_normal", 0)
after, _ = finetune(before, [p.text for p in train], [int(p.topic) for p in train], vocab,
                    FinetuneConfig(learning_rate=1e-3, epochs=2))

sample, _ = sample_texts_per_class(test, 20, seed=0)
drift = attention_drift(before, after, vocab, sample)
np.set_printoptions(precision=5, suppress=True)
print("mean cosine similarity per layer (rows) and head (columns):")
print(drift.matrix)
layer, head = drift.argmin
print(f"largest change: layer {layer}, head {head}")

record = capture_attentions(after, vocab, sample[0])
words = merge_subword_attention(record)
print(f"\n{len(record.tokens)} pieces merge into {len(words.tokens)} words for: {sample[0][:60]}...")
path = export_attention_view(words, "attention_view.json", drift)
print(f"wrote {path}")
