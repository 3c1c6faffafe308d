"""Which parameter groups move under top-N freezing, and what re-initialization touches.

    python demos/freeze_and_reinit.py
"""

from __future__ import annotations

import numpy as np

from admelabel.encoder import EncoderConfig, FinetuneConfig, finetune, init_params, reinit_top_layers, train_subword_vocab

texts = ["alpha absorbed in the gut", "omega excreted in urine", "beta distributed to tissue",
         "gamma metabolized by the liver", "delta caused headache"] * 4
labels = [0, 3, 1, 2, 4] * 4
vocab = train_subword_vocab(texts, 120)
params = init_params(EncoderConfig(vocab_size=len(vocab), num_layers=4, num_heads=2, hidden_size=16, ffn_size=32,
                                   max_seq_len=16), "truncated_normal", 0)


def moved(a, b):
    return [g for g in a.groups() if any(not np.array_equal(a[n], b[n]) for n in a.names_in(g))]


print("fine-tuning with freeze_top_n = N (None trains everything):")
for n in (None, 0, 1, 2, 4):
    tuned, _ = finetune(params, texts, labels, vocab, FinetuneConfig(batch_size=5, learning_rate=1e-2, epochs=1,
                                                                     freeze_top_n=n))
    print(f"  N={str(n):4s} changed: {', '.join(moved(params, tuned))}")

print("\nreinit_top_layers(params, n):")
for n in range(5):
    print(f"  n={n} changed: {', '.join(moved(params, reinit_top_layers(params, n, 'uniform', seed=1)))}")
