"""Pretrain a small encoder with masked-LM, then fine-tune it and compare with a random start.

One seed of the full benchmark, about eight minutes on one core:

    python demos/encoder_training.py
"""

from __future__ import annotations

import time

from admelabel.benchmark import BenchmarkSettings, split_corpus
from admelabel.encoder import EncoderClassifier, finetune, init_params, pretrain_mlm, save_checkpoint, train_subword_vocab
from admelabel.eval_harness import macro_metrics
from admelabel.synthetic import generate_corpus, generate_unlabeled

settings = BenchmarkSettings()
start = time.perf_counter()

unlabeled = generate_unlabeled(settings.unlabeled_size, seed=10_000)
vocab = train_subword_vocab(unlabeled, settings.vocab_size)
ids, _ = vocab.tokenize("metabolism of cadoene")
print(f"vocabulary: {len(vocab)} pieces; 'metabolism of cadoene' -> {[vocab.pieces[i] for i in ids]}")

config = settings.encoder_config(len(vocab))
scratch = init_params(config, "truncated_normal", seed=0)
print(f"encoder: {scratch.num_parameters():,} parameters")
pretrained, losses = pretrain_mlm(scratch, unlabeled, vocab, settings.pretrain)
print("MLM loss per epoch:", " ".join(f"{x:.2f}" for x in losses))
save_checkpoint("pretrained_demo.npz", pretrained, vocab, {"stage": "pretrained"})

train, val, test = split_corpus(generate_corpus(settings.corpus_size, seed=0), 5, seed=0)
ft_cfg = settings.finetune


def score(params):
    preds = EncoderClassifier(params, vocab).predict([p.text for p in test])
    return macro_metrics(preds, [p.topic for p in test])[2]


for name, start_params in [("pretrained", pretrained), ("random init", scratch)]:
    tuned, history = finetune(start_params, [p.text for p in train], [int(p.topic) for p in train], vocab, ft_cfg,
                              val_texts=[p.text for p in val], val_labels=[int(p.topic) for p in val])
    curve = " ".join(f"{row['val_f1']:.2f}" for row in history)
    print(f"{name:12s} test macro-F1 {score(tuned):.3f}   validation F1 by epoch: {curve}")
print(f"pretrained, no fine-tuning: {score(pretrained):.3f}")
print(f"{time.perf_counter() - start:.0f}s")
