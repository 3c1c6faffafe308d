"""End-to-end benchmark on the synthetic corpus.

One encoder is pretrained with masked-LM on unlabeled synthetic text; then,
for each seed, a labeled corpus is generated and split (test fold 0,
validation fold 1, train on the rest) and every model is scored on the test
fold:

``rule``                       keyword baseline
``logreg``                     TF-IDF logistic regression
``pretrained_no_finetune``     pretrained encoder with its untrained classifier
``pretrained_finetuned``       pretrained encoder fine-tuned on the train split
``truncated_normal_finetuned`` freshly initialized encoder, same fine-tuning
``uniform_finetuned``          same with uniform initialization

The attention drift between the pretrained and the fine-tuned encoder is
recorded per seed. Sharing the pretrained checkpoint across seeds mirrors
starting every run from one published checkpoint.
"""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .annotator import LabeledParagraph
from .baseline_rules import RuleClassifier
from .encoder.model import EncoderConfig, EncoderParams, init_params
from .encoder.tokenizer import SubwordVocab, train_subword_vocab
from .encoder.training import EncoderClassifier, FinetuneConfig, PretrainConfig, finetune, pretrain_mlm
from .eval_harness import macro_metrics, stratified_kfold
from .introspect import attention_drift, sample_texts_per_class
from .synthetic import SyntheticConfig, generate_corpus, generate_unlabeled
from .tfidf_linear import TfidfClassifier

logger = logging.getLogger(__name__)

MODEL_NAMES = ("rule", "logreg", "pretrained_no_finetune", "pretrained_finetuned", "truncated_normal_finetuned",
               "uniform_finetuned")


@dataclass
class BenchmarkSettings:
    corpus_size: int = 2500
    unlabeled_size: int = 30000
    vocab_size: int = 3500
    num_layers: int = 4
    num_heads: int = 4
    hidden_size: int = 32
    ffn_size: int = 128
    max_seq_len: int = 96
    pretrain: PretrainConfig = field(default_factory=lambda: PretrainConfig(epochs=5, learning_rate=1e-3))
    finetune: FinetuneConfig = field(default_factory=lambda: FinetuneConfig(batch_size=32, learning_rate=1e-3,
                                                                            epochs=10))
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)
    pretrain_seed: int = 0
    drift_per_class: int = 20
    folds: int = 5

    def encoder_config(self, vocab_size: int) -> EncoderConfig:
        return EncoderConfig(vocab_size=vocab_size, num_layers=self.num_layers, num_heads=self.num_heads,
                             hidden_size=self.hidden_size, ffn_size=self.ffn_size, max_seq_len=self.max_seq_len)


@dataclass
class PretrainedEncoder:
    params: EncoderParams
    vocab: SubwordVocab
    loss_history: list[float]
    seconds: float


@dataclass
class SeedResult:
    seed: int
    scores: dict[str, float]
    drift_matrix: list[list[float]]
    drift_min_cell: tuple[int, int]
    seconds: float


@dataclass
class BenchmarkResult:
    settings: dict
    pretrain_loss: list[float]
    pretrain_seconds: float
    seeds: list[SeedResult]

    def mean(self, name: str) -> float:
        return float(np.mean([r.scores[name] for r in self.seeds]))

    def means(self) -> dict[str, float]:
        return {name: self.mean(name) for name in MODEL_NAMES}

    def summary(self) -> str:
        lines = [f"{'model':28s} " + " ".join(f"seed {r.seed:<3d}" for r in self.seeds) + "   mean"]
        for name in MODEL_NAMES:
            row = " ".join(f"{r.scores[name]:8.4f}" for r in self.seeds)
            lines.append(f"{name:28s} {row}   {self.mean(name):.4f}")
        cells = ", ".join(f"seed {r.seed}: layer {r.drift_min_cell[0]} head {r.drift_min_cell[1]}" for r in self.seeds)
        lines.append(f"largest attention change: {cells}")
        return "\n".join(lines)


def pretrain_reference_encoder(settings: BenchmarkSettings | None = None) -> PretrainedEncoder:
    """Vocabulary plus masked-LM pretraining on unlabeled synthetic text."""
    settings = settings or BenchmarkSettings()
    start = time.perf_counter()
    texts = generate_unlabeled(settings.unlabeled_size, seed=10_000 + settings.pretrain_seed,
                               cfg=settings.synthetic)
    vocab = train_subword_vocab(texts, settings.vocab_size)
    params = init_params(settings.encoder_config(len(vocab)), "truncated_normal", settings.pretrain_seed)
    pcfg = PretrainConfig(**{**asdict(settings.pretrain), "seed": settings.pretrain_seed})
    params, history = pretrain_mlm(params, texts, vocab, pcfg)
    return PretrainedEncoder(params, vocab, history, time.perf_counter() - start)


def split_corpus(corpus: Sequence[LabeledParagraph], folds: int, seed: int):
    """``(train, validation, test)``: test is fold 0, validation fold 1."""
    plan = stratified_kfold(corpus, folds, seed)
    pick = lambda idx: [corpus[i] for i in idx]
    return pick(np.nonzero(plan.assignments > 1)[0]), pick(plan.fold(1)), pick(plan.fold(0))


def _f1(model, test: Sequence[LabeledParagraph]) -> float:
    return float(macro_metrics(model.predict([p.text for p in test]), [p.topic for p in test])[2])


def run_seed(seed: int, pretrained: PretrainedEncoder, settings: BenchmarkSettings | None = None) -> SeedResult:
    settings = settings or BenchmarkSettings()
    start = time.perf_counter()
    corpus = generate_corpus(settings.corpus_size, seed=seed, cfg=settings.synthetic)
    train, val, test = split_corpus(corpus, settings.folds, seed)
    texts, labels = [p.text for p in train], [int(p.topic) for p in train]
    val_texts, val_labels = [p.text for p in val], [int(p.topic) for p in val]
    vocab = pretrained.vocab
    fcfg = FinetuneConfig(**{**asdict(settings.finetune), "seed": seed})

    def tuned(start_params: EncoderParams) -> EncoderParams:
        params, _ = finetune(start_params, texts, labels, vocab, fcfg, val_texts=val_texts, val_labels=val_labels)
        return params

    scores = {
        "rule": _f1(RuleClassifier(seed=seed), test),
        "logreg": _f1(TfidfClassifier("logreg").fit(texts, [p.topic for p in train]), test),
        "pretrained_no_finetune": _f1(EncoderClassifier(pretrained.params, vocab), test),
    }
    pre_ft = tuned(pretrained.params)
    scores["pretrained_finetuned"] = _f1(EncoderClassifier(pre_ft, vocab), test)
    ecfg = pretrained.params.config
    for scheme in ("truncated_normal", "uniform"):
        scores[f"{scheme}_finetuned"] = _f1(EncoderClassifier(tuned(init_params(ecfg, scheme, seed)), vocab), test)
    sample, _ = sample_texts_per_class(test, settings.drift_per_class, seed)
    drift = attention_drift(pretrained.params, pre_ft, vocab, sample)
    logger.info("seed %d: %s", seed, scores)
    return SeedResult(seed, scores, drift.matrix.tolist(), drift.argmin, time.perf_counter() - start)


def run_benchmark(seeds: Sequence[int] = (0, 1, 2), settings: BenchmarkSettings | None = None,
                  pretrained: PretrainedEncoder | None = None) -> BenchmarkResult:
    settings = settings or BenchmarkSettings()
    pretrained = pretrained or pretrain_reference_encoder(settings)
    results = [run_seed(s, pretrained, settings) for s in seeds]
    return BenchmarkResult(asdict(settings), pretrained.loss_history, pretrained.seconds, results)
