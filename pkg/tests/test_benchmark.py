from __future__ import annotations

import numpy as np
import pytest

from admelabel.annotator import Topic
from admelabel.benchmark import (
    MODEL_NAMES,
    BenchmarkSettings,
    pretrain_reference_encoder,
    run_benchmark,
    run_seed,
    split_corpus,
)
from admelabel.encoder import FinetuneConfig, PretrainConfig
from admelabel.synthetic import generate_corpus


def _tiny(**kw) -> BenchmarkSettings:
    base = dict(corpus_size=150, unlabeled_size=120, vocab_size=300, num_layers=2, num_heads=2, hidden_size=8,
                ffn_size=16, max_seq_len=32, pretrain=PretrainConfig(epochs=1), drift_per_class=2,
                finetune=FinetuneConfig(epochs=1, batch_size=16, learning_rate=1e-3))
    base.update(kw)
    return BenchmarkSettings(**base)


@pytest.fixture(scope="module")
def pretrained():
    return pretrain_reference_encoder(_tiny())


def test_split_is_a_disjoint_cover():
    corpus = generate_corpus(200, seed=3)
    train, val, test = split_corpus(corpus, 5, seed=3)
    ids = [p.id for p in train + val + test]
    assert sorted(ids) == sorted(p.id for p in corpus)
    assert len(set(ids)) == len(ids)
    assert abs(len(test) - 40) <= 5 and abs(len(val) - 40) <= 5
    assert {p.topic for p in test} == set(Topic)


def test_pretrained_encoder_matches_settings(pretrained):
    cfg = pretrained.params.config
    assert (cfg.num_layers, cfg.num_heads, cfg.hidden_size, cfg.vocab_size) == (2, 2, 8, len(pretrained.vocab))
    assert len(pretrained.loss_history) == 1
    assert pretrained.seconds > 0


def test_run_seed_scores_every_model(pretrained):
    result = run_seed(0, pretrained, _tiny())
    assert set(result.scores) == set(MODEL_NAMES)
    assert all(0.0 <= v <= 1.0 for v in result.scores.values())
    drift = np.asarray(result.drift_matrix)
    assert drift.shape == (2, 2)
    layer, head = result.drift_min_cell
    assert drift[layer - 1, head - 1] == drift.min()


def test_run_seed_is_deterministic(pretrained):
    a = run_seed(1, pretrained, _tiny())
    b = run_seed(1, pretrained, _tiny())
    assert a.scores == b.scores
    assert a.drift_matrix == b.drift_matrix


def test_benchmark_means_and_summary(pretrained):
    result = run_benchmark((0, 1), _tiny(), pretrained=pretrained)
    assert [r.seed for r in result.seeds] == [0, 1]
    for name in MODEL_NAMES:
        assert result.mean(name) == pytest.approx(np.mean([r.scores[name] for r in result.seeds]))
    assert result.means().keys() == set(MODEL_NAMES)
    text = result.summary()
    assert all(name in text for name in MODEL_NAMES)
    assert result.settings["num_layers"] == 2
