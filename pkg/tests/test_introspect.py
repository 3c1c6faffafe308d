from __future__ import annotations

import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from admelabel.annotator import TOPICS, LabeledParagraph
from admelabel.encoder import EncoderConfig, init_params, train_subword_vocab
from admelabel.encoder.model import layer_group
from admelabel.errors import ConfigError, DimensionError
from admelabel.introspect import (
    AttentionRecord,
    ZeroAttentionWarning,
    attention_drift,
    capture_attentions,
    export_attention_view,
    flattened_cosine,
    merge_subword_attention,
    read_attention_view,
    sample_texts_per_class,
)

from .oracles import brute_cosine

TEXTS = ["Desmopressin acetate is absorbed through the nasal mucosa.",
         "Metoprolol is extensively distributed to tissues.",
         "The drug is metabolized by CYP2D6.", "Renal excretion dominates.", "No data in children."]


@pytest.fixture(scope="module")
def vocab():
    return train_subword_vocab(TEXTS, 70)


@pytest.fixture(scope="module")
def params(vocab):
    cfg = EncoderConfig(vocab_size=len(vocab), num_layers=4, num_heads=4, hidden_size=16, max_seq_len=48)
    return init_params(cfg, "uniform", 0)


def test_capture_shape_and_rows(params, vocab):
    rec = capture_attentions(params, vocab, TEXTS[0])
    n = len(rec.tokens)
    assert rec.attentions.shape == (4, 4, n, n)
    np.testing.assert_allclose(rec.attentions.sum(-1), 1, atol=1e-6)
    assert rec.tokens[0] == "[CLS]" and rec.tokens[-1] == "[SEP]"


def test_single_word_record_size(params, vocab):
    rec = capture_attentions(params, vocab, "mucosa")
    pieces = len(vocab.word_pieces("mucosa"))
    assert rec.attentions.shape[-1] == pieces + 2


def test_capture_is_deterministic(params, vocab):
    a = capture_attentions(params, vocab, TEXTS[1])
    b = capture_attentions(params, vocab, TEXTS[1])
    assert a.tokens == b.tokens and np.array_equal(a.attentions, b.attentions)


def _two_piece_record():
    # [CLS] ab ##c d [SEP]; word 0 split into two pieces
    att = np.zeros((1, 1, 5, 5))
    att[0, 0] = np.full((5, 5), 0.2)
    att[0, 0, 1] = [0.1, 0.3, 0.2, 0.1, 0.3]
    att[0, 0, 2] = [0.3, 0.1, 0.2, 0.1, 0.3]
    return AttentionRecord("abc d", ["[CLS]", "ab", "##c", "d", "[SEP]"], [None, 0, 0, 1, None], att)


def test_merge_averages_queries_and_sums_keys():
    merged = merge_subword_attention(_two_piece_record())
    assert merged.tokens == ["[CLS]", "abc", "d", "[SEP]"]
    m = merged.attentions[0, 0]
    assert m[1, 2] == pytest.approx(0.1)  # both pieces attend 0.1 to "d": the average
    assert m[1, 0] == pytest.approx(0.2)
    assert m[0, 1] == pytest.approx(0.4)  # keys of one word are summed
    np.testing.assert_allclose(m.sum(-1), 1, atol=1e-6)


def test_merge_without_multi_piece_words_is_identity():
    rec = AttentionRecord("a b", ["[CLS]", "a", "b", "[SEP]"], [None, 0, 1, None], np.full((1, 1, 4, 4), 0.25))
    merged = merge_subword_attention(rec)
    assert np.array_equal(merged.attentions, rec.attentions) and merged.tokens == rec.tokens


def test_merge_on_real_capture_preserves_mass(params, vocab):
    merged = merge_subword_attention(capture_attentions(params, vocab, TEXTS[0]))
    np.testing.assert_allclose(merged.attentions.sum(-1), 1, atol=1e-6)
    assert "desmopressin" in merged.tokens


def test_cosine_examples():
    a = np.array([[0.5, 0.5], [0.2, 0.8]])
    assert flattened_cosine(a, a) == pytest.approx(1.0, abs=1e-12)
    assert flattened_cosine(np.eye(2), np.array([[0, 1], [1, 0]])) == 0.0
    with pytest.raises(DimensionError):
        flattened_cosine(np.eye(2), np.eye(3))


def test_cosine_zero_input_warns():
    with pytest.warns(ZeroAttentionWarning):
        assert flattened_cosine(np.zeros((2, 2)), np.eye(2)) == 0.0


@settings(max_examples=100)
@given(hnp.arrays(np.float64, (4, 4), elements=st.floats(0.01, 1)),
       hnp.arrays(np.float64, (4, 4), elements=st.floats(0.01, 1)))
def test_cosine_matches_oracle_and_is_symmetric(a, b):
    assert flattened_cosine(a, b) == pytest.approx(brute_cosine(a, b), abs=1e-12)
    assert flattened_cosine(a, b) == flattened_cosine(b, a)
    assert 0 <= flattened_cosine(a, b) <= 1 + 1e-12


def test_drift_identity(params, vocab):
    rep = attention_drift(params, params, vocab, TEXTS)
    np.testing.assert_allclose(rep.matrix, 1.0, atol=1e-9)
    merged = attention_drift(params, params, vocab, TEXTS[:2], merged=True)
    np.testing.assert_allclose(merged.matrix, 1.0, atol=1e-9)


def test_drift_top_layer_perturbation(params, vocab):
    after = params.copy()
    rng = np.random.default_rng(0)
    top = layer_group(4)
    for k in ("Wq", "Wk"):
        after.tensors[f"{top}.{k}"] = after.tensors[f"{top}.{k}"] + rng.normal(0, 1, (16, 16))
    rep = attention_drift(params, after, vocab, TEXTS)
    np.testing.assert_allclose(rep.matrix[:3], 1.0, atol=1e-9)
    assert (rep.matrix[3] < 1).all()
    assert rep.argmin[0] == 4
    assert (rep.matrix >= 0).all() and (rep.matrix <= 1 + 1e-12).all()


def test_drift_errors(params, vocab):
    with pytest.raises(ConfigError):
        attention_drift(params, params, vocab, [])
    other = init_params(EncoderConfig(vocab_size=len(vocab), num_layers=2, num_heads=4, hidden_size=16,
                                      max_seq_len=48))
    with pytest.raises(ConfigError):
        attention_drift(params, other, vocab, TEXTS)


def test_sampling_per_class():
    data = [LabeledParagraph(f"t{i}", t, "manual") for t in TOPICS for i in range(5)]
    texts, idx = sample_texts_per_class(data, per_class=3, seed=1)
    assert len(texts) == 15
    assert sample_texts_per_class(data, per_class=3, seed=1) == (texts, idx)
    assert len(sample_texts_per_class(data, per_class=100)[0]) == 25


def test_export_round_trip(tmp_path, params, vocab):
    rec = capture_attentions(params, vocab, TEXTS[0])
    drift = attention_drift(params, params, vocab, TEXTS)
    path = export_attention_view(rec, tmp_path / "v.json", drift)
    back = read_attention_view(path)
    assert back.tokens == rec.tokens and back.word_alignment == rec.word_alignment
    np.testing.assert_allclose(back.attentions, rec.attentions, atol=1e-15)
    assert back.drift.size == 16


def test_export_merged_record(tmp_path, params, vocab):
    merged = merge_subword_attention(capture_attentions(params, vocab, TEXTS[0]))
    back = read_attention_view(export_attention_view(merged, tmp_path / "m.json"))
    assert back.merged and back.tokens == merged.tokens
    assert "desmopressin" in back.tokens


def test_export_unwritable_path(params, vocab, tmp_path):
    rec = capture_attentions(params, vocab, TEXTS[0])
    with pytest.raises(OSError):
        export_attention_view(rec, tmp_path / "no" / "such" / "dir.json")


def test_no_warning_on_real_attention(params, vocab):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        attention_drift(params, params, vocab, TEXTS)
