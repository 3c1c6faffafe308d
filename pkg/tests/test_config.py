from __future__ import annotations

import pytest
from hypothesis import given, settings, strategies as st

from admelabel.annotator import Topic
from admelabel.config import DEFAULTS, Config, dump_config, keyword_table, load_config, title_scheme
from admelabel.errors import ConfigError


def test_defaults_when_no_file():
    cfg = load_config(None)
    assert cfg.snapshot() == DEFAULTS
    assert cfg.seed == 0


def test_file_values_are_typed(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("[general]\nseed = 7\n[annotate]\nrequire_adme_title = yes\n[logreg]\nl2_strength = 0.5\n")
    cfg = load_config(path)
    assert cfg.seed == 7
    assert cfg["annotate"]["require_adme_title"] is True
    assert cfg["logreg"]["l2_strength"] == 0.5
    assert cfg["logreg"]["epochs"] == DEFAULTS["logreg"]["epochs"]


def test_overrides_beat_file(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("[general]\nseed = 7\n")
    cfg = load_config(path, overrides={"general": {"seed": 9}, "eval": {"folds": None}})
    assert cfg.seed == 9
    assert cfg["eval"]["folds"] == 5


@pytest.mark.parametrize("text", ["[nosuch]\nx = 1\n", "[general]\nsede = 1\n", "[general]\nseed = one\n",
                                  "[annotate]\nrequire_adme_title = maybe\n", "not an ini file"])
def test_bad_files_raise_config_error(tmp_path, text):
    path = tmp_path / "c.ini"
    path.write_text(text)
    with pytest.raises(ConfigError):
        load_config(path)


def test_missing_file_raises_config_error(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "absent.ini")


def test_dump_round_trip(tmp_path):
    cfg = Config({"general": {"seed": 3}, "forest": {"features_per_split": "log2"}})
    path = tmp_path / "c.ini"
    path.write_text(dump_config(cfg))
    assert load_config(path).snapshot() == cfg.snapshot()


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31), folds=st.integers(2, 20), lr=st.floats(1e-6, 10.0), flag=st.booleans())
def test_dump_round_trip_property(tmp_path_factory, seed, folds, lr, flag):
    cfg = Config({"general": {"seed": seed}, "eval": {"folds": folds}, "finetune": {"learning_rate": lr},
                  "annotate": {"require_adme_title": flag}})
    path = tmp_path_factory.mktemp("cfg") / "c.ini"
    path.write_text(dump_config(cfg))
    assert load_config(path).snapshot() == cfg.snapshot()


def test_keyword_table_from_config():
    table = keyword_table(Config({"keywords": {"absorption": "Absorb , food,"}}))
    assert table[Topic.ABSORPTION] == ("absorb", "food")
    assert set(table) == {Topic.ABSORPTION, Topic.DISTRIBUTION, Topic.METABOLISM, Topic.EXCRETION}


def test_keyword_table_rejects_empty_topic():
    with pytest.raises(ConfigError, match="keywords"):
        keyword_table(Config({"keywords": {"metabolism": " , "}}))


def test_title_scheme_extra_titles():
    scheme = title_scheme(Config({"annotate": {"extra_titles": "Uptake = Absorption; Clearance=Excretion"}}))
    assert scheme.titles["uptake"] is Topic.ABSORPTION
    assert scheme.titles["clearance"] is Topic.EXCRETION


@pytest.mark.parametrize("extra", ["Uptake", "Uptake = Nothing"])
def test_title_scheme_rejects_bad_pairs(extra):
    with pytest.raises(ConfigError, match="extra_titles"):
        title_scheme(Config({"annotate": {"extra_titles": extra}}))
