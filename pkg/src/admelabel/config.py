"""Experiment configuration: one INI file, typed defaults, command-line overrides.

Every key has a default below; a config file may set any subset. Values are
parsed with the type of their default. Unknown sections or keys are rejected
so that typos do not silently fall back to defaults. A snapshot of the
effective configuration is embedded in every report.
"""

from __future__ import annotations

import configparser
import copy
from pathlib import Path
from typing import Any, Mapping

from .errors import ConfigError

DEFAULTS: dict[str, dict[str, Any]] = {
    "general": {"seed": 0},
    # extra_titles: "title = Topic" pairs separated by ";" added to the built-in list
    "annotate": {"require_adme_title": False, "strip_inline_title": True, "extra_titles": ""},
    "rule": {"tie_seed": 0},
    # comma-separated keyword prefixes per topic
    "keywords": {"absorption": "absorption, absorb, food", "distribution": "distribution, distribute",
                 "metabolism": "metabolism, metabolize",
                 "excretion": "excretion, elimination, excrete, eliminate"},
    "tfidf": {"max_features": 128},
    "logreg": {"l2_strength": 1e-3, "learning_rate": 0.5, "epochs": 500},
    "svm": {"l2_strength": 1e-3, "learning_rate": 0.1, "epochs": 500},
    "forest": {"tree_count": 100, "max_depth": 0, "min_leaf": 1, "features_per_split": "sqrt"},
    "encoder": {"num_layers": 4, "num_heads": 4, "hidden_size": 32, "ffn_size": 128, "max_seq_len": 96,
                "dropout_rate": 0.1, "vocab_size": 3500, "init": "truncated_normal"},
    "pretrain": {"epochs": 5, "batch_size": 32, "learning_rate": 1e-3, "mask_fraction": 0.15,
                 "weight_decay": 0.01},
    "finetune": {"epochs": 10, "batch_size": 32, "learning_rate": 1e-3, "weight_decay": 0.01,
                 "freeze_top_n": -1},
    "eval": {"folds": 5},
    "drift": {"per_class": 1000},
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _coerce(section: str, key: str, raw: Any) -> Any:
    default = DEFAULTS[section][key]
    if isinstance(raw, type(default)) and not (isinstance(raw, bool) and not isinstance(default, bool)):
        return raw
    text = str(raw).strip()
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: cannot parse {text!r} as {type(default).__name__}") from exc
    return text


class Config:
    """Effective configuration; access values as ``cfg["section"]["key"]``."""

    def __init__(self, values: Mapping[str, Mapping[str, Any]] | None = None):
        self._values = copy.deepcopy(DEFAULTS)
        for section, items in (values or {}).items():
            for key, raw in items.items():
                self.set(section, key, raw)

    def set(self, section: str, key: str, raw: Any) -> None:
        if section not in DEFAULTS:
            raise ConfigError(f"unknown config section [{section}]")
        if key not in DEFAULTS[section]:
            raise ConfigError(f"unknown config key [{section}] {key}")
        self._values[section][key] = _coerce(section, key, raw)

    def __getitem__(self, section: str) -> dict[str, Any]:
        return self._values[section]

    def snapshot(self) -> dict[str, dict[str, Any]]:
        return copy.deepcopy(self._values)

    @property
    def seed(self) -> int:
        return int(self._values["general"]["seed"])


def load_config(path: str | Path | None = None, overrides: Mapping[str, Mapping[str, Any]] | None = None) -> Config:
    """Defaults, then the INI file at ``path`` (if any), then ``overrides``."""
    cfg = Config()
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except configparser.Error as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from exc
        for section in parser.sections():
            for key, raw in parser.items(section):
                cfg.set(section, key, raw)
    for section, items in (overrides or {}).items():
        for key, raw in items.items():
            if raw is not None:
                cfg.set(section, key, raw)
    return cfg


def dump_config(cfg: Config) -> str:
    """INI text that :func:`load_config` reads back to the same values."""
    lines = []
    for section, items in cfg.snapshot().items():
        lines.append(f"[{section}]")
        lines.extend(f"{k} = {v}" for k, v in items.items())
        lines.append("")
    return "\n".join(lines)


def keyword_table(cfg: Config) -> dict:
    """The ``[keywords]`` section as a validated keyword table."""
    from .annotator import Topic
    from .baseline_rules import validate_keyword_table

    table = {Topic.parse(k.capitalize()): tuple(w.strip().lower() for w in v.split(",") if w.strip())
             for k, v in cfg["keywords"].items()}
    try:
        return validate_keyword_table(table)
    except ValueError as exc:
        raise ConfigError(f"[keywords]: {exc}") from exc


def title_scheme(cfg: Config):
    """Title scheme with the built-in titles plus ``[annotate] extra_titles``."""
    from .annotator import DEFAULT_TITLES, Topic, TitleScheme

    titles = dict(DEFAULT_TITLES)
    for pair in cfg["annotate"]["extra_titles"].split(";"):
        if not pair.strip():
            continue
        if "=" not in pair:
            raise ConfigError(f"[annotate] extra_titles: expected 'title = Topic', got {pair.strip()!r}")
        title, topic = (x.strip() for x in pair.split("=", 1))
        try:
            titles[title.lower()] = Topic.parse(topic)
        except ValueError as exc:
            raise ConfigError(f"[annotate] extra_titles: {exc}") from exc
    return TitleScheme(titles, cfg["annotate"]["strip_inline_title"])
