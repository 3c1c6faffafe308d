"""Encoder checkpoints: a single ``.npz`` holding tensors plus a JSON header.

The header records the format version, model configuration, subword
vocabulary, freeze flags and free-form metadata (for example the RNG seed or
training history). No pickled objects are stored.
"""

from __future__ import annotations

import json
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import CheckpointError
from .model import EncoderConfig, EncoderParams, check_shapes
from .tokenizer import SubwordVocab

FORMAT = "admelabel.encoder"
FORMAT_VERSION = 1
_HEADER_KEY = "__header__"
_TENSOR_PREFIX = "t/"


@dataclass
class Checkpoint:
    params: EncoderParams
    vocab: SubwordVocab | None = None
    meta: dict = field(default_factory=dict)

    @property
    def config(self) -> EncoderConfig:
        return self.params.config


def save_checkpoint(path: str | Path, params: EncoderParams, vocab: SubwordVocab | None = None,
                    meta: dict | None = None) -> Path:
    path = Path(path)
    header = {
        "format": FORMAT,
        "format_version": FORMAT_VERSION,
        "config": params.config.to_dict(),
        "freeze": dict(params.freeze),
        "vocab": vocab.to_dict() if vocab is not None else None,
        "meta": meta or {},
    }
    arrays = {_TENSOR_PREFIX + k: np.asarray(v) for k, v in params.tensors.items()}
    arrays[_HEADER_KEY] = np.frombuffer(json.dumps(header, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    try:
        with np.load(path, allow_pickle=False) as data:
            if _HEADER_KEY not in data.files:
                raise CheckpointError(f"{path}: not an encoder checkpoint (missing header)")
            header = json.loads(bytes(data[_HEADER_KEY]).decode("utf-8"))
            tensors = {k[len(_TENSOR_PREFIX):]: data[k].astype(np.float64)
                       for k in data.files if k.startswith(_TENSOR_PREFIX)}
    except (OSError, ValueError, zipfile.BadZipFile) as exc:
        raise CheckpointError(f"{path}: unreadable checkpoint: {exc}") from exc
    if header.get("format") != FORMAT:
        raise CheckpointError(f"{path}: unexpected format {header.get('format')!r}")
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format_version {header.get('format_version')}")
    config = EncoderConfig(**header["config"])
    check_shapes(config, tensors)
    params = EncoderParams(config, tensors, {k: bool(v) for k, v in header.get("freeze", {}).items()})
    vocab = SubwordVocab.from_dict(header["vocab"]) if header.get("vocab") else None
    return Checkpoint(params, vocab, header.get("meta", {}))
