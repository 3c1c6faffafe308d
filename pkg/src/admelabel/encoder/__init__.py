"""A small transformer encoder written directly in numpy."""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .model import EncoderConfig, EncoderParams, forward, init_params
from .tokenizer import SubwordVocab, encode, train_subword_vocab
from .training import (
    EncoderClassifier,
    FinetuneConfig,
    PretrainConfig,
    finetune,
    grid_search,
    pretrain_mlm,
    reinit_top_layers,
)

__all__ = [
    "Checkpoint", "EncoderClassifier", "EncoderConfig", "EncoderParams", "FinetuneConfig", "PretrainConfig",
    "SubwordVocab", "encode", "finetune", "forward", "grid_search", "init_params", "load_checkpoint",
    "pretrain_mlm", "reinit_top_layers", "save_checkpoint", "train_subword_vocab",
]
