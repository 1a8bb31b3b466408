"""Sequence-tagging toolkit for sentence segmentation and punctuation
restoration: n-gram local representations, self-attention distant
representations, stacked BiLSTM, CRF decoding, and semi-supervised
cross-view training."""

__version__ = "0.1.0"

from .corpus import TaggedSequence, Token, WordType, classify_word_type
from .model import ModelConfig, SegmenterModel, load_checkpoint, save_checkpoint
from .vocab import Vocab, VocabConfig, build_vocab

__all__ = [
    "ModelConfig",
    "SegmenterModel",
    "TaggedSequence",
    "Token",
    "Vocab",
    "VocabConfig",
    "WordType",
    "build_vocab",
    "classify_word_type",
    "load_checkpoint",
    "save_checkpoint",
    "__version__",
]
