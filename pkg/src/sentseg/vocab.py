"""Frequency-filtered n-gram vocabularies and masked-token dropping.

Each (gram, field) pair gets its own token -> id map: grams are unigram,
bigram, trigram; fields are the word surface, POS tag, and word type.
Bigram/trigram tokens are atomic tuple keys, including ``<PAD>`` components
at sequence boundaries.  Ids 0..2 are reserved for the PAD, UNK and REMOVED
specials in every map.
"""
from __future__ import annotations

import io
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import TaggedSequence
from .errors import CorpusFormatError, InvalidInputError

GRAMS = ("uni", "bi", "tri")
FIELDS = ("word", "pos", "type")

PAD_TOKEN = "<PAD>"
UNK_TOKEN = "<UNK>"
REMOVED_TOKEN = "<REMOVED>"

PAD_ID, UNK_ID, REMOVED_ID = 0, 1, 2
NUM_SPECIALS = 3

# Relative token offsets covered by each gram at position t: the bigram at t
# is (x[t-1], x[t]), the trigram (x[t-1], x[t], x[t+1]).
GRAM_OFFSETS = {"uni": (0,), "bi": (-1, 0), "tri": (-1, 0, 1)}

_SPECIAL_IDS = {PAD_TOKEN: PAD_ID, UNK_TOKEN: UNK_ID, REMOVED_TOKEN: REMOVED_ID}
_TUPLE_SEP = "\x1f"


@dataclass(frozen=True)
class VocabConfig:
    """Minimum corpus frequencies for keeping a token out of UNK."""

    c_word: int = 1
    c_ngram: int = 1

    def __post_init__(self):
        if self.c_word < 1 or self.c_ngram < 1:
            raise InvalidInputError("frequency cutoffs must be >= 1")


def _field_values(seq: TaggedSequence) -> dict[str, list[str]]:
    return {
        "word": [t.word for t in seq.tokens],
        "pos": [t.pos for t in seq.tokens],
        "type": [t.word_type.value for t in seq.tokens],
    }


def _gram_keys(values: list[str], gram: str):
    """Per-timestep keys for one gram order, padding out-of-range members."""
    n = len(values)

    def at(i):
        return values[i] if 0 <= i < n else PAD_TOKEN

    if gram == "uni":
        return list(values)
    if gram == "bi":
        return [(at(t - 1), at(t)) for t in range(n)]
    return [(at(t - 1), at(t), at(t + 1)) for t in range(n)]


class Vocab:
    """Immutable id maps per (gram, field); unseen tokens fall back to UNK."""

    def __init__(self, config: VocabConfig, maps: dict[tuple[str, str], dict]):
        self.config = config
        self._maps = maps

    def lookup(self, gram: str, field: str, key) -> int:
        return self._maps[(gram, field)].get(key, UNK_ID)

    def size(self, gram: str, field: str) -> int:
        return len(self._maps[(gram, field)]) + NUM_SPECIALS

    def tokens(self, gram: str, field: str):
        return self._maps[(gram, field)].keys()

    def __eq__(self, other):
        return (
            isinstance(other, Vocab)
            and self.config == other.config
            and self._maps == other._maps
        )

    def dump(self, fh: io.TextIOBase) -> None:
        """Serialize as versioned tab-separated text."""
        fh.write(f"sentseg-vocab\t1\t{self.config.c_word}\t{self.config.c_ngram}\n")
        for gram in GRAMS:
            for field in FIELDS:
                for special, sid in _SPECIAL_IDS.items():
                    fh.write(f"{gram}\t{field}\t{special}\t{sid}\n")
                for key, idx in self._maps[(gram, field)].items():
                    token = key if isinstance(key, str) else _TUPLE_SEP.join(key)
                    fh.write(f"{gram}\t{field}\t{token}\t{idx}\n")

    def dumps(self) -> str:
        buf = io.StringIO()
        self.dump(buf)
        return buf.getvalue()

    @classmethod
    def load(cls, fh: io.TextIOBase) -> "Vocab":
        header = fh.readline().rstrip("\n").split("\t")
        if len(header) != 4 or header[0] != "sentseg-vocab":
            raise CorpusFormatError("not a vocab file")
        if header[1] != "1":
            raise CorpusFormatError(f"unsupported vocab version {header[1]!r}")
        config = VocabConfig(int(header[2]), int(header[3]))
        maps: dict[tuple[str, str], dict] = {(g, f): {} for g in GRAMS for f in FIELDS}
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            gram, field, token, idx = line.split("\t")
            if token in _SPECIAL_IDS:
                continue
            key = token if gram == "uni" else tuple(token.split(_TUPLE_SEP))
            maps[(gram, field)][key] = int(idx)
        return cls(config, maps)

    @classmethod
    def loads(cls, text: str) -> "Vocab":
        return cls.load(io.StringIO(text))


def build_vocab(sequences: Sequence[TaggedSequence], config: VocabConfig) -> Vocab:
    """Count n-gram tokens over the training split and keep frequent ones.

    ``c_word`` applies to unigram word tokens; ``c_ngram`` to every bigram
    and trigram field.  Unigram POS/type tokens form small closed sets and
    are always kept.
    """
    if not sequences:
        raise InvalidInputError("cannot build a vocab from no sequences")
    counts: dict[tuple[str, str], Counter] = {
        (g, f): Counter() for g in GRAMS for f in FIELDS
    }
    for seq in sequences:
        values = _field_values(seq)
        for gram in GRAMS:
            for field in FIELDS:
                counts[(gram, field)].update(_gram_keys(values[field], gram))

    def cutoff(gram: str, field: str) -> int:
        if gram == "uni":
            return config.c_word if field == "word" else 1
        return config.c_ngram

    maps: dict[tuple[str, str], dict] = {}
    for gram in GRAMS:
        for field in FIELDS:
            keep = sorted(
                k for k, c in counts[(gram, field)].items() if c >= cutoff(gram, field)
            )
            maps[(gram, field)] = {k: NUM_SPECIALS + i for i, k in enumerate(keep)}
    return Vocab(config, maps)


@dataclass
class NgramView:
    """Per-timestep id streams for every (gram, field) pair."""

    n: int
    ids: dict[tuple[str, str], np.ndarray]

    def copy(self) -> "NgramView":
        return NgramView(self.n, {k: v.copy() for k, v in self.ids.items()})


def extract_ngrams(seq: TaggedSequence, vocab: Vocab) -> NgramView:
    """Map a sequence to unigram/bigram/trigram id streams of length N."""
    values = _field_values(seq)
    ids = {}
    for gram in GRAMS:
        for field in FIELDS:
            keys = _gram_keys(values[field], gram)
            ids[(gram, field)] = np.array(
                [vocab.lookup(gram, field, k) for k in keys], dtype=np.int64
            )
    return NgramView(len(seq), ids)


def drop_tokens(
    view: NgramView, drop_rate: float, rng: np.random.Generator
) -> tuple[NgramView, np.ndarray]:
    """Randomly drop timesteps and propagate REMOVED to covering n-grams.

    Every timestep is dropped independently with probability ``drop_rate``.
    A dropped token x_t replaces its unigram id with REMOVED and every
    bigram/trigram id whose members include x_t likewise.  Returns the
    masked view and the sorted array of dropped timesteps D.
    """
    if not 0.0 <= drop_rate < 1.0:
        raise InvalidInputError("drop_rate must lie in [0, 1)")
    n = view.n
    dropped = rng.random(n) < drop_rate
    d = np.flatnonzero(dropped)
    if d.size == 0:
        return view.copy(), d
    masked = view.copy()
    for gram in GRAMS:
        hit = np.zeros(n, dtype=bool)
        for off in GRAM_OFFSETS[gram]:
            # the gram at position t covers token t+off
            lo, hi = max(0, -off), min(n, n - off)
            hit[lo:hi] |= dropped[lo + off : hi + off]
        for field in FIELDS:
            ids = masked.ids[(gram, field)]
            ids[hit] = REMOVED_ID
    return masked, d
