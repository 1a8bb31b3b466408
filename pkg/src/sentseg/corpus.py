"""Corpus ingestion: TSV parsing, word typing, sequence packing, k-fold splits.

Input files are UTF-8 TSV, one token per line (``word<TAB>pos[<TAB>tag]``),
blank line between passages, ``#`` starts a comment line.  Word types are
computed from the surface form and never stored.
"""
from __future__ import annotations

import unicodedata
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .errors import CorpusFormatError, InvalidInputError, PackingError

SEGMENTATION_TAGS = ("sb", "nsb")
PUNCTUATION_TAGS = ("O", "COMMA", "PERIOD", "QUESTION")
TASK_TAGS = {"segmentation": SEGMENTATION_TAGS, "punctuation": PUNCTUATION_TAGS}

# Tags marking a token followed by sentence-final punctuation; the next token
# starts a new sentence in the punctuation task.
SENTENCE_FINAL_TAGS = frozenset({"PERIOD", "QUESTION"})

_THAI_LO, _THAI_HI = 0x0E00, 0x0E7F


class WordType(str, Enum):
    ENGLISH = "English"
    THAI = "Thai"
    PUNCTUATION = "Punctuation"
    DIGIT = "Digit"
    SPACE = "Space"


def classify_word_type(word: str) -> WordType:
    """Classify a token surface into one of the five word types.

    Priority: all-whitespace -> Space, all-decimal -> Digit, all-punctuation
    -> Punctuation, any Thai-block character -> Thai, otherwise English.
    """
    if not word:
        raise InvalidInputError("cannot classify an empty word")
    if all(ch.isspace() for ch in word):
        return WordType.SPACE
    if all(ch.isdecimal() for ch in word):
        return WordType.DIGIT
    # Punctuation and symbol categories both count as punctuation marks here.
    if all(unicodedata.category(ch)[0] in ("P", "S") for ch in word):
        return WordType.PUNCTUATION
    if any(_THAI_LO <= ord(ch) <= _THAI_HI for ch in word):
        return WordType.THAI
    return WordType.ENGLISH


@dataclass(frozen=True)
class Token:
    word: str
    pos: str
    word_type: WordType

    def __post_init__(self):
        if not self.word:
            raise InvalidInputError("token word must be non-empty")


def make_token(word: str, pos: str) -> Token:
    return Token(word, pos, classify_word_type(word))


@dataclass(frozen=True)
class TaggedSequence:
    """Aligned token and (optional) tag sequences; the unit of training."""

    tokens: tuple[Token, ...]
    tags: tuple[str, ...] | None = None

    def __post_init__(self):
        if len(self.tokens) < 1:
            raise InvalidInputError("a sequence needs at least one token")
        if self.tags is not None and len(self.tags) != len(self.tokens):
            raise InvalidInputError(
                f"{len(self.tags)} tags for {len(self.tokens)} tokens"
            )

    def __len__(self) -> int:
        return len(self.tokens)


def parse_corpus_file(
    path, labeled: bool, tag_set: Sequence[str] | None = None
) -> list[TaggedSequence]:
    """Parse a TSV corpus file into passages.

    ``labeled`` selects the three-column schema and requires ``tag_set`` for
    validating the tag column.  Blank lines delimit passages; trailing blank
    lines produce no empty passage.
    """
    if labeled and tag_set is None:
        raise InvalidInputError("labeled parsing requires a tag_set")
    expected_cols = 3 if labeled else 2
    passages: list[TaggedSequence] = []
    tokens: list[Token] = []
    tags: list[str] = []

    def flush():
        if tokens:
            passages.append(
                TaggedSequence(tuple(tokens), tuple(tags) if labeled else None)
            )
            tokens.clear()
            tags.clear()

    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if line.startswith("#"):
                continue
            if not line.strip():
                flush()
                continue
            cols = line.split("\t")
            if len(cols) != expected_cols:
                raise CorpusFormatError(
                    f"{path}:{lineno}: expected {expected_cols} tab-separated "
                    f"columns, got {len(cols)}"
                )
            word, pos = cols[0], cols[1]
            if not word:
                raise CorpusFormatError(f"{path}:{lineno}: empty word column")
            tokens.append(make_token(word, pos))
            if labeled:
                tag = cols[2]
                if tag not in tag_set:
                    raise CorpusFormatError(f"{path}:{lineno}: unknown tag {tag!r}")
                tags.append(tag)
    flush()
    return passages


def write_corpus_file(path, passages: Iterable[TaggedSequence]) -> None:
    """Write passages back to TSV; inverse of :func:`parse_corpus_file`."""
    with open(path, "w", encoding="utf-8") as fh:
        first = True
        for passage in passages:
            if not first:
                fh.write("\n")
            first = False
            for t, token in enumerate(passage.tokens):
                if passage.tags is not None:
                    fh.write(f"{token.word}\t{token.pos}\t{passage.tags[t]}\n")
                else:
                    fh.write(f"{token.word}\t{token.pos}\n")


def sentence_starts(passage: TaggedSequence, task: str) -> list[bool]:
    """Mark tokens that begin a sentence; a passage always opens one."""
    if passage.tags is None:
        raise InvalidInputError("sentence starts need a labeled passage")
    if task == "segmentation":
        return [t == 0 or passage.tags[t] == "sb" for t in range(len(passage))]
    if task == "punctuation":
        return [
            t == 0 or passage.tags[t - 1] in SENTENCE_FINAL_TAGS
            for t in range(len(passage))
        ]
    raise InvalidInputError(f"unknown task {task!r}")


def _sentences(passages: Sequence[TaggedSequence], task: str):
    """Flatten labeled passages into a list of sentences of (token, tag)."""
    sentences: list[list[tuple[Token, str]]] = []
    for passage in passages:
        starts = sentence_starts(passage, task)
        for t, token in enumerate(passage.tokens):
            if starts[t]:
                sentences.append([])
            sentences[-1].append((token, passage.tags[t]))
    return sentences


def _pack_orchid(sentences, seq_len: int):
    """Whole sentences only; a sentence that would be cut starts the next
    sequence instead."""
    seqs, dups = [], []
    cur: list = []
    for si, sent in enumerate(sentences):
        if len(sent) > seq_len:
            raise PackingError(
                f"sentence {si} ({len(sent)} tokens, first word "
                f"{sent[0][0].word!r}) exceeds seq_len={seq_len}"
            )
        if len(cur) + len(sent) > seq_len:
            seqs.append(cur)
            dups.append(0)
            cur = []
        cur.extend(sent)
    if cur:
        seqs.append(cur)
        dups.append(0)
    return seqs, dups


def _pack_iwslt(sentences, seq_len: int):
    """Fill to exactly seq_len; a cut sentence fills the remainder and is
    then repeated in full at the start of the next sequence."""
    seqs, dups = [], []
    cur: list = []
    next_dup = 0
    for si, sent in enumerate(sentences):
        if len(sent) > seq_len:
            raise PackingError(
                f"sentence {si} ({len(sent)} tokens, first word "
                f"{sent[0][0].word!r}) exceeds seq_len={seq_len}; it would be "
                "re-cut forever under the repeat-on-cut policy"
            )
        if len(cur) + len(sent) < seq_len:
            cur.extend(sent)
            continue
        if len(cur) + len(sent) == seq_len:
            cur.extend(sent)
            seqs.append(cur)
            dups.append(next_dup)
            cur, next_dup = [], 0
            continue
        fill = seq_len - len(cur)
        cur.extend(sent[:fill])
        seqs.append(cur)
        dups.append(next_dup)
        cur, next_dup = list(sent), fill
        if len(cur) == seq_len:
            seqs.append(cur)
            dups.append(next_dup)
            cur, next_dup = [], 0
    if cur:
        seqs.append(cur)
        dups.append(next_dup)
    return seqs, dups


def build_sequences_with_stats(
    passages: Sequence[TaggedSequence],
    policy: str,
    seq_len: int,
    task: str = "segmentation",
) -> tuple[list[TaggedSequence], list[int]]:
    """Pack passages into training sequences.

    Returns the sequences plus, per sequence, the number of leading tokens
    that duplicate the previous sequence's cut sentence (nonzero only under
    the ``iwslt`` policy).

    Labeled passages are flattened into one sentence stream and packed so
    that every sequence begins with the first word of a sentence.  Unlabeled
    passages have no sentence structure and are chunked greedily at
    ``seq_len``, one passage at a time.
    """
    if seq_len < 1:
        raise InvalidInputError("seq_len must be positive")
    if not passages:
        return [], []
    unlabeled = [p.tags is None for p in passages]
    if any(unlabeled):
        if not all(unlabeled):
            raise InvalidInputError("cannot mix labeled and unlabeled passages")
        chunks = []
        for passage in passages:
            for i in range(0, len(passage), seq_len):
                chunks.append(
                    TaggedSequence(tuple(passage.tokens[i : i + seq_len]), None)
                )
        return chunks, [0] * len(chunks)

    sentences = _sentences(passages, task)
    if policy == "orchid":
        raw, dups = _pack_orchid(sentences, seq_len)
    elif policy == "iwslt":
        raw, dups = _pack_iwslt(sentences, seq_len)
    else:
        raise InvalidInputError(f"unknown packing policy {policy!r}")
    packed = [
        TaggedSequence(tuple(tok for tok, _ in seq), tuple(tag for _, tag in seq))
        for seq in raw
    ]
    return packed, dups


def build_sequences(
    passages: Sequence[TaggedSequence],
    policy: str,
    seq_len: int,
    task: str = "segmentation",
) -> list[TaggedSequence]:
    return build_sequences_with_stats(passages, policy, seq_len, task)[0]


@dataclass(frozen=True)
class FoldSplit:
    fold_count: int
    assignments: tuple[int, ...]

    def fold_indices(self, fold: int) -> list[int]:
        return [i for i, f in enumerate(self.assignments) if f == fold]


def split_folds(passages: Sequence, k: int, seed: int) -> FoldSplit:
    """Deal passages into k near-equal folds, shuffled by ``seed``."""
    n = len(passages)
    if k < 2:
        raise InvalidInputError("fold count must be at least 2")
    if k > n:
        raise InvalidInputError(f"cannot split {n} passages into {k} folds")
    rng = np.random.Generator(np.random.PCG64(seed))
    order = rng.permutation(n)
    assignments = [0] * n
    for pos, idx in enumerate(order):
        assignments[int(idx)] = pos % k
    return FoldSplit(k, tuple(assignments))
