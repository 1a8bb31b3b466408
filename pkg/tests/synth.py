"""Synthetic segmentation corpus for end-to-end tests.

Sentences end with the final-particle bigram ("na", "kha"); a fraction of
sentences also carry a single lone particle mid-sentence as a distractor,
so neither particle alone identifies a boundary.  The tagging rule is
exact: a token starts a sentence iff it follows the (na, kha) pair.
"""
from __future__ import annotations

import numpy as np

from sentseg.corpus import TaggedSequence, make_token

CONTENT_WORDS = [f"w{i:02d}" for i in range(48)]
PARTICLES = ("na", "kha")  # 48 + 2 = 50-word vocabulary


def _pos_for(word: str) -> str:
    if word in PARTICLES:
        return "PS"
    return "NN" if int(word[1:]) % 2 == 0 else "VV"


def make_sentence(rng: np.random.Generator, distractor_rate: float = 0.1) -> list[str]:
    body = [CONTENT_WORDS[i] for i in rng.integers(0, len(CONTENT_WORDS), rng.integers(3, 11))]
    if rng.random() < distractor_rate:
        pos = int(rng.integers(0, len(body) + 1))
        body.insert(pos, PARTICLES[int(rng.integers(0, 2))])
    return body + list(PARTICLES)


def make_corpus(
    n_passages: int, seed: int, distractor_rate: float = 0.1
) -> list[TaggedSequence]:
    rng = np.random.default_rng(seed)
    passages = []
    for _ in range(n_passages):
        words: list[str] = []
        tags: list[str] = []
        for _ in range(int(rng.integers(1, 4))):
            sentence = make_sentence(rng, distractor_rate)
            tags.extend(["sb"] + ["nsb"] * (len(sentence) - 1))
            words.extend(sentence)
        passages.append(
            TaggedSequence(
                tuple(make_token(w, _pos_for(w)) for w in words), tuple(tags)
            )
        )
    return passages


def strip_tags(passages: list[TaggedSequence]) -> list[TaggedSequence]:
    return [TaggedSequence(p.tokens, None) for p in passages]
