"""Speech normalisation, word tokens and character 3-gram samples."""

from __future__ import annotations

import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import regex

# Letters are every Unicode L* code point plus the apostrophe.  The typographic
# apostrophe is folded onto U+0027 before matching.
_NON_LETTER_RUN = regex.compile(r"[^\p{L}']+")
_APOSTROPHES = str.maketrans({"’": "'", "ʼ": "'"})

NGRAM_WIDTH = 3


def normalize(text: str) -> str:
    """Lowercase ``text`` and collapse every run of non-letters to one space.

    >>> normalize("Ab, cd!")
    'ab cd'
    """
    text = unicodedata.normalize("NFC", text).translate(_APOSTROPHES).lower()
    return _NON_LETTER_RUN.sub(" ", text).strip()


@dataclass(frozen=True)
class TokenStream:
    words: tuple[str, ...]

    @property
    def total(self) -> int:
        return len(self.words)

    def counts(self) -> Counter:
        return Counter(self.words)

    def __len__(self) -> int:
        return len(self.words)


def word_tokens(text: str) -> TokenStream:
    norm = normalize(text)
    return TokenStream(tuple(norm.split(" ")) if norm else ())


def utterance_tokens(utterances: Iterable[str]) -> TokenStream:
    """Tokens of several utterances, in order."""
    words: list[str] = []
    for utt in utterances:
        words.extend(word_tokens(utt).words)
    return TokenStream(tuple(words))


@dataclass(frozen=True)
class NgramSample:
    """A multiset of character 3-grams.

    ``grams`` keeps stream order when the sample came from text; samples built
    by merging (``from_counts``/``merge``) only carry counts.
    """

    counts: Mapping[str, int]
    grams: tuple[str, ...] = field(default=(), repr=False)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    @property
    def vocab_size(self) -> int:
        return len(self.counts)

    @classmethod
    def from_counts(cls, counts: Mapping[str, int]) -> "NgramSample":
        if any(c < 0 for c in counts.values()):
            raise ValueError("gram counts must be non-negative")
        clean = {g: int(c) for g, c in counts.items() if c > 0}
        return cls(counts=dict(sorted(clean.items())))

    @classmethod
    def merge(cls, samples: Iterable["NgramSample"]) -> "NgramSample":
        total: Counter = Counter()
        for s in samples:
            total.update(s.counts)
        return cls.from_counts(total)


def stream_of(utterances: Iterable[str]) -> str:
    """Normalised utterances joined by single spaces; empty ones are dropped."""
    return " ".join(n for n in (normalize(u) for u in utterances) if n)


def char_3grams(utterances: Iterable[str]) -> NgramSample:
    if isinstance(utterances, str):
        raise TypeError("char_3grams expects a list of utterances, not a string")
    stream = stream_of(utterances)
    grams = tuple(stream[i : i + NGRAM_WIDTH] for i in range(len(stream) - NGRAM_WIDTH + 1))
    return NgramSample(counts=dict(sorted(Counter(grams).items())), grams=grams)
