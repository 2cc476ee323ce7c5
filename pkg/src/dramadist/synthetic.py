"""Synthetic plays with known distinctiveness.

Each character speaks words drawn i.i.d. from the mixture
``(1 - eps) * Zipf(shared vocabulary) + eps * Zipf(private vocabulary)``.
Shared words are spelled with one consonant/vowel set and private words with
a disjoint one, prefixed by a per-character tag, so word-level and 3-gram
level divergence move together.

Both measures compare a character with the rest of its cast, so a grid of
mixing weights spoken inside one play confounds a character's own weight with
the pool's.  ``reference_cast`` adds speakers with weight 0, and
``separate_plays`` puts each graded character in its own play next to that
same reference cast.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .ingest import GENDERS, CharacterSpeech, PlayDocument

_BASE_CONS, _BASE_VOWELS = "bcdfghklmnp", "aeiou"
_PRIV_CONS, _PRIV_VOWELS = "qrstvwxz", "jy"
WORDS_PER_UTTERANCE = 12


@dataclass(frozen=True)
class SyntheticSpec:
    mixing: tuple[float, ...]
    base_vocab_size: int = 2000
    divergent_vocab_size: int = 500
    zipf_exponent: float = 1.0
    words_per_character: int = 5000
    seed: int = 0
    genders: Optional[tuple[str, ...]] = None
    play_id: str = "synthetic"
    corpus_id: str = "synthetic"
    year: Optional[int] = None
    reference_cast: int = 0
    separate_plays: bool = False

    def validate(self) -> list[str]:
        problems = []
        if not self.mixing:
            problems.append("mixing: at least one character is required")
        for i, eps in enumerate(self.mixing):
            if not 0.0 <= eps <= 1.0:
                problems.append(f"mixing[{i}]={eps}: must lie in [0, 1]")
        for name in ("base_vocab_size", "divergent_vocab_size", "words_per_character"):
            if getattr(self, name) <= 0:
                problems.append(f"{name}={getattr(self, name)}: must be positive")
        if self.reference_cast < 0:
            problems.append(f"reference_cast={self.reference_cast}: must be >= 0")
        if self.separate_plays and self.reference_cast == 0:
            problems.append("separate_plays: needs reference_cast >= 1")
        if self.zipf_exponent <= 0:
            problems.append(f"zipf_exponent={self.zipf_exponent}: must be positive")
        if self.genders is not None:
            if len(self.genders) != len(self.mixing):
                problems.append("genders: must have one entry per character")
            problems += [f"genders: unknown value {g!r}" for g in self.genders if g not in GENDERS]
        return problems

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        d = dict(d)
        d["mixing"] = tuple(float(e) for e in d["mixing"])
        if d.get("genders") is not None:
            d["genders"] = tuple(d["genders"])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown synthetic spec fields: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "SyntheticSpec":
        return cls.from_dict(json.loads(Path(path).read_text("utf-8")))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mixing"] = list(self.mixing)
        return d


def spell(index: int, consonants: str, vowels: str, min_syllables: int = 2) -> str:
    """Unique consonant-vowel spelling of a non-negative integer."""
    base = len(consonants) * len(vowels)
    out = []
    while True:
        index, digit = divmod(index, base)
        out.append(consonants[digit // len(vowels)] + vowels[digit % len(vowels)])
        if index == 0 and len(out) >= min_syllables:
            break
    return "".join(out)


def character_tag(k: int) -> str:
    return spell(k, _PRIV_CONS, _PRIV_VOWELS, min_syllables=2)


def shared_vocabulary(size: int) -> list[str]:
    return [spell(i, _BASE_CONS, _BASE_VOWELS) for i in range(size)]


def private_vocabulary(k: int, size: int) -> list[str]:
    tag = character_tag(k)
    return [tag + spell(i, _PRIV_CONS, _PRIV_VOWELS) for i in range(size)]


def zipf_probs(size: int, exponent: float) -> np.ndarray:
    w = 1.0 / np.arange(1, size + 1, dtype=float) ** exponent
    return w / w.sum()


def sample_zipf(rng: np.random.Generator, size: int, exponent: float, n: int) -> np.ndarray:
    """Ranks 0..size-1 by inverse-CDF lookup."""
    cdf = np.cumsum(zipf_probs(size, exponent))
    cdf[-1] = 1.0
    return np.searchsorted(cdf, rng.random(n), side="right")


def mixture_probs(spec: SyntheticSpec, k: int) -> dict[str, float]:
    """Exact word distribution of character ``k``."""
    eps = spec.mixing[k]
    probs = dict(zip(shared_vocabulary(spec.base_vocab_size),
                     (1 - eps) * zipf_probs(spec.base_vocab_size, spec.zipf_exponent)))
    probs.update(zip(private_vocabulary(k, spec.divergent_vocab_size),
                     eps * zipf_probs(spec.divergent_vocab_size, spec.zipf_exponent)))
    return probs


def _draw(spec: SyntheticSpec, eps: float, k: int, key: tuple[int, ...]) -> list[str]:
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=key))
    n = spec.words_per_character
    private = rng.random(n) < eps
    base_ranks = sample_zipf(rng, spec.base_vocab_size, spec.zipf_exponent, n)
    priv_ranks = sample_zipf(rng, spec.divergent_vocab_size, spec.zipf_exponent, n)
    shared = shared_vocabulary(spec.base_vocab_size)
    own = private_vocabulary(k, spec.divergent_vocab_size)
    return [own[p] if is_p else shared[b] for is_p, b, p in zip(private, base_ranks, priv_ranks)]


def character_words(spec: SyntheticSpec, k: int) -> list[str]:
    return _draw(spec, spec.mixing[k], k, (k,))


def reference_words(spec: SyntheticSpec, j: int) -> list[str]:
    # own seed stream; weight 0, so the private vocabulary is never used
    return _draw(spec, 0.0, len(spec.mixing) + j, (j, 1))


def _speech(cid: str, gender: str, words: list[str]) -> CharacterSpeech:
    utts = tuple(" ".join(words[i : i + WORDS_PER_UTTERANCE])
                 for i in range(0, len(words), WORDS_PER_UTTERANCE))
    return CharacterSpeech(cid, gender, utts)


def _graded(spec: SyntheticSpec, k: int) -> CharacterSpeech:
    gender = spec.genders[k] if spec.genders else "unknown"
    return _speech(f"c{k:02d}", gender, character_words(spec, k))


def _references(spec: SyntheticSpec) -> list[CharacterSpeech]:
    return [_speech(f"r{j:02d}", "unknown", reference_words(spec, j)) for j in range(spec.reference_cast)]


def _check(spec: SyntheticSpec) -> None:
    problems = spec.validate()
    if problems:
        raise ValueError("; ".join(problems))


def generate_play(spec: SyntheticSpec) -> PlayDocument:
    """All graded characters (``c00``...) and the reference cast (``r00``...) in one play."""
    _check(spec)
    chars = [_graded(spec, k) for k in range(len(spec.mixing))] + _references(spec)
    return PlayDocument(spec.corpus_id, spec.play_id, f"Synthetic play {spec.play_id}",
                        "synthetic", spec.year, tuple(chars))


def generate_plays(spec: SyntheticSpec) -> list[PlayDocument]:
    """One play, or with ``separate_plays`` one play per graded character."""
    if not spec.separate_plays:
        return [generate_play(spec)]
    _check(spec)
    refs = _references(spec)
    return [PlayDocument(spec.corpus_id, f"{spec.play_id}-{k:02d}", f"Synthetic play {spec.play_id} {k}",
                         "synthetic", spec.year, (_graded(spec, k), *refs))
            for k in range(len(spec.mixing))]
