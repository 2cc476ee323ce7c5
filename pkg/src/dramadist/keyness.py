"""Weighted log-odds keyness with an informative Dirichlet prior.

Per word w with prior weight alpha_w = alpha0 * prior_w / prior_total::

    delta_w = log((a_w + alpha_w) / (n_a + alpha0 - a_w - alpha_w))
            - log((b_w + alpha_w) / (n_b + alpha0 - b_w - alpha_w))
    var_w   = 1 / (a_w + alpha_w) + 1 / (b_w + alpha_w)
    z_w     = delta_w / sqrt(var_w)
"""

from __future__ import annotations

import csv
import io
import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional

from .text import TokenStream, utterance_tokens

DEFAULT_ALPHA0 = 500.0
CURVE_LENGTH = 100
CONTRAST_ROWS = 40


class KeynessError(ValueError):
    pass


@dataclass(frozen=True)
class WordCounts:
    counts: Mapping[str, float]

    def __post_init__(self):
        bad = [w for w, c in self.counts.items() if c < 0]
        if bad:
            raise KeynessError(f"negative count for {bad[0]!r}")

    @property
    def total(self) -> float:
        return math.fsum(self.counts.values())

    @classmethod
    def from_tokens(cls, tokens: Iterable[str]) -> "WordCounts":
        return cls(dict(Counter(tokens)))

    def scaled(self, factor_num: float, factor_den: float) -> "WordCounts":
        # multiply before dividing: exact whenever the true result is representable
        return WordCounts({w: c * factor_num / factor_den for w, c in self.counts.items()})


def weighted_log_odds(
    a: WordCounts,
    b: WordCounts,
    prior: WordCounts,
    alpha0: float = DEFAULT_ALPHA0,
    *,
    n_a: Optional[float] = None,
    n_b: Optional[float] = None,
) -> dict[str, float]:
    """z-score of every word in the prior support; positive means ``a`` prefers it."""
    if not alpha0 > 0:
        raise KeynessError(f"alpha0 must be positive, got {alpha0}")
    missing = (set(a.counts) | set(b.counts)) - set(prior.counts)
    if missing:
        raise KeynessError(f"word {sorted(missing)[0]!r} is outside the prior support")
    prior_total = prior.total
    if not prior_total > 0:
        raise KeynessError("prior has no mass")
    n_a = a.total if n_a is None else n_a
    n_b = b.total if n_b is None else n_b

    z = {}
    for w, pw in prior.counts.items():
        alpha_w = alpha0 * pw / prior_total
        ya = a.counts.get(w, 0.0) + alpha_w
        yb = b.counts.get(w, 0.0) + alpha_w
        rest_a = n_a + alpha0 - ya
        rest_b = n_b + alpha0 - yb
        if ya <= 0 or yb <= 0 or rest_a <= 0 or rest_b <= 0:
            raise KeynessError(f"non-positive log-odds term for word {w!r}")
        delta = (math.log(ya) - math.log(rest_a)) - (math.log(yb) - math.log(rest_b))
        z[w] = delta / math.sqrt(1.0 / ya + 1.0 / yb)
    return z


def ranked(z: Mapping[str, float], words: Optional[Iterable[str]] = None) -> list[tuple[str, float]]:
    """Words by descending z, ties broken by lexicographic word order."""
    keys = z.keys() if words is None else words
    return sorted(((w, z[w]) for w in keys), key=lambda wz: (-wz[1], wz[0]))


@dataclass(frozen=True)
class KeynessProfile:
    zscores: Mapping[str, float]
    top_words: tuple[str, ...]
    top_curve: tuple[float, ...]

    @property
    def auc(self) -> float:
        return float(sum(self.top_curve))


def keyness_profile(z: Mapping[str, float], char_vocab: Iterable[str]) -> KeynessProfile:
    """Top-100 curve over the words the character actually uses, zero-padded."""
    top = ranked(z, char_vocab)[:CURVE_LENGTH]
    curve = [v for _, v in top] + [0.0] * (CURVE_LENGTH - len(top))
    return KeynessProfile(zscores=dict(z), top_words=tuple(w for w, _ in top), top_curve=tuple(curve))


def character_keyness(
    char_words: TokenStream, other_words: TokenStream, alpha0: float = DEFAULT_ALPHA0
) -> KeynessProfile:
    """Keyness of one character against the rest of the cast.

    The character's counts are scaled by n_other / n_char so both pools have the
    same size; the prior is the play's pooled raw counts scaled to ``alpha0``.
    """
    if char_words.total == 0 or other_words.total == 0:
        raise KeynessError("character and rest-of-cast word streams must be non-empty")
    char = WordCounts.from_tokens(char_words.words)
    other = WordCounts.from_tokens(other_words.words)
    n_char, n_other = float(char_words.total), float(other_words.total)
    upsampled = char.scaled(n_other, n_char)
    prior = WordCounts(dict(Counter(char.counts) + Counter(other.counts)))
    z = weighted_log_odds(upsampled, other, prior, alpha0, n_a=n_other, n_b=n_other)
    return keyness_profile(z, char.counts)


@dataclass(frozen=True)
class ContrastTable:
    """Most relatively-more-frequent words of two pooled groups."""

    corpus_id: str
    label_a: str
    label_b: str
    side_a: tuple[tuple[str, float], ...]
    side_b: tuple[tuple[str, float], ...]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\r\n")
        writer.writerow(["corpus", "rank", f"{self.label_a}_word", f"{self.label_a}_z",
                         f"{self.label_b}_word", f"{self.label_b}_z"])
        for i in range(max(len(self.side_a), len(self.side_b))):
            wa, za = self.side_a[i] if i < len(self.side_a) else ("", None)
            wb, zb = self.side_b[i] if i < len(self.side_b) else ("", None)
            writer.writerow([self.corpus_id, i + 1, wa, _fmt(za), wb, _fmt(zb)])
        return buf.getvalue()

    def to_text(self) -> str:
        left = [w for w, _ in self.side_a]
        right = [w for w, _ in self.side_b]
        width = max([len(self.label_a)] + [len(w) for w in left]) + 2
        lines = [self.corpus_id.center(width * 2).rstrip(),
                 f"{self.label_a.capitalize():>{width}}{self.label_b.capitalize():>{width}}"]
        for i in range(max(len(left), len(right))):
            a = left[i] if i < len(left) else ""
            b = right[i] if i < len(right) else ""
            lines.append(f"{a:>{width}}{b:>{width}}")
        return "\n".join(lines) + "\n"


def _fmt(v: Optional[float]) -> str:
    return "" if v is None else f"{v:.6g}"


def gender_contrast(
    corpus, gender_a: str = "female", gender_b: str = "male",
    alpha0: float = DEFAULT_ALPHA0, rows: int = CONTRAST_ROWS,
) -> ContrastTable:
    """Pool every character of ``gender_a`` against every one of ``gender_b``.

    ``corpus`` is a list of PlayDocument.  Counts stay raw (no upsampling); the
    prior is the pooled counts of both groups.
    """
    pools = {gender_a: Counter(), gender_b: Counter()}
    corpus_ids = set()
    for play in corpus:
        corpus_ids.add(play.corpus_id)
        for ch in play.characters:
            if ch.gender in pools:
                pools[ch.gender].update(utterance_tokens(ch.utterances).words)
    for g, pool in pools.items():
        if not pool:
            raise KeynessError(f"no words spoken by {g} characters")
    a = WordCounts(dict(pools[gender_a]))
    b = WordCounts(dict(pools[gender_b]))
    prior = WordCounts(dict(pools[gender_a] + pools[gender_b]))
    z = weighted_log_odds(a, b, prior, alpha0)
    return ContrastTable(
        corpus_id="+".join(sorted(corpus_ids)),
        label_a=gender_a,
        label_b=gender_b,
        side_a=tuple(ranked(z)[:rows]),
        # z from the second group's point of view
        side_b=tuple(ranked({w: -v for w, v in z.items()})[:rows]),
    )
