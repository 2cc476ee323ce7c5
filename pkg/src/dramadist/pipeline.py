"""End-to-end analysis of ingested plays.

Plays are independent units of work.  Every character gets its own bootstrap
seed derived from the run seed and its (corpus, play, character) key, so the
output does not depend on worker count or scheduling order.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

from .energy import BootstrapConfig, DistinctivenessEstimate, bootstrap_distinctiveness
from .ingest import PlayDocument
from .keyness import DEFAULT_ALPHA0, KeynessProfile, character_keyness
from .report import (MIN_WORDS, AnalysisRow, CorpusSummary, build_rows, character_key,
                     corpus_summary, filter_characters, skip_reason)
from .text import NgramSample, TokenStream, char_3grams, utterance_tokens


@dataclass(frozen=True)
class AnalysisSettings:
    bootstrap: BootstrapConfig = field(default_factory=BootstrapConfig)
    min_words: int = MIN_WORDS
    alpha0: float = DEFAULT_ALPHA0


@dataclass
class PlayResult:
    rows: list[AnalysisRow]
    profiles: dict
    warnings: list[str]


@dataclass
class AnalysisResult:
    rows: list[AnalysisRow]
    profiles: dict
    summaries: list[CorpusSummary]
    warnings: list[str]


def character_seed(seed: int, key: Sequence[str]) -> int:
    h = hashlib.blake2b(digest_size=8)
    h.update(str(seed).encode())
    for part in key:
        h.update(b"\x1f" + part.encode("utf-8"))
    return int.from_bytes(h.digest(), "big")


def analyze_play(play: PlayDocument, settings: AnalysisSettings) -> PlayResult:
    filtered = [(p, c) for p, c in filter_characters([play], settings.min_words)]
    grams: dict[str, NgramSample] = {}
    tokens: dict[str, TokenStream] = {}
    for ch in play.characters:
        grams[ch.character_id] = char_3grams(ch.utterances)
        tokens[ch.character_id] = utterance_tokens(ch.utterances)

    estimates: dict = {}
    profiles: dict = {}
    vocab: dict = {}
    for _, ch in filtered:
        if skip_reason(play, ch, settings.min_words):
            continue
        key = character_key(play, ch)
        others = [c.character_id for c in play.characters if c.character_id != ch.character_id]
        other_grams = NgramSample.merge(grams[o] for o in others)
        other_words = TokenStream(tuple(w for o in others for w in tokens[o].words))
        cfg = replace(settings.bootstrap, seed=character_seed(settings.bootstrap.seed, key))
        estimates[key] = bootstrap_distinctiveness(grams[ch.character_id], other_grams, cfg)
        profiles[key] = character_keyness(tokens[ch.character_id], other_words, settings.alpha0)
        vocab[key] = grams[ch.character_id].vocab_size
    rows, warnings = build_rows(filtered, estimates, profiles, settings.min_words, vocab)
    return PlayResult(rows, profiles, warnings)


def _run(args):
    return analyze_play(*args)


def analyze(
    plays: Sequence[PlayDocument],
    settings: AnalysisSettings,
    workers: int = 1,
    progress: Optional[Callable[[PlayDocument], None]] = None,
) -> AnalysisResult:
    settings.bootstrap.check()
    plays = sorted(plays, key=lambda p: (p.corpus_id, p.play_id))
    if workers > 1 and len(plays) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = []
            for play, res in zip(plays, pool.map(_run, [(p, settings) for p in plays])):
                results.append(res)
                if progress:
                    progress(play)
    else:
        results = []
        for play in plays:
            results.append(analyze_play(play, settings))
            if progress:
                progress(play)

    rows, profiles, warnings = [], {}, []
    for res in results:
        rows.extend(res.rows)
        profiles.update(res.profiles)
        warnings.extend(res.warnings)
    corpora = sorted({p.corpus_id for p in plays})
    summaries = [corpus_summary(rows, plays, c) for c in corpora]
    return AnalysisResult(rows, profiles, summaries, warnings)
