"""Per-character analysis rows, corpus summaries and exported tables.

Exports are plain CSV (RFC 4180, UTF-8) or JSON lines.  Plot data is emitted
as one CSV per figure panel plus a manifest; nothing is rendered here.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from collections import defaultdict
from dataclasses import astuple, dataclass, fields
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from .energy import DistinctivenessEstimate
from .ingest import CharacterSpeech, PlayDocument, atomic_write
from .keyness import KeynessProfile
from .text import char_3grams, utterance_tokens

log = logging.getLogger(__name__)

MIN_WORDS = 2000
TREND_BINS = 20
OUTLIER_IQR = 2.0
MODEL_COLUMNS = ("log_D", "G", "T", "S", "S²", "P")


class ReportError(Exception):
    pass


@dataclass(frozen=True)
class AnalysisRow:
    corpus_id: str
    play_id: str
    character_id: str
    gender: str
    word_count: int
    dialogue_share: float
    ngram_vocab_size: int
    distinctiveness: float
    d_ci_low: float
    d_ci_high: float
    baseline: float
    baseline_ci_low: float
    baseline_ci_high: float
    keyness_auc: float
    year_composed: Optional[int]

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.corpus_id, self.play_id, self.character_id)


COLUMNS = tuple(f.name for f in fields(AnalysisRow))
_INT_COLUMNS = {"word_count", "ngram_vocab_size", "year_composed"}
_STR_COLUMNS = {"corpus_id", "play_id", "character_id", "gender"}


@dataclass(frozen=True)
class CorpusSummary:
    corpus_id: str
    total_characters: int = 0
    characters_analysed: int = 0
    unique_3grams: int = 0
    unique_words: int = 0
    total_3grams: int = 0
    total_words: int = 0


Key = tuple[str, str, str]


def character_key(play: PlayDocument, ch: CharacterSpeech) -> Key:
    return (play.corpus_id, play.play_id, ch.character_id)


def filter_characters(plays: Iterable[PlayDocument], min_words: int = MIN_WORDS):
    """(play, character) pairs whose word count reaches ``min_words`` (inclusive)."""
    return [(p, c) for p in plays for c in p.characters if c.word_count >= min_words]


def skip_reason(play: PlayDocument, ch: CharacterSpeech, min_words: int = MIN_WORDS) -> Optional[str]:
    """Why a filtered character cannot be compared with the rest of its cast."""
    if sum(1 for c in play.characters if c.word_count > 0) < 2:
        return "single speaking character"
    others = play.total_words - ch.word_count
    if others < max(min_words, 1):
        return f"rest-of-cast pool has {others} words (< {max(min_words, 1)})"
    return None


def dialogue_share(play: PlayDocument, ch: CharacterSpeech) -> float:
    total = play.total_words
    return 100.0 * ch.word_count / total if total else 0.0


def build_rows(
    filtered: Sequence[tuple[PlayDocument, CharacterSpeech]],
    estimates: Mapping[Key, DistinctivenessEstimate],
    profiles: Mapping[Key, KeynessProfile],
    min_words: int = MIN_WORDS,
    vocab_sizes: Optional[Mapping[Key, int]] = None,
) -> tuple[list[AnalysisRow], list[str]]:
    rows, warnings = [], []
    for play, ch in filtered:
        key = character_key(play, ch)
        reason = skip_reason(play, ch, min_words)
        if reason:
            warnings.append(f"skipped {'/'.join(key)}: {reason}")
            continue
        if key not in estimates:
            raise ReportError(f"no distinctiveness estimate for {'/'.join(key)}")
        if key not in profiles:
            raise ReportError(f"no keyness profile for {'/'.join(key)}")
        est = estimates[key]
        vocab = vocab_sizes[key] if vocab_sizes and key in vocab_sizes else char_3grams(ch.utterances).vocab_size
        rows.append(AnalysisRow(
            corpus_id=play.corpus_id,
            play_id=play.play_id,
            character_id=ch.character_id,
            gender=ch.gender,
            word_count=ch.word_count,
            dialogue_share=dialogue_share(play, ch),
            ngram_vocab_size=vocab,
            distinctiveness=est.median,
            d_ci_low=est.ci_low,
            d_ci_high=est.ci_high,
            baseline=est.baseline_median,
            baseline_ci_low=est.baseline_ci_low,
            baseline_ci_high=est.baseline_ci_high,
            keyness_auc=profiles[key].auc,
            year_composed=play.year_composed,
        ))
    for w in warnings:
        log.warning(w)
    return rows, warnings


def corpus_summary(rows: Sequence[AnalysisRow], plays: Sequence[PlayDocument],
                   corpus_id: Optional[str] = None) -> CorpusSummary:
    """Corpus-level counts; word and 3-gram figures cover analysed characters only."""
    if corpus_id is None:
        ids = {r.corpus_id for r in rows} | {p.corpus_id for p in plays}
        if len(ids) > 1:
            raise ReportError(f"rows span several corpora {sorted(ids)}; pass corpus_id")
        corpus_id = next(iter(ids), "")
    plays = [p for p in plays if p.corpus_id == corpus_id]
    analysed = {r.key for r in rows if r.corpus_id == corpus_id}
    grams, words = set(), set()
    total_grams = total_words = 0
    for play in plays:
        for ch in play.characters:
            if character_key(play, ch) not in analysed:
                continue
            sample = char_3grams(ch.utterances)
            tokens = utterance_tokens(ch.utterances)
            grams.update(sample.counts)
            words.update(tokens.words)
            total_grams += sample.total
            total_words += tokens.total
    return CorpusSummary(
        corpus_id=corpus_id,
        total_characters=sum(len(p.characters) for p in plays),
        characters_analysed=len(analysed),
        unique_3grams=len(grams),
        unique_words=len(words),
        total_3grams=total_grams,
        total_words=total_words,
    )


def format_summary_table(summaries: Sequence[CorpusSummary]) -> str:
    head = ("Corpus", "Total Characters", "Characters Analysed", "Unique 3-grams",
            "Unique Words", "Total 3-grams", "Total Words")
    body = [(s.corpus_id, s.total_characters, s.characters_analysed, s.unique_3grams,
             s.unique_words, f"{s.total_3grams / 1e6:.2f} m", f"{s.total_words / 1e6:.2f} m")
            for s in summaries]
    widths = [max(len(str(r[i])) for r in [head, *body]) for i in range(len(head))]
    lines = ["  ".join(str(v).rjust(w) for v, w in zip(r, widths)) for r in [head, *body]]
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------------ export


def _cell(value, precision: str) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value) if precision == "full" else format(value, ".6g")
    return str(value)


def _meta_line(metadata: Optional[dict]) -> str:
    if not metadata:
        return ""
    return "# " + json.dumps(metadata, sort_keys=True, ensure_ascii=False) + "\r\n"


def rows_to_csv(rows: Sequence[AnalysisRow], precision: str = "6g", metadata: Optional[dict] = None) -> str:
    buf = io.StringIO()
    buf.write(_meta_line(metadata))
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(COLUMNS)
    for r in rows:
        writer.writerow([_cell(v, precision) for v in astuple(r)])
    return buf.getvalue()


def rows_to_jsonl(rows: Sequence[AnalysisRow], precision: str = "full", metadata: Optional[dict] = None) -> str:
    lines = []
    if metadata:
        lines.append(json.dumps({"_meta": metadata}, sort_keys=True, ensure_ascii=False))
    for r in rows:
        d = dict(zip(COLUMNS, astuple(r)))
        if precision != "full":
            d = {k: float(format(v, ".6g")) if isinstance(v, float) else v for k, v in d.items()}
        lines.append(json.dumps(d, ensure_ascii=False))
    return "".join(line + "\n" for line in lines)


def export_rows(rows: Sequence[AnalysisRow], path: Union[str, Path], fmt: str = "csv",
                precision: Optional[str] = None, metadata: Optional[dict] = None) -> Path:
    path = Path(path)
    if fmt == "csv":
        data = rows_to_csv(rows, precision or "6g", metadata)
    elif fmt == "jsonl":
        data = rows_to_jsonl(rows, precision or "full", metadata)
    else:
        raise ValueError(f"unknown export format {fmt!r}")
    atomic_write(path, data)
    return path


def _parse(col: str, text: str):
    if col in _STR_COLUMNS:
        return text
    if text == "":
        return None
    return int(text) if col in _INT_COLUMNS else float(text)


def read_rows(path: Union[str, Path]) -> list[AnalysisRow]:
    path = Path(path)
    text = path.read_text("utf-8")
    if path.suffix == ".jsonl":
        out = []
        for line in text.splitlines():
            d = json.loads(line)
            if "_meta" not in d:
                out.append(AnalysisRow(**d))
        return out
    lines = [ln for ln in text.splitlines(keepends=True) if not ln.startswith("#")]
    reader = csv.DictReader(io.StringIO("".join(lines)))
    return [AnalysisRow(**{c: _parse(c, rec[c]) for c in COLUMNS}) for rec in reader]


# --------------------------------------------------------------- plot data


def binned_median_trend(xs: Sequence[float], ys: Sequence[float], bins: int = TREND_BINS) -> list[dict]:
    """Medians of x and y within equal-count bins along x."""
    pairs = sorted(zip(xs, ys))
    if not pairs:
        return []
    arr = np.asarray(pairs, dtype=float)
    out = []
    for i, chunk in enumerate(np.array_split(arr, min(bins, len(arr)))):
        out.append({"bin": i, "n": len(chunk), "x_median": float(np.median(chunk[:, 0])),
                    "y_median": float(np.median(chunk[:, 1]))})
    return out


def distribution_summary(values: Sequence[float]) -> dict:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return {"n": 0}
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    fence = q3 + OUTLIER_IQR * (q3 - q1)
    return {"n": int(v.size), "min": float(v.min()), "q1": float(q1), "median": float(med),
            "q3": float(q3), "max": float(v.max()), "iqr": float(q3 - q1),
            "upper_fence": float(fence), "n_outliers": int(np.sum(v > fence))}


def _trend_rows(rows: Sequence[AnalysisRow], x_of, series_genders: Sequence[str]) -> list[dict]:
    out = []
    for g in series_genders:
        sub = [r for r in rows if r.gender == g]
        for b in binned_median_trend([x_of(r) for r in sub], [r.distinctiveness for r in sub]):
            out.append({"series": g, **b})
    for b in binned_median_trend([x_of(r) for r in rows], [r.baseline for r in rows]):
        out.append({"series": "baseline", **b})
    return out


def emit_plot_data(rows: Sequence[AnalysisRow]) -> dict[str, list[dict]]:
    """Tables behind the dialogue-share, year and gender-distribution figures.

    Keys are ``<corpus>/<panel>``; values are lists of flat records.
    """
    genders = ("female", "male", "unknown")
    by_corpus: dict[str, list[AnalysisRow]] = defaultdict(list)
    for r in rows:
        by_corpus[r.corpus_id].append(r)
    bundle: dict[str, list[dict]] = {}
    for corpus in sorted(by_corpus):
        crow = sorted(by_corpus[corpus], key=lambda r: r.key)
        bundle[f"{corpus}/share_scatter"] = [
            {"play_id": r.play_id, "character_id": r.character_id, "gender": r.gender,
             "dialogue_share": r.dialogue_share, "distinctiveness": r.distinctiveness,
             "baseline": r.baseline} for r in crow]
        bundle[f"{corpus}/share_trend"] = _trend_rows(crow, lambda r: r.dialogue_share, genders)
        dated = [r for r in crow if r.year_composed is not None]
        bundle[f"{corpus}/year_scatter"] = [
            {"play_id": r.play_id, "character_id": r.character_id, "gender": r.gender,
             "year_composed": r.year_composed, "distinctiveness": r.distinctiveness,
             "baseline": r.baseline} for r in dated]
        bundle[f"{corpus}/year_trend"] = _trend_rows(dated, lambda r: float(r.year_composed), genders)
        dist = []
        for feature in ("dialogue_share", "distinctiveness", "ngram_vocab_size"):
            for g in genders:
                vals = [getattr(r, feature) for r in crow if r.gender == g]
                dist.append({"feature": feature, "gender": g, **distribution_summary(vals)})
        bundle[f"{corpus}/gender_distribution"] = dist
    return bundle


def _records_csv(records: Sequence[dict]) -> str:
    buf = io.StringIO()
    if records:
        cols = list(dict.fromkeys(k for rec in records for k in rec))
        writer = csv.DictWriter(buf, fieldnames=cols, lineterminator="\r\n")
        writer.writeheader()
        for rec in records:
            writer.writerow({k: _cell(rec.get(k), "6g") for k in cols})
    return buf.getvalue()


def write_plot_bundle(bundle: Mapping[str, list[dict]], out_dir: Union[str, Path],
                      metadata: Optional[dict] = None) -> Path:
    out_dir = Path(out_dir)
    manifest = {"panels": {}, "metadata": metadata or {},
                "trend": f"{TREND_BINS}-bin equal-count medians",
                "outlier_fence": f"Q3 + {OUTLIER_IQR:g} * IQR"}
    for name, records in sorted(bundle.items()):
        fname = name.replace("/", "__") + ".csv"
        atomic_write(out_dir / fname, _records_csv(records))
        manifest["panels"][name] = {"file": fname, "rows": len(records)}
    path = out_dir / "manifest.json"
    atomic_write(path, json.dumps(manifest, indent=1, sort_keys=True, ensure_ascii=False) + "\n")
    return path


# ------------------------------------------------------------- model matrix


def model_matrix(rows: Sequence[AnalysisRow]) -> tuple[list[dict], int]:
    """Records for ``log(D) ~ G * T + T*(S + I(S^2)) + (1|P)``.

    Unknown-gender rows are excluded; rows with D = 0 are dropped and counted.
    """
    out, dropped = [], 0
    for r in rows:
        if r.gender not in ("female", "male"):
            continue
        if not r.distinctiveness > 0:
            dropped += 1
            continue
        out.append({"log_D": math.log(r.distinctiveness), "G": r.gender, "T": r.corpus_id,
                    "S": r.dialogue_share, "S²": r.dialogue_share ** 2, "P": r.play_id})
    if dropped:
        log.warning("model matrix: dropped %d rows with D = 0", dropped)
    return out, dropped


def export_model_matrix(rows: Sequence[AnalysisRow], path: Union[str, Path]) -> int:
    """Write the model matrix as CSV at full precision; returns the number of D = 0 rows dropped."""
    records, dropped = model_matrix(rows)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(MODEL_COLUMNS)
    for rec in records:
        writer.writerow([_cell(rec[c], "full") for c in MODEL_COLUMNS])
    atomic_write(Path(path), buf.getvalue())
    return dropped
