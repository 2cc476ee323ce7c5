"""Corpus acquisition: DraCor API client, TEI-XML parsing and a raw payload cache.

Both routes end in :class:`PlayDocument` records holding, per character, the
ordered spoken utterances with stage directions removed.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import tempfile
import threading
import time
import xml.etree.ElementTree as ET
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from functools import cached_property
from pathlib import Path
from typing import Callable, Iterable, Optional, Union

import requests

from .text import utterance_tokens

log = logging.getLogger(__name__)

GENDERS = ("female", "male", "unknown")
DEFAULT_API = "https://dracor.org/api/v1"
REMOTE, LOCAL = "remote_api", "local_directory"

# Elements whose text is never spoken.
_SKIP = {"speaker", "stage", "note", "castList", "figDesc"}
# Elements that separate words even without surrounding whitespace.
_BLOCK = {"p", "l", "lg", "ab", "lb", "seg"}
_XML_ID = "{http://www.w3.org/XML/1998/namespace}id"
_YEAR = re.compile(r"^-?\d{1,4}")


class IngestError(Exception):
    pass


class FetchError(IngestError):
    """The source could not be reached; retrying later may succeed."""

    retryable = True

    def __init__(self, message: str, url: str = "", status: Optional[int] = None):
        super().__init__(message)
        self.url = url
        self.status = status


class TEIParseError(IngestError):
    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + where)
        self.line = line
        self.column = column


@dataclass(frozen=True)
class CorpusDescriptor:
    corpus_id: str
    source: str = REMOTE
    base_locator: str = DEFAULT_API

    def __post_init__(self):
        if not self.corpus_id:
            raise ValueError("corpus_id must be non-empty")
        if self.source not in (REMOTE, LOCAL):
            raise ValueError(f"source must be {REMOTE!r} or {LOCAL!r}, got {self.source!r}")


@dataclass(frozen=True)
class CharacterSpeech:
    character_id: str
    gender: str
    utterances: tuple[str, ...] = ()

    def __post_init__(self):
        if self.gender not in GENDERS:
            raise ValueError(f"gender must be one of {GENDERS}, got {self.gender!r}")

    @cached_property
    def word_count(self) -> int:
        return utterance_tokens(self.utterances).total

    def to_dict(self) -> dict:
        return {"id": self.character_id, "gender": self.gender, "utterances": list(self.utterances)}


@dataclass(frozen=True)
class PlayDocument:
    corpus_id: str
    play_id: str
    title: str
    author: str
    year_composed: Optional[int]
    characters: tuple[CharacterSpeech, ...] = field(default=())

    def __post_init__(self):
        ids = [c.character_id for c in self.characters]
        if len(set(ids)) != len(ids):
            dup = next(i for i in ids if ids.count(i) > 1)
            raise IngestError(f"{self.play_id}: duplicate character id {dup!r}")

    @property
    def total_words(self) -> int:
        return sum(c.word_count for c in self.characters)

    def character(self, character_id: str) -> CharacterSpeech:
        for c in self.characters:
            if c.character_id == character_id:
                return c
        raise KeyError(character_id)

    def to_dict(self) -> dict:
        return {
            "corpus": self.corpus_id,
            "id": self.play_id,
            "title": self.title,
            "author": self.author,
            "year": self.year_composed,
            "characters": [c.to_dict() for c in self.characters],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "PlayDocument":
        return cls(
            corpus_id=d["corpus"],
            play_id=d["id"],
            title=d.get("title", ""),
            author=d.get("author", ""),
            year_composed=d.get("year"),
            characters=tuple(
                CharacterSpeech(c["id"], c["gender"], tuple(c["utterances"])) for c in d["characters"]
            ),
        )


class IngestionReport:
    """Warnings and errors gathered during ingestion, written as JSON lines."""

    def __init__(self):
        self.events: list[dict] = []
        self._lock = threading.Lock()

    def add(self, level: str, kind: str, corpus: str = "", play: str = "", **detail) -> None:
        event = {"level": level, "kind": kind, "corpus": corpus, "play": play, **detail}
        with self._lock:
            self.events.append(event)
        getattr(log, "error" if level == "error" else "warning" if level == "warning" else "info")(
            "%s %s/%s %s", kind, corpus, play, detail or ""
        )

    def count(self, level: Optional[str] = None, kind: Optional[str] = None) -> int:
        return sum(
            1 for e in self.events
            if (level is None or e["level"] == level) and (kind is None or e["kind"] == kind)
        )

    def to_ndjson(self) -> str:
        return "".join(json.dumps(e, ensure_ascii=False, sort_keys=True) + "\n" for e in self.events)

    def write(self, path: Union[str, Path]) -> None:
        atomic_write(Path(path), self.to_ndjson())


def atomic_write(path: Path, data: Union[str, bytes]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data.encode("utf-8") if isinstance(data, str) else data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# --------------------------------------------------------------------------- TEI


def _local(tag) -> str:
    return tag.rsplit("}", 1)[-1] if isinstance(tag, str) else ""


def _squash(text: str) -> str:
    return " ".join(text.split())


def _spoken_parts(node: ET.Element, out: list[str]) -> None:
    name = _local(node.tag)
    if name in _SKIP:
        return
    block = name in _BLOCK
    if block:
        out.append(" ")
    if node.text:
        out.append(node.text)
    for child in node:
        _spoken_parts(child, out)
        if child.tail:
            out.append(child.tail)
    if block:
        out.append(" ")


def _spoken_text(sp: ET.Element) -> str:
    parts: list[str] = []
    _spoken_parts(sp, parts)
    return _squash("".join(parts))


def _gender_of(value: Optional[str]) -> str:
    v = (value or "").strip().lower()
    return v if v in ("female", "male") else "unknown"


def _year_of(el: ET.Element) -> Optional[int]:
    for attr in ("when", "notBefore", "notAfter"):
        m = _YEAR.match(el.get(attr, "").strip())
        if m:
            return int(m.group())
    m = _YEAR.match((el.text or "").strip())
    return int(m.group()) if m else None


def normalized_year(written: Optional[int], premiere: Optional[int], printed: Optional[int]) -> Optional[int]:
    """DraCor's year convention: earliest of premiere/print, unless written >10 years before."""
    known = [y for y in (premiere, printed) if y is not None]
    public = min(known) if known else None
    if written is not None and public is not None:
        return written if public - written > 10 else public
    return written if written is not None else public


def _play_years(root: ET.Element) -> Optional[int]:
    years: dict[str, int] = {}
    for el in root.iter():
        if _local(el.tag) in ("event", "date") and el.get("type") in ("written", "premiere", "print"):
            y = _year_of(el)
            if y is not None and el.get("type") not in years:
                years[el.get("type")] = y
    return normalized_year(years.get("written"), years.get("premiere"), years.get("print"))


def _first(root: ET.Element, name: str, pred: Callable[[ET.Element], bool] = lambda e: True):
    return next((e for e in root.iter() if _local(e.tag) == name and pred(e)), None)


def parse_tei(
    xml_text: Union[str, bytes],
    corpus_id: str = "",
    play_id: Optional[str] = None,
    report: Optional[IngestionReport] = None,
) -> PlayDocument:
    """Parse one TEI-encoded play.

    Each ``<sp>`` becomes one utterance of its speaker.  Characters declared in
    ``particDesc`` are kept even when silent; speakers referenced but never
    declared are synthesised with unknown gender and reported.  A speech with
    several ``who`` references is credited to a compound character
    ``"a+b"`` of unknown gender.
    """
    try:
        root = ET.fromstring(xml_text)
    except ET.ParseError as exc:
        line, col = exc.position
        raise TEIParseError(f"ill-formed XML: {exc}", line, col) from None

    header = _first(root, "teiHeader")
    title_stmt = _first(header, "titleStmt") if header is not None else None
    title, author = "", ""
    if title_stmt is not None:
        main = _first(title_stmt, "title", lambda e: e.get("type") == "main")
        if main is None:
            main = _first(title_stmt, "title")
        title = _squash("".join(main.itertext())) if main is not None else ""
        auth = _first(title_stmt, "author")
        if auth is not None:
            name = _first(auth, "persName")
            author = _squash("".join((name if name is not None else auth).itertext()))
    if play_id is None:
        idno = _first(root, "idno", lambda e: e.get("type") == "dracor")
        play_id = (idno.text or "").strip() if idno is not None else root.get(_XML_ID, "")
        play_id = play_id or "play"
    report = report if report is not None else IngestionReport()

    declared: dict[str, str] = {}
    for el in root.iter():
        name = _local(el.tag)
        if name in ("person", "personGrp") and el.get(_XML_ID):
            if name == "personGrp":
                declared[el.get(_XML_ID)] = "unknown"
            else:
                declared[el.get(_XML_ID)] = _gender_of(el.get("sex") or el.get("gender"))

    utterances: dict[str, list[str]] = {cid: [] for cid in declared}
    genders = dict(declared)
    bodies = [e for e in root.iter() if _local(e.tag) == "body"] or [root]
    for body in bodies:
        for sp in body.iter():
            if _local(sp.tag) != "sp":
                continue
            refs = [r.lstrip("#") for r in sp.get("who", "").split() if r.lstrip("#")]
            if not refs:
                label = _first(sp, "speaker")
                slug = "_".join((_squash("".join(label.itertext())) if label is not None else "").lower().split())
                refs = [slug or "unattributed"]
                report.add("warning", "missing_who", corpus_id, play_id, speaker=refs[0])
            for r in refs:
                if r not in genders:
                    genders[r] = "unknown"
                    utterances[r] = []
                    report.add("warning", "undeclared_speaker", corpus_id, play_id, speaker=r)
            cid = refs[0] if len(refs) == 1 else "+".join(refs)
            if cid not in genders:
                genders[cid] = "unknown"
                utterances[cid] = []
                report.add("info", "compound_speaker", corpus_id, play_id, speaker=cid)
            text = _spoken_text(sp)
            if text:
                utterances[cid].append(text)

    if not utterances:
        raise TEIParseError(f"{play_id}: no characters declared or speaking")
    chars = tuple(CharacterSpeech(cid, genders[cid], tuple(u)) for cid, u in utterances.items())
    return PlayDocument(corpus_id, play_id, title, author, _play_years(root), chars)


# ------------------------------------------------------------------ DraCor JSON


def _api_gender(entry: dict) -> str:
    if entry.get("isGroup"):
        return "unknown"
    return _gender_of(entry.get("gender"))


def play_from_spoken_text(corpus_id: str, meta: dict, payload: list) -> PlayDocument:
    """Build a play from a corpus-index entry and its spoken-text-by-character payload."""
    if not isinstance(payload, list):
        raise IngestError(f"{meta.get('name')}: spoken-text payload is not a list")
    chars = []
    for entry in payload:
        texts = entry.get("text") or []
        if isinstance(texts, str):
            texts = [texts]
        utts = tuple(t for t in (_squash(x) for x in texts) if t)
        chars.append(CharacterSpeech(str(entry["id"]), _api_gender(entry), utts))
    if not chars:
        raise IngestError(f"{meta.get('name')}: no characters in spoken-text payload")
    return _with_meta(corpus_id, meta, tuple(chars))


def _with_meta(corpus_id: str, meta: dict, chars: tuple) -> PlayDocument:
    authors = meta.get("authors") or []
    author = authors[0].get("name", "") if authors else (meta.get("author") or {}).get("name", "")
    year = meta.get("yearNormalized")
    return PlayDocument(
        corpus_id=corpus_id,
        play_id=str(meta["name"]),
        title=meta.get("title") or "",
        author=author or "",
        year_composed=int(year) if year not in (None, "") else None,
        characters=chars,
    )


# ----------------------------------------------------------------- cache/client


class PayloadCache:
    """Verbatim payloads under ``root/<corpus>/`` plus a retrieval manifest.

    Writes are serialised per key; the manifest has its own lock.
    """

    def __init__(self, root: Union[str, Path]):
        self.root = Path(root)
        self._locks: dict[tuple[str, str], threading.Lock] = {}
        self._guard = threading.Lock()

    def path(self, corpus: str, key: str) -> Path:
        return self.root / corpus / key

    def _lock(self, corpus: str, key: str) -> threading.Lock:
        with self._guard:
            return self._locks.setdefault((corpus, key), threading.Lock())

    def get_or_fetch(self, corpus: str, key: str, fetch: Callable[[], tuple[bytes, str]]) -> bytes:
        path = self.path(corpus, key)
        with self._lock(corpus, key):
            if path.exists():
                return path.read_bytes()
            data, url = fetch()
            atomic_write(path, data)
        self._record(corpus, key, url, data)
        return data

    def _record(self, corpus: str, key: str, url: str, data: bytes) -> None:
        with self._lock(corpus, "manifest.json"):
            mpath = self.path(corpus, "manifest.json")
            manifest = json.loads(mpath.read_text("utf-8")) if mpath.exists() else {}
            manifest[key] = {
                "url": url,
                "retrieved_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
                "sha256": hashlib.sha256(data).hexdigest(),
                "bytes": len(data),
            }
            atomic_write(mpath, json.dumps(manifest, indent=1, sort_keys=True))


class DraCorClient:
    def __init__(self, base_url: str = DEFAULT_API, retries: int = 3, backoff: float = 1.0,
                 timeout: float = 60.0, session: Optional[requests.Session] = None):
        self.base_url = base_url.rstrip("/")
        self.retries = retries
        self.backoff = backoff
        self.timeout = timeout
        self.session = session or requests.Session()

    def get(self, path: str, accept: str = "application/json") -> tuple[bytes, str]:
        url = f"{self.base_url}/{path.lstrip('/')}"
        last: Optional[Exception] = None
        for attempt in range(self.retries):
            try:
                resp = self.session.get(url, headers={"Accept": accept}, timeout=self.timeout)
            except requests.RequestException as exc:
                last = exc
            else:
                if resp.status_code == 200:
                    return resp.content, url
                if resp.status_code < 500 and resp.status_code != 429:
                    raise FetchError(f"GET {url} -> HTTP {resp.status_code}", url, resp.status_code)
                last = FetchError(f"GET {url} -> HTTP {resp.status_code}", url, resp.status_code)
            if attempt + 1 < self.retries:
                time.sleep(self.backoff * 2**attempt)
        raise FetchError(f"GET {url} failed after {self.retries} attempts: {last}", url)

    def corpus_index(self, corpus: str) -> tuple[bytes, str]:
        return self.get(f"corpora/{corpus}")

    def spoken_text(self, corpus: str, play: str) -> tuple[bytes, str]:
        return self.get(f"corpora/{corpus}/plays/{play}/spoken-text-by-character")

    def tei(self, corpus: str, play: str) -> tuple[bytes, str]:
        return self.get(f"corpora/{corpus}/plays/{play}/tei", accept="application/xml")


def _fetch_remote_play(corpus: str, meta: dict, client: DraCorClient, cache: PayloadCache,
                       report: IngestionReport) -> PlayDocument:
    name = str(meta["name"])
    try:
        raw = cache.get_or_fetch(corpus, f"plays/{name}.spoken-text.json",
                                 lambda: client.spoken_text(corpus, name))
        return play_from_spoken_text(corpus, meta, json.loads(raw))
    except (FetchError, IngestError, ValueError, KeyError) as exc:
        report.add("warning", "spoken_text_fallback", corpus, name, reason=str(exc))
    raw = cache.get_or_fetch(corpus, f"plays/{name}.tei.xml", lambda: client.tei(corpus, name))
    tei = parse_tei(raw, corpus, name, report)
    return _with_meta(corpus, meta, tei.characters)


def fetch_corpus(
    descriptor: CorpusDescriptor,
    cache_dir: Union[str, Path, None] = None,
    report: Optional[IngestionReport] = None,
    workers: int = 4,
    client: Optional[DraCorClient] = None,
) -> list[PlayDocument]:
    """All plays of one corpus, sorted by play id.

    Unparseable plays are logged to ``report`` and skipped; only an unreachable
    corpus index raises :class:`FetchError`.
    """
    report = report if report is not None else IngestionReport()
    corpus = descriptor.corpus_id
    if descriptor.source == LOCAL:
        plays = _read_local(descriptor, report)
    else:
        if cache_dir is None:
            raise ValueError("remote corpora need a cache directory")
        cache = PayloadCache(cache_dir)
        client = client or DraCorClient(descriptor.base_locator)
        index = json.loads(cache.get_or_fetch(corpus, "index.json", lambda: client.corpus_index(corpus)))
        metas = sorted(index.get("plays", []), key=lambda m: str(m["name"]))

        def one(meta):
            try:
                return _fetch_remote_play(corpus, meta, client, cache, report)
            except (IngestError, ValueError, KeyError) as exc:
                report.add("error", "play_failed", corpus, str(meta.get("name")), reason=str(exc))
                return None

        with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
            plays = [p for p in pool.map(one, metas) if p is not None]
    if not plays:
        report.add("warning", "empty_corpus", corpus, plays=0)
    return plays


def _read_local(descriptor: CorpusDescriptor, report: IngestionReport) -> list[PlayDocument]:
    root = Path(descriptor.base_locator)
    if not root.is_dir():
        raise FetchError(f"corpus directory {root} does not exist", str(root))
    plays = []
    for path in sorted(root.glob("*.xml")):
        try:
            plays.append(parse_tei(path.read_bytes(), descriptor.corpus_id, path.stem, report))
        except IngestError as exc:
            report.add("error", "play_failed", descriptor.corpus_id, path.stem, reason=str(exc))
    return plays


def load_corpora(descriptors: Iterable[CorpusDescriptor], cache_dir=None, report=None,
                 workers: int = 4) -> list[PlayDocument]:
    plays: list[PlayDocument] = []
    for d in descriptors:
        plays.extend(fetch_corpus(d, cache_dir, report, workers))
    return plays
