import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest
from hypothesis import given, strategies as st

from conftest import tei
from dramadist.ingest import (LOCAL, REMOTE, CharacterSpeech, CorpusDescriptor, DraCorClient,
                              FetchError, IngestionReport, PlayDocument, TEIParseError,
                              fetch_corpus, normalized_year, parse_tei, play_from_spoken_text)
from dramadist.text import utterance_tokens


class TestParseTei:
    def test_two_character_fixture(self, two_chars_xml):
        play = parse_tei(two_chars_xml, "tiny", "two_chars")
        assert play.title == "A Tiny Play"
        assert play.author == "Fixture, Author"
        assert play.year_composed == 1603  # print 1603, written 1599: gap <= 10 years
        assert [c.character_id for c in play.characters] == ["hamlet", "ophelia"]
        hamlet, ophelia = play.characters
        assert hamlet.gender == "male" and ophelia.gender == "female"
        assert hamlet.utterances == ("To be, or not to be", "I humbly thank you; well, well, well.")
        assert ophelia.utterances == ("Good my lord, how does your honour?",)
        assert (hamlet.word_count, ophelia.word_count) == (13, 7)

    def test_play_id_from_idno(self, two_chars_xml):
        assert parse_tei(two_chars_xml).play_id == "tiny000001"

    def test_to_be(self):
        doc = tei('<sp who="#a"><speaker>A</speaker><p>To be or not to be</p></sp>',
                  '<person xml:id="a" sex="MALE"/>')
        assert parse_tei(doc).character("a").word_count == 6

    def test_stage_direction_excluded(self):
        doc = tei('<sp who="#a"><p>Hello <stage>He bows deeply</stage> there</p></sp>',
                  '<person xml:id="a"/>')
        (ch,) = parse_tei(doc).characters
        assert ch.utterances == ("Hello there",)
        assert "bows" not in " ".join(ch.utterances)

    def test_same_speaker_twice(self):
        doc = tei('<sp who="#a"><p>one</p></sp><sp who="#b"><p>x</p></sp><sp who="#a"><p>two</p></sp>',
                  '<person xml:id="a"/><person xml:id="b"/>')
        assert parse_tei(doc).character("a").utterances == ("one", "two")

    def test_silent_characters_kept(self):
        doc = tei('<sp who="#a"><p>words</p></sp>', '<person xml:id="a"/><person xml:id="mute"/>')
        play = parse_tei(doc)
        assert play.character("mute").word_count == 0
        assert len(play.characters) == 2

    def test_group_and_gender_mapping(self):
        doc = tei('<sp who="#ch"><l>sing</l></sp>',
                  '<person xml:id="f" sex="FEMALE"/><person xml:id="m" sex="MALE"/>'
                  '<person xml:id="u" sex="UNKNOWN"/><person xml:id="n"/>'
                  '<personGrp xml:id="ch" sex="MALE"/>')
        genders = {c.character_id: c.gender for c in parse_tei(doc).characters}
        assert genders == {"f": "female", "m": "male", "u": "unknown", "n": "unknown", "ch": "unknown"}

    def test_undeclared_speaker_synthesised(self):
        report = IngestionReport()
        doc = tei('<sp who="#ghost"><p>boo</p></sp>', '<person xml:id="a"/>')
        play = parse_tei(doc, "c", "p", report)
        assert play.character("ghost").gender == "unknown"
        assert play.character("ghost").utterances == ("boo",)
        assert report.count(kind="undeclared_speaker") == 1

    def test_compound_speaker(self):
        report = IngestionReport()
        doc = tei('<sp who="#a #b"><p>together now</p></sp><sp who="#a"><p>alone</p></sp>',
                  '<person xml:id="a" sex="FEMALE"/><person xml:id="b" sex="MALE"/>')
        play = parse_tei(doc, report=report)
        assert play.character("a+b").utterances == ("together now",)
        assert play.character("a+b").gender == "unknown"
        assert play.character("b").word_count == 0
        assert report.count(kind="compound_speaker") == 1

    def test_block_elements_separate_words(self):
        doc = tei('<sp who="#a"><l>end</l><l>start</l><lg><l>x<lb/>y</l></lg></sp>', '<person xml:id="a"/>')
        assert parse_tei(doc).character("a").utterances == ("end start x y",)

    def test_ill_formed_xml_position(self):
        with pytest.raises(TEIParseError) as err:
            parse_tei("<TEI>\n  <text><body></text>\n</TEI>")
        assert err.value.line == 2
        assert err.value.column is not None

    def test_no_characters_is_error(self):
        with pytest.raises(TEIParseError):
            parse_tei(tei("<p>nothing spoken</p>"))

    def test_conservation(self, fixtures_dir):
        xml = (fixtures_dir.parent.parent / "src/dramadist/data/fixture/fix-alpha.xml").read_text("utf-8")
        play = parse_tei(xml)
        import xml.etree.ElementTree as ET

        ns = {"t": "http://www.tei-c.org/ns/1.0"}
        root = ET.fromstring(xml)
        spoken = []
        for sp in root.iterfind(".//t:body//t:sp", ns):
            for line in sp.iterfind("t:l", ns):
                spoken.append("".join(line.itertext()))
        assert play.total_words == utterance_tokens(spoken).total


@pytest.mark.parametrize(
    "written, premiere, printed, expected",
    [(None, None, None, None), (1600, None, None, 1600), (None, 1700, 1690, 1690),
     (1599, None, 1603, 1603), (1580, 1600, None, 1580), (1590, 1600, None, 1600)],
)
def test_normalized_year(written, premiere, printed, expected):
    assert normalized_year(written, premiere, printed) == expected


def test_year_missing_left_empty():
    assert parse_tei(tei('<sp who="#a"><p>x</p></sp>', '<person xml:id="a"/>')).year_composed is None


def test_word_count_law():
    ch = CharacterSpeech("a", "male", ("Ab, cd!", "", "e"))
    assert ch.word_count == 3


def test_gender_must_be_known():
    with pytest.raises(ValueError):
        CharacterSpeech("a", "m")


def test_duplicate_character_ids_rejected():
    with pytest.raises(Exception):
        PlayDocument("c", "p", "", "", None, (CharacterSpeech("a", "male"), CharacterSpeech("a", "female")))


@given(st.lists(st.tuples(st.sampled_from(["a", "b", "c"]), st.text(max_size=30)), max_size=8))
def test_json_round_trip(speeches):
    utts = {}
    for cid, text in speeches:
        utts.setdefault(cid, []).append(text)
    play = PlayDocument("c", "p", "T", "A", 1700,
                        tuple(CharacterSpeech(c, "unknown", tuple(u)) for c, u in utts.items()))
    again = PlayDocument.from_dict(json.loads(play.to_json()))
    assert again == play
    assert again.to_json() == play.to_json()


# ----------------------------------------------------------------- local corpora


def test_local_directory(tmp_path, fixtures_dir):
    (tmp_path / "two_chars.xml").write_text((fixtures_dir / "two_chars.xml").read_text("utf-8"), "utf-8")
    (tmp_path / "broken.xml").write_text("<TEI><oops></TEI>", "utf-8")
    report = IngestionReport()
    plays = fetch_corpus(CorpusDescriptor("tiny", LOCAL, str(tmp_path)), report=report)
    assert [p.play_id for p in plays] == ["two_chars"]
    assert len(plays[0].characters) == 2
    assert [c.word_count for c in plays[0].characters] == [13, 7]
    assert report.count("error", "play_failed") == 1
    line = json.loads(report.to_ndjson().splitlines()[0])
    assert line["play"] == "broken" and "line" in line["reason"]


def test_empty_local_directory(tmp_path):
    report = IngestionReport()
    assert fetch_corpus(CorpusDescriptor("none", LOCAL, str(tmp_path)), report=report) == []
    assert report.count(kind="empty_corpus") == 1
    assert json.loads(report.to_ndjson())["plays"] == 0


def test_missing_local_directory(tmp_path):
    with pytest.raises(FetchError):
        fetch_corpus(CorpusDescriptor("none", LOCAL, str(tmp_path / "nope")))


def test_descriptor_validation():
    with pytest.raises(ValueError):
        CorpusDescriptor("")
    with pytest.raises(ValueError):
        CorpusDescriptor("x", "ftp")


# ---------------------------------------------------------------- remote corpora


class FakeDraCor:
    """Serves DraCor-shaped routes from a dict and counts hits."""

    def __init__(self, routes):
        self.routes = routes
        self.hits = []
        fake = self

        class Handler(BaseHTTPRequestHandler):
            def do_GET(self):
                fake.hits.append(self.path)
                status, body, ctype = fake.routes.get(self.path, (404, b"not found", "text/plain"))
                self.send_response(status)
                self.send_header("Content-Type", ctype)
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def log_message(self, *args):
                pass

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    @property
    def url(self):
        return f"http://127.0.0.1:{self.server.server_port}/api/v1"

    def __enter__(self):
        self.thread.start()
        return self

    def __exit__(self, *exc):
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def dracor(fixtures_dir):
    xml = (fixtures_dir / "two_chars.xml").read_bytes()
    index = json.loads((fixtures_dir / "two_chars.index.json").read_text("utf-8"))
    index["plays"] += [{"name": "tei_only", "title": "A Tiny Play", "authors": [{"name": "Fixture, Author"}],
                        "yearNormalized": 1603},
                       {"name": "broken", "title": "Broken"}]
    j = "application/json"
    routes = {
        "/api/v1/corpora/tiny": (200, json.dumps(index).encode(), j),
        "/api/v1/corpora/tiny/plays/two_chars/spoken-text-by-character":
            (200, (fixtures_dir / "two_chars.spoken-text.json").read_bytes(), j),
        "/api/v1/corpora/tiny/plays/tei_only/tei": (200, xml, "application/xml"),
        "/api/v1/corpora/tiny/plays/broken/spoken-text-by-character": (200, b"{not json", j),
        "/api/v1/corpora/tiny/plays/broken/tei": (200, b"<TEI><unclosed></TEI>", "application/xml"),
    }
    with FakeDraCor(routes) as server:
        yield server


def _client(url):
    return DraCorClient(url, retries=2, backoff=0.01, timeout=5)


def test_remote_fetch_and_fallback(dracor, tmp_path):
    report = IngestionReport()
    desc = CorpusDescriptor("tiny", REMOTE, dracor.url)
    plays = fetch_corpus(desc, tmp_path, report, workers=3, client=_client(dracor.url))
    by_id = {p.play_id: p for p in plays}
    assert sorted(by_id) == ["tei_only", "two_chars"]
    assert report.count("error", "play_failed") == 1
    assert report.count(kind="spoken_text_fallback") == 2

    # both routes yield the same content for the same play
    api, via_tei = by_id["two_chars"], by_id["tei_only"]
    assert api.characters == via_tei.characters
    assert (api.title, api.author, api.year_composed) == (via_tei.title, via_tei.author, via_tei.year_composed)
    local = parse_tei((tmp_path / "tiny/plays/tei_only.tei.xml").read_bytes(), "tiny", "two_chars")
    assert local.to_json() == api.to_json()

    manifest = json.loads((tmp_path / "tiny/manifest.json").read_text("utf-8"))
    assert "index.json" in manifest and "plays/two_chars.spoken-text.json" in manifest
    assert all("retrieved_at" in v and "sha256" in v for v in manifest.values())


def test_remote_cache_is_offline_reproducible(dracor, tmp_path):
    desc = CorpusDescriptor("tiny", REMOTE, dracor.url)
    first = fetch_corpus(desc, tmp_path, client=_client(dracor.url))
    hits = len(dracor.hits)
    second = fetch_corpus(desc, tmp_path, client=_client(dracor.url))
    # cached payloads are never requested again; only misses are retried
    repeat = dracor.hits[hits:]
    assert not any(h.endswith(("/corpora/tiny", "two_chars/spoken-text-by-character", "tei_only/tei"))
                   for h in repeat)
    assert [p.to_json() for p in first] == [p.to_json() for p in second]


def test_unreachable_source_is_retryable(tmp_path):
    desc = CorpusDescriptor("tiny", REMOTE, "http://127.0.0.1:9/api/v1")
    with pytest.raises(FetchError) as err:
        fetch_corpus(desc, tmp_path, client=_client(desc.base_locator))
    assert err.value.retryable


def test_server_errors_are_retried(tmp_path):
    with FakeDraCor({"/api/v1/corpora/x": (503, b"busy", "text/plain")}) as server:
        with pytest.raises(FetchError) as err:
            _client(server.url).corpus_index("x")
        assert len(server.hits) == 2
    assert "after 2 attempts" in str(err.value)


def test_spoken_text_payload_mapping():
    meta = {"name": "p", "title": "T", "authors": [{"name": "A"}], "yearNormalized": "1650"}
    payload = [{"id": "x", "gender": "FEMALE", "text": ["  a  b ", ""]},
               {"id": "y", "gender": "MALE", "isGroup": True, "text": []}]
    play = play_from_spoken_text("c", meta, payload)
    assert play.year_composed == 1650
    assert play.characters[0].utterances == ("a b",)
    assert play.characters[1].gender == "unknown"
