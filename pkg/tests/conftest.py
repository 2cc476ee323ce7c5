from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture
def two_chars_xml():
    return (FIXTURES / "two_chars.xml").read_text("utf-8")


def tei(body: str, people: str = "", header: str = "") -> str:
    """Minimal TEI document around a body fragment."""
    return f"""<TEI xmlns="http://www.tei-c.org/ns/1.0">
<teiHeader><fileDesc><titleStmt><title>T</title></titleStmt></fileDesc>
<profileDesc><particDesc><listPerson>{people}</listPerson></particDesc></profileDesc>{header}</teiHeader>
<text><body>{body}</body></text></TEI>"""


@pytest.fixture(scope="session")
def fixture_plays():
    from dramadist.cli import FIXTURE_DIR
    from dramadist.ingest import LOCAL, CorpusDescriptor, IngestionReport, load_corpora

    desc = CorpusDescriptor("fixture", LOCAL, str(FIXTURE_DIR / "fixture"))
    return load_corpora([desc], None, IngestionReport(), 1)


ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL/UNVERIFIED line for an acceptance criterion."""
    lines = request.config.stash.setdefault(ACCEPTANCE, [])

    def record(label: str, status, detail: str = "") -> None:
        if not isinstance(status, str):
            status = "PASS" if status else "FAIL"
        line = f"[{status}] {label}" + (f": {detail}" if detail else "")
        lines.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
