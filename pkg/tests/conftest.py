import functools

import pytest

from scholmig.ingest import AuthorshipRecord
from scholmig.synthgen import SynthSpec, generate_corpus

_counter = iter(range(10**9))


def rec(author="A1", year=2000, country="DE", pub=None, **kw) -> AuthorshipRecord:
    """Terse record factory; unique record and publication ids by default."""
    n = next(_counter)
    kw.setdefault("surname", "Mueller")
    return AuthorshipRecord(record_id=kw.pop("record_id", f"t{n}"), author_id=author,
                            publication_id=pub or f"p{n}", year=year, country=country, **kw)


@functools.lru_cache(maxsize=None)
def synth(**kw):
    return generate_corpus(SynthSpec(**kw))


@pytest.fixture(scope="session")
def clean_synth():
    """1,000 researchers, no ties, collisions or masking."""
    return synth(seed=42, n_researchers=1000)


@pytest.fixture(scope="session")
def messy_synth():
    return synth(seed=3, n_researchers=600, p_tie_year=0.25, n_id_collisions=20, n_prolific=2,
                 n_mask_country=100, p_empty_affiliation=0.01)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
