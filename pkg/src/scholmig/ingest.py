"""Authorship-record data model, CSV/JSONL parsing and validation."""

from __future__ import annotations

import csv
import json
import logging
from collections import defaultdict
from dataclasses import asdict, dataclass, field, replace
from datetime import date
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import tomli

from . import countries
from .textnorm import fold

log = logging.getLogger(__name__)

COLUMNS = (
    "record_id", "author_id", "publication_id", "year", "affiliation_text",
    "country", "asjc_codes", "citation_count", "given_name", "surname",
    "coauthor_ids", "funding_texts", "grant_numbers",
)
# Optional trailing column written after country filling.
IMPUTED_COLUMN = "country_imputed"
_LIST_FIELDS = ("asjc_codes", "coauthor_ids", "funding_texts", "grant_numbers")

BAD_YEAR = "bad_year"
BAD_COUNTRY = "bad_country_code"
NEGATIVE_CITATIONS = "negative_citations"
EMPTY_SURNAME = "empty_surname"


class IngestError(ValueError):
    pass


@dataclass(frozen=True)
class AuthorshipRecord:
    record_id: str
    author_id: str
    publication_id: str
    year: int
    affiliation_text: str = ""
    country: str | None = None
    asjc_codes: tuple[int, ...] = ()
    citation_count: int = 0
    given_name: str = ""
    surname: str = ""
    coauthor_ids: tuple[str, ...] = ()
    funding_texts: tuple[str, ...] = ()
    grant_numbers: tuple[str, ...] = ()
    country_imputed: bool = False


@dataclass(frozen=True)
class RejectedRow:
    row: int
    reasons: tuple[str, ...]


@dataclass(frozen=True)
class Corpus:
    records: tuple[AuthorshipRecord, ...]
    window: tuple[int, int] = (1996, 2020)
    snapshot_date: date = date(2020, 4, 1)
    rejected: tuple[RejectedRow, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if self.window[0] > self.window[1]:
            raise IngestError(f"empty window {self.window}")

    def __len__(self) -> int:
        return len(self.records)

    def replace_records(self, records: Iterable[AuthorshipRecord]) -> "Corpus":
        return replace(self, records=tuple(records))


@dataclass(frozen=True)
class IngestConfig:
    start_year: int = 1996
    end_year: int = 2020
    strict: bool = False
    snapshot_date: date = date(2020, 4, 1)

    @property
    def window(self) -> tuple[int, int]:
        return (self.start_year, self.end_year)


def load_ingest_config(path: str | Path) -> IngestConfig:
    """Read ``window.start_year``, ``window.end_year``, ``strict``, ``snapshot_date`` from TOML."""
    with open(path, "rb") as fh:
        raw = tomli.load(fh)
    return ingest_config_from_dict(raw)


def ingest_config_from_dict(raw: dict) -> IngestConfig:
    window = raw.get("window", {})
    snap = raw.get("snapshot_date", IngestConfig.snapshot_date)
    if isinstance(snap, str):
        snap = date.fromisoformat(snap)
    return IngestConfig(
        start_year=int(window.get("start_year", IngestConfig.start_year)),
        end_year=int(window.get("end_year", IngestConfig.end_year)),
        strict=bool(raw.get("strict", False)),
        snapshot_date=snap,
    )


@dataclass(frozen=True)
class ValidationVerdict:
    violations: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_record(r: AuthorshipRecord, window: tuple[int, int]) -> ValidationVerdict:
    out = []
    if not window[0] <= r.year <= window[1]:
        out.append(BAD_YEAR)
    if r.country is not None and not countries.is_valid_code(r.country):
        out.append(BAD_COUNTRY)
    if r.citation_count < 0:
        out.append(NEGATIVE_CITATIONS)
    if not r.surname.strip():
        out.append(EMPTY_SURNAME)
    return ValidationVerdict(tuple(out))


def normalize_name(given: str) -> str:
    """Lookup key for a given-name field.

    Lowercases, folds diacritics, drops initials (one letter with an
    optional trailing period) and returns the first remaining token, or
    ``""`` if only initials were present.
    """
    tokens = given_tokens(given)
    for tok in tokens:
        if not _is_initial(tok):
            return tok
    return ""


def given_tokens(given: str) -> list[str]:
    text = fold(given.lower()).lower()
    return text.replace(",", " ").split()


def _is_initial(tok: str) -> bool:
    return (len(tok) == 1 and tok.isalpha()) or (len(tok) == 2 and tok[0].isalpha() and tok[1] == ".")


# ---------------------------------------------------------------- parsing

def _split_list(cell: str) -> tuple[str, ...]:
    if cell is None or cell == "":
        return ()
    return tuple(cell.split("|"))


def _as_list(value) -> tuple[str, ...]:
    if value is None or value == "":
        return ()
    if isinstance(value, str):
        return _split_list(value)
    return tuple(str(v) for v in value)


def _record_from_mapping(m: dict) -> AuthorshipRecord:
    country = m.get("country")
    country = countries.to_code(str(country)) if country not in (None, "") else None
    imputed = m.get(IMPUTED_COLUMN, False)
    if isinstance(imputed, str):
        imputed = imputed.strip().lower() in ("1", "true", "yes")
    return AuthorshipRecord(
        record_id=str(m["record_id"]),
        author_id=str(m["author_id"]),
        publication_id=str(m["publication_id"]),
        year=int(m["year"]),
        affiliation_text=m.get("affiliation_text") or "",
        country=country,
        asjc_codes=tuple(int(c) for c in _as_list(m.get("asjc_codes"))),
        citation_count=int(m.get("citation_count") or 0),
        given_name=m.get("given_name") or "",
        surname=m.get("surname") or "",
        coauthor_ids=_as_list(m.get("coauthor_ids")),
        funding_texts=_as_list(m.get("funding_texts")),
        grant_numbers=_as_list(m.get("grant_numbers")),
        country_imputed=bool(imputed),
    )


def _detect_format(path: Path) -> str:
    suffix = path.suffix.lower()
    if suffix == ".csv":
        return "csv"
    if suffix in (".jsonl", ".ndjson"):
        return "jsonl"
    with open(path, encoding="utf-8") as fh:
        head = fh.read(1)
    if head == "{":
        return "jsonl"
    raise IngestError(f"unknown corpus format: {path}")


def _iter_csv(path: Path) -> Iterator[tuple[int, dict | None, str | None]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestError(f"{path}: missing header") from None
        if tuple(header) not in (COLUMNS, COLUMNS + (IMPUTED_COLUMN,)):
            raise IngestError(f"{path}: unexpected header {header}")
        for row in reader:
            if not row:
                continue
            if len(row) != len(header):
                yield reader.line_num, None, f"expected {len(header)} fields, got {len(row)}"
                continue
            yield reader.line_num, dict(zip(header, row)), None


def _iter_jsonl(path: Path) -> Iterator[tuple[int, dict | None, str | None]]:
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                yield n, None, f"invalid json: {e.msg}"
                continue
            if not isinstance(obj, dict):
                yield n, None, "not an object"
                continue
            yield n, obj, None


def parse_corpus(path: str | Path, config: IngestConfig = IngestConfig()) -> Corpus:
    path = Path(path)
    if not path.is_file():
        raise IngestError(f"cannot read {path}")
    fmt = _detect_format(path)
    rows = _iter_csv(path) if fmt == "csv" else _iter_jsonl(path)

    records: list[AuthorshipRecord] = []
    rejected: list[RejectedRow] = []
    seen: set[str] = set()

    for n, mapping, err in rows:
        reasons: tuple[str, ...] = ()
        rec = None
        if err is not None:
            reasons = (err,)
        else:
            try:
                rec = _record_from_mapping(mapping)
            except (KeyError, ValueError, TypeError) as e:
                reasons = (f"unparseable field: {e}",)
        if rec is not None:
            reasons = validate_record(rec, config.window).violations
            if rec.record_id in seen:
                reasons += ("duplicate_record_id",)
        if reasons:
            if config.strict:
                raise IngestError(f"{path}: row {n}: {', '.join(reasons)}")
            rejected.append(RejectedRow(n, reasons))
            continue
        seen.add(rec.record_id)
        records.append(rec)

    if rejected:
        log.warning("%s: rejected %d malformed rows", path, len(rejected))
    return Corpus(tuple(records), config.window, config.snapshot_date, tuple(rejected))


def record_to_row(r: AuthorshipRecord, with_imputed: bool = False) -> list[str]:
    row = [
        r.record_id, r.author_id, r.publication_id, str(r.year), r.affiliation_text,
        r.country or "", "|".join(str(c) for c in r.asjc_codes), str(r.citation_count),
        r.given_name, r.surname, "|".join(r.coauthor_ids), "|".join(r.funding_texts),
        "|".join(r.grant_numbers),
    ]
    if with_imputed:
        row.append("1" if r.country_imputed else "0")
    return row


def write_corpus(corpus: Corpus | Sequence[AuthorshipRecord], path: str | Path,
                 with_imputed: bool | None = None) -> None:
    """Write records as CSV (or JSONL for a ``.jsonl`` path).

    The imputed-country column is written when any record carries the
    flag, unless ``with_imputed`` forces it on or off.
    """
    records = corpus.records if isinstance(corpus, Corpus) else tuple(corpus)
    if with_imputed is None:
        with_imputed = any(r.country_imputed for r in records)
    path = Path(path)
    if path.suffix.lower() in (".jsonl", ".ndjson"):
        with open(path, "w", encoding="utf-8") as fh:
            for r in records:
                d = asdict(r)
                if not with_imputed:
                    d.pop(IMPUTED_COLUMN)
                fh.write(json.dumps(d, ensure_ascii=False, sort_keys=False) + "\n")
        return
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS + ((IMPUTED_COLUMN,) if with_imputed else ()))
        for r in records:
            w.writerow(record_to_row(r, with_imputed))


def group_by_author(records: Iterable[AuthorshipRecord]) -> dict[str, list[AuthorshipRecord]]:
    """Records per author_id, keys sorted, input order kept within a group."""
    groups: dict[str, list[AuthorshipRecord]] = defaultdict(list)
    for r in records:
        groups[r.author_id].append(r)
    return {k: groups[k] for k in sorted(groups)}
