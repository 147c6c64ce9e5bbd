"""Bundled ISO 3166-1 alpha-2 country table and name-variant lookup."""

from __future__ import annotations

import csv
from functools import lru_cache
from importlib import resources

from .textnorm import fold

# Variants seen in affiliation data that the ISO names do not cover.
_EXTRA_VARIANTS = {
    "UK": "GB",
    "England": "GB",
    "Scotland": "GB",
    "Wales": "GB",
    "Northern Ireland": "GB",
    "Great Britain": "GB",
    "Russia": "RU",
    "Deutschland": "DE",
    "Korea": "KR",
    "Republic of Korea": "KR",
    "The Netherlands": "NL",
    "Holland": "NL",
    "Czech Republic": "CZ",
    "Iran": "IR",
    "Vietnam": "VN",
    "Turkey": "TR",
    "Taiwan": "TW",
    "PR China": "CN",
    "P.R. China": "CN",
    "Hong Kong": "HK",
}


@lru_cache(maxsize=None)
def _table() -> tuple[dict[str, str], dict[str, str]]:
    names: dict[str, str] = {}
    lookup: dict[str, str] = {}
    text = resources.files("scholmig.data").joinpath("countries.csv").read_text("utf-8")
    for row in csv.DictReader(text.splitlines()):
        code = row["code"]
        names[code] = row["name"]
        lookup[_key(row["name"])] = code
        for v in filter(None, row["variants"].split("|")):
            lookup[_key(v)] = code
    for v, code in _EXTRA_VARIANTS.items():
        lookup[_key(v)] = code
    return names, lookup


def _key(s: str) -> str:
    return " ".join(fold(s).lower().replace(".", " ").replace(",", " ").split())


def is_valid_code(code: str | None) -> bool:
    return code is not None and code in _table()[0]


def country_name(code: str) -> str:
    """Canonical English short name for an alpha-2 code."""
    return _table()[0][code]


def all_codes() -> list[str]:
    return sorted(_table()[0])


def to_code(value: str | None) -> str | None:
    """Map a code or a known name variant to alpha-2.

    Returns the input unchanged (stripped) when it is not recognised, so
    validation can report it; returns None for empty input.
    """
    if value is None:
        return None
    value = value.strip()
    if not value:
        return None
    if value in _table()[0]:
        return value
    if len(value) == 2 and value.upper() in _table()[0]:
        return value.upper()
    return _table()[1].get(_key(value), value)
