"""Per-year mode countries, migration events and the six mobility types."""

from __future__ import annotations

import csv
from collections import Counter, defaultdict
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .ingest import AuthorshipRecord, group_by_author


class MobilityError(ValueError):
    pass


class MobilityType(str, Enum):
    SINGLE_PAPER = "SinglePaperAuthor"
    NON_MOVER = "NonMover"
    IMMIGRANT = "Immigrant"
    EMIGRANT = "Emigrant"
    RETURN_MIGRANT = "ReturnMigrant"
    TRANSIENT = "Transient"

    def __str__(self) -> str:
        return self.value


MOBILE_TYPES = frozenset({MobilityType.IMMIGRANT, MobilityType.EMIGRANT,
                          MobilityType.RETURN_MIGRANT, MobilityType.TRANSIENT})


@dataclass(frozen=True)
class YearCountryProfile:
    researcher_id: str
    modes: dict[int, frozenset[str]]

    @property
    def years(self) -> list[int]:
        return sorted(self.modes)

    @property
    def first_year(self) -> int:
        return min(self.modes)

    @property
    def last_year(self) -> int:
        return max(self.modes)

    def countries(self) -> set[str]:
        out: set[str] = set()
        for s in self.modes.values():
            out |= s
        return out


@dataclass(frozen=True)
class MigrationEvent:
    researcher_id: str
    year: int
    origin: str
    destination: str


@dataclass(frozen=True)
class MobilityClassification:
    researcher_id: str
    mobility_type: MobilityType
    academic_origin: str | None
    academic_destination: str | None


def representative(countries: Iterable[str]) -> str:
    return min(countries)


def mode_countries_by_year(records: Sequence[AuthorshipRecord],
                           researcher_id: str | None = None) -> YearCountryProfile:
    if researcher_id is None:
        ids = {r.author_id for r in records}
        if len(ids) != 1:
            raise MobilityError("records must belong to exactly one researcher")
        researcher_id = ids.pop()
    per_year: dict[int, Counter] = defaultdict(Counter)
    for r in records:
        if r.country is not None:
            per_year[r.year][r.country] += 1
    if not per_year:
        raise MobilityError(f"{researcher_id}: no records with a country")
    modes = {}
    for year, counts in per_year.items():
        top = max(counts.values())
        modes[year] = frozenset(c for c, k in counts.items() if k == top)
    return YearCountryProfile(researcher_id, dict(sorted(modes.items())))


def detect_migration_events(p: YearCountryProfile) -> list[MigrationEvent]:
    """Emit an event when the surviving anchor set disappears from a year's modes.

    The anchor starts as the first year's mode set, narrows to its
    intersection with each later mode set, and is replaced (with an
    event) when that intersection is empty.
    """
    years = p.years
    anchor = p.modes[years[0]]
    events = []
    for y in years[1:]:
        m = p.modes[y]
        common = anchor & m
        if common:
            anchor = common
        else:
            events.append(MigrationEvent(p.researcher_id, y, representative(anchor), representative(m)))
            anchor = m
    return events


def academic_origin_destination(p: YearCountryProfile) -> tuple[str, str]:
    return representative(p.modes[p.first_year]), representative(p.modes[p.last_year])


def is_admitted(p: YearCountryProfile, focal: str = "DE") -> bool:
    return any(focal in s for s in p.modes.values())


def classify_mobility(records: Sequence[AuthorshipRecord], profile: YearCountryProfile,
                      events: Sequence[MigrationEvent], focal: str = "DE") -> MobilityClassification:
    if not is_admitted(profile, focal):
        raise MobilityError(f"{profile.researcher_id} never has {focal} as a mode country")
    o, d = academic_origin_destination(profile)
    rid = profile.researcher_id
    if len({r.publication_id for r in records}) == 1:
        return MobilityClassification(rid, MobilityType.SINGLE_PAPER, o, d)
    if profile.countries() == {focal}:
        return MobilityClassification(rid, MobilityType.NON_MOVER, o, d)
    if o != focal and d == focal:
        t = MobilityType.IMMIGRANT
    elif o == focal and d != focal:
        t = MobilityType.EMIGRANT
    elif o != focal and d != focal:
        t = MobilityType.TRANSIENT
    elif events:
        t = MobilityType.RETURN_MIGRANT
    else:
        # Focal at both ends, other countries only ever tied with it: no move.
        t = MobilityType.NON_MOVER
    return MobilityClassification(rid, t, o, d)


@dataclass
class MobilityResult:
    profiles: dict[str, YearCountryProfile]
    events: list[MigrationEvent]
    classes: list[MobilityClassification]
    n_unplaced: int = 0
    n_not_admitted: int = 0


def run_mobility(records: Iterable[AuthorshipRecord], focal: str = "DE") -> MobilityResult:
    """Profiles, events and classes for every admitted researcher.

    Researchers without any countried record, or never having the focal
    country as a mode, are counted and left out.
    """
    profiles, events, classes = {}, [], []
    unplaced = not_admitted = 0
    for rid, recs in group_by_author(records).items():
        if all(r.country is None for r in recs):
            unplaced += 1
            continue
        p = mode_countries_by_year(recs, rid)
        if not is_admitted(p, focal):
            not_admitted += 1
            continue
        ev = detect_migration_events(p)
        profiles[rid] = p
        events.extend(ev)
        classes.append(classify_mobility(recs, p, ev, focal))
    return MobilityResult(profiles, events, classes, unplaced, not_admitted)


# ---------------------------------------------------------------- files

EVENT_COLUMNS = ("researcher_id", "year", "origin", "destination")
CLASS_COLUMNS = ("researcher_id", "mobility_type", "origin", "destination")


def write_events(events: Iterable[MigrationEvent], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EVENT_COLUMNS)
        for e in sorted(events, key=lambda e: (e.researcher_id, e.year, e.origin, e.destination)):
            w.writerow([e.researcher_id, e.year, e.origin, e.destination])


def read_events(path: str | Path) -> list[MigrationEvent]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [MigrationEvent(r["researcher_id"], int(r["year"]), r["origin"], r["destination"])
                for r in csv.DictReader(fh)]


def write_classes(classes: Iterable[MobilityClassification], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CLASS_COLUMNS)
        for c in sorted(classes, key=lambda c: c.researcher_id):
            w.writerow([c.researcher_id, c.mobility_type.value, c.academic_origin or "",
                        c.academic_destination or ""])


def read_classes(path: str | Path) -> list[MobilityClassification]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [MobilityClassification(r["researcher_id"], MobilityType(r["mobility_type"]),
                                       r["origin"] or None, r["destination"] or None)
                for r in csv.DictReader(fh)]
