"""ASJC discipline assignment by Z-score and name-based gender inference."""

from __future__ import annotations

import csv
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .ingest import AuthorshipRecord, normalize_name
from .mobility import MOBILE_TYPES, MobilityClassification

log = logging.getLogger(__name__)

MULTIDISCIPLINARY = "Multidisciplinary"

HEALTH, LIFE, PHYSICAL, SOCIAL = "Health Sciences", "Life Sciences", "Physical Sciences", "Social Sciences"
FIELDS = (HEALTH, LIFE, PHYSICAL, SOCIAL)

# 2-digit ASJC prefix -> (discipline, field).  Prefix 10 (general
# multidisciplinary journals) carries no discipline and is ignored.
ASJC_DISCIPLINES: dict[int, tuple[str, str]] = {
    11: ("Agricultural and Biological Sciences", LIFE),
    12: ("Arts and Humanities", SOCIAL),
    13: ("Biochemistry, Genetics and Molecular Biology", LIFE),
    14: ("Business, Management and Accounting", SOCIAL),
    15: ("Chemical Engineering", PHYSICAL),
    16: ("Chemistry", PHYSICAL),
    17: ("Computer Science", PHYSICAL),
    18: ("Decision Sciences", SOCIAL),
    19: ("Earth and Planetary Sciences", PHYSICAL),
    20: ("Economics, Econometrics and Finance", SOCIAL),
    21: ("Energy", PHYSICAL),
    22: ("Engineering", PHYSICAL),
    23: ("Environmental Science", PHYSICAL),
    24: ("Immunology and Microbiology", LIFE),
    25: ("Materials Science", PHYSICAL),
    26: ("Mathematics", PHYSICAL),
    27: ("Medicine", HEALTH),
    28: ("Neuroscience", LIFE),
    29: ("Nursing", HEALTH),
    30: ("Pharmacology, Toxicology and Pharmaceutics", LIFE),
    31: ("Physics and Astronomy", PHYSICAL),
    32: ("Psychology", SOCIAL),
    33: ("Social Sciences", SOCIAL),
    34: ("Veterinary", HEALTH),
    35: ("Dentistry", HEALTH),
    36: ("Health Professions", HEALTH),
}
DISCIPLINES = tuple(d for d, _ in ASJC_DISCIPLINES.values())
DISCIPLINE_FIELD = {d: f for d, f in ASJC_DISCIPLINES.values()}


def discipline_of(code: int) -> str | None:
    entry = ASJC_DISCIPLINES.get(code // 100)
    return entry[0] if entry else None


def field_frequencies(records: Iterable[AuthorshipRecord]) -> dict[str, float]:
    """Share of ASJC code occurrences per discipline (empty if no usable codes)."""
    counts: Counter = Counter()
    ignored = 0
    for r in records:
        for c in r.asjc_codes:
            d = discipline_of(c)
            if d is None:
                ignored += 1
            else:
                counts[d] += 1
    if ignored:
        log.debug("ignored %d ASJC codes outside the taxonomy", ignored)
    total = sum(counts.values())
    return {d: counts[d] / total for d in DISCIPLINES if counts[d]} if total else {}


def to_field_level(freqs: Mapping[str, float]) -> dict[str, float]:
    out: dict[str, float] = {}
    for d, f in freqs.items():
        out[DISCIPLINE_FIELD[d]] = out.get(DISCIPLINE_FIELD[d], 0.0) + f
    return out


def population_stats(all_freqs: Sequence[Mapping[str, float]],
                     categories: Sequence[str] = DISCIPLINES) -> dict[str, tuple[float, float]]:
    """Mean and population std per category; researchers without codes excluded."""
    rows = [f for f in all_freqs if f]
    n = len(rows)
    stats = {}
    if n == 0:
        return stats
    for c in categories:
        vals = [f.get(c, 0.0) for f in rows]
        mean = math.fsum(vals) / n
        var = math.fsum((v - mean) ** 2 for v in vals) / n
        stats[c] = (mean, math.sqrt(var))
    return stats


def zscores(freqs: Mapping[str, float], stats: Mapping[str, tuple[float, float]]) -> dict[str, float]:
    out = {}
    for c, (mean, std) in stats.items():
        if std > 0:
            out[c] = (freqs.get(c, 0.0) - mean) / std
    return out


def pick_by_z(z: Mapping[str, float], order: Sequence[str], threshold: float = 1.0) -> str:
    best, best_z = MULTIDISCIPLINARY, -math.inf
    for c in order:
        if c in z and z[c] > best_z:
            best, best_z = c, z[c]
    return best if best_z > threshold else MULTIDISCIPLINARY


@dataclass(frozen=True)
class DisciplineAssignment:
    researcher_id: str
    field: str
    discipline: str
    z_scores: dict[str, float] = field(default_factory=dict, compare=False)


def assign_discipline(freqs: Mapping[str, float], population_stats: Mapping[str, tuple[float, float]],
                      threshold: float = 1.0, field_stats: Mapping[str, tuple[float, float]] | None = None,
                      researcher_id: str = "") -> DisciplineAssignment:
    if not freqs:
        return DisciplineAssignment(researcher_id, MULTIDISCIPLINARY, MULTIDISCIPLINARY, {})
    z = zscores(freqs, population_stats)
    discipline = pick_by_z(z, DISCIPLINES, threshold)
    fld = MULTIDISCIPLINARY
    if field_stats is not None:
        fld = pick_by_z(zscores(to_field_level(freqs), field_stats), FIELDS, threshold)
    return DisciplineAssignment(researcher_id, fld, discipline, z)


def assign_all(groups: Mapping[str, Sequence[AuthorshipRecord]],
               threshold: float = 1.0) -> dict[str, DisciplineAssignment]:
    """Discipline and field for each researcher against the whole population."""
    freqs = {rid: field_frequencies(recs) for rid, recs in groups.items()}
    d_stats = population_stats(list(freqs.values()), DISCIPLINES)
    f_stats = population_stats([to_field_level(f) for f in freqs.values()], FIELDS)
    for c, (_, s) in d_stats.items():
        if s == 0:
            log.debug("discipline %s has zero spread; skipped", c)
    return {rid: assign_discipline(f, d_stats, threshold, f_stats, rid) for rid, f in freqs.items()}


# ---------------------------------------------------------------- gender

MALE, FEMALE, UNKNOWN = "male", "female", "unknown"


@dataclass(frozen=True)
class NameEntry:
    gender: str
    probability: float
    count: int


NameGenderTable = dict[str, NameEntry]


def load_name_table(path: str | Path | None = None) -> NameGenderTable:
    """Read ``name,gender,probability,count`` rows; bundled table by default."""
    if path is None:
        text = resources.files("scholmig.data").joinpath("names.csv").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    table = {}
    for row in csv.DictReader(text.splitlines()):
        table[row["name"].strip().lower()] = NameEntry(
            row["gender"].strip().lower(), float(row["probability"]), int(row["count"]))
    return table


@dataclass(frozen=True)
class GenderRecord:
    researcher_id: str
    gender: str
    source: str


def infer_gender(given_name: str, table: NameGenderTable, p_min: float = 0.6, c_min: int = 5,
                 researcher_id: str = "") -> GenderRecord:
    entry = table.get(normalize_name(given_name))
    if entry is None or entry.probability < p_min or entry.count < c_min \
            or entry.gender not in (MALE, FEMALE):
        return GenderRecord(researcher_id, UNKNOWN, "unknown")
    return GenderRecord(researcher_id, entry.gender, "table")


def researcher_given_name(records: Sequence[AuthorshipRecord]) -> str:
    """Most frequent given-name spelling, preferring ones with a full name."""
    counts = Counter(r.given_name for r in records)
    full = [g for g in counts if normalize_name(g)]
    pool = full or list(counts)
    return max(sorted(pool), key=lambda g: counts[g]) if pool else ""


class _Undefined:
    def __repr__(self) -> str:
        return "UNDEFINED"


UNDEFINED = _Undefined()


def gender_ratio_by_discipline(classes: Iterable[MobilityClassification],
                               assignments: Mapping[str, DisciplineAssignment],
                               genders: Mapping[str, GenderRecord],
                               subset: str = "all") -> dict[str, object]:
    """Male-to-female ratio per discipline; ``UNDEFINED`` when no women."""
    if subset not in ("all", "migrants"):
        raise ValueError(f"unknown subset {subset!r}")
    male: Counter = Counter()
    female: Counter = Counter()
    for c in classes:
        if subset == "migrants" and c.mobility_type not in MOBILE_TYPES:
            continue
        a = assignments.get(c.researcher_id)
        g = genders.get(c.researcher_id)
        if a is None or g is None:
            continue
        if g.gender == MALE:
            male[a.discipline] += 1
        elif g.gender == FEMALE:
            female[a.discipline] += 1
    out: dict[str, object] = {}
    for d in sorted(set(male) | set(female)):
        out[d] = male[d] / female[d] if female[d] else UNDEFINED
    return out
