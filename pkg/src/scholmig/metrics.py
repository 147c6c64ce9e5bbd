"""Flows, net migration rates and citation performance."""

from __future__ import annotations

import math
from bisect import bisect_left, bisect_right
from collections import Counter, defaultdict
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np

from .ingest import AuthorshipRecord, Corpus
from .mobility import MOBILE_TYPES, MigrationEvent, MobilityClassification


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class FlowMatrix:
    period: tuple[int, int]
    counts: dict[tuple[str, str], int]

    def total(self) -> int:
        return sum(self.counts.values())


def aggregate_flows(events: Iterable[MigrationEvent], focal: str = "DE",
                    period: tuple[int, int] | None = None) -> tuple[FlowMatrix, FlowMatrix]:
    events = list(events)
    if period is None:
        years = [e.year for e in events]
        period = (min(years), max(years)) if years else (0, 0)
    inflow: Counter = Counter()
    outflow: Counter = Counter()
    for e in events:
        if not period[0] <= e.year <= period[1]:
            continue
        if e.destination == focal:
            inflow[(e.origin, focal)] += 1
        elif e.origin == focal:
            outflow[(focal, e.destination)] += 1
    return FlowMatrix(period, dict(sorted(inflow.items()))), FlowMatrix(period, dict(sorted(outflow.items())))


class ActivePopulation:
    """Distinct researchers with a focal-country record within +/- vicinity years.

    Built once per corpus; ``series`` answers many years in one pass.
    """

    def __init__(self, records: Iterable[AuthorshipRecord], focal: str = "DE", vicinity: int = 2):
        self.vicinity = vicinity
        years_by_researcher: dict[str, set[int]] = defaultdict(set)
        for r in records:
            if r.country == focal:
                years_by_researcher[r.author_id].add(r.year)
        self._years = {rid: sorted(ys) for rid, ys in years_by_researcher.items()}

    def __call__(self, year: int) -> int:
        v = self.vicinity
        n = 0
        for ys in self._years.values():
            if bisect_right(ys, year + v) > bisect_left(ys, year - v):
                n += 1
        return n

    def series(self, years: Iterable[int]) -> dict[int, int]:
        years = list(years)
        if not years:
            return {}
        lo, hi = min(years), max(years)
        diff = np.zeros(hi - lo + 2, dtype=np.int64)
        v = self.vicinity
        for ys in self._years.values():
            # Union of [y-v, y+v] intervals, clipped to [lo, hi].
            start = end = None
            for y in ys:
                a, b = y - v, y + v
                if start is None:
                    start, end = a, b
                elif a <= end + 1:
                    end = max(end, b)
                else:
                    _mark(diff, lo, hi, start, end)
                    start, end = a, b
            if start is not None:
                _mark(diff, lo, hi, start, end)
        counts = np.cumsum(diff)[:-1]
        return {y: int(counts[y - lo]) for y in years}


def _mark(diff, lo, hi, a, b):
    a, b = max(a, lo), min(b, hi)
    if a <= b:
        diff[a - lo] += 1
        diff[b - lo + 1] -= 1


def research_active_population(corpus: Corpus, focal: str = "DE", year: int = 0, vicinity: int = 2) -> int:
    if not corpus.window[0] <= year <= corpus.window[1]:
        raise MetricsError(f"year {year} outside corpus window {corpus.window}")
    return ActivePopulation(corpus.records, focal, vicinity)(year)


def _year_flows(events: Iterable[MigrationEvent], focal: str) -> tuple[Counter, Counter]:
    inflow: Counter = Counter()
    outflow: Counter = Counter()
    for e in events:
        if e.destination == focal:
            inflow[e.year] += 1
        elif e.origin == focal:
            outflow[e.year] += 1
    return inflow, outflow


def nmr_value(inflow: int, outflow: int, population: int) -> float | None:
    if population <= 0:
        return None
    return (inflow - outflow) / population * 1000.0


def net_migration_rate(events: Iterable[MigrationEvent], corpus: Corpus, focal: str = "DE",
                       year: int = 0, vicinity: int = 2) -> float | None:
    """Per-thousand NMR for one year; None when the population is zero."""
    inflow, outflow = _year_flows(events, focal)
    pop = research_active_population(corpus, focal, year, vicinity)
    return nmr_value(inflow[year], outflow[year], pop)


@dataclass(frozen=True)
class NmrPoint:
    inflow: int
    outflow: int
    population: int
    nmr: float | None


@dataclass(frozen=True)
class NmrSeries:
    points: dict[int, NmrPoint]
    reported_window: tuple[int, int]


def reported_window(window: tuple[int, int], head_trim: int = 2, tail_trim: int = 3) -> tuple[int, int]:
    first, last = window[0] + head_trim, window[1] - tail_trim
    if first > last:
        raise MetricsError(f"window {window} too short for trims ({head_trim}, {tail_trim})")
    return first, last


def nmr_series(events: Iterable[MigrationEvent], corpus: Corpus, focal: str = "DE",
               head_trim: int = 2, tail_trim: int = 3, vicinity: int = 2) -> NmrSeries:
    first, last = reported_window(corpus.window, head_trim, tail_trim)
    inflow, outflow = _year_flows(events, focal)
    pops = ActivePopulation(corpus.records, focal, vicinity).series(range(first, last + 1))
    points = {y: NmrPoint(inflow[y], outflow[y], pops[y], nmr_value(inflow[y], outflow[y], pops[y]))
              for y in range(first, last + 1)}
    return NmrSeries(points, (first, last))


# ---------------------------------------------------------------- citations

def academic_age(first_pub_year: int, reference_year: int = 2020) -> int:
    if first_pub_year > reference_year:
        raise MetricsError(f"first publication {first_pub_year} after reference year {reference_year}")
    return max(reference_year - first_pub_year, 1)


def annual_citation_rate(total_citations: int, age: int) -> float:
    if age < 1:
        raise MetricsError(f"academic age must be >= 1, got {age}")
    return total_citations / age


def discipline_normalized_rate(rate: float, field_mean_among_migrants: float) -> float:
    if not field_mean_among_migrants > 0:
        raise MetricsError("field mean must be positive")
    return rate / field_mean_among_migrants


def total_citations(records: Iterable[AuthorshipRecord]) -> int:
    """Sum of per-publication counts, each publication counted once."""
    per_pub: dict[str, int] = {}
    for r in records:
        per_pub[r.publication_id] = max(per_pub.get(r.publication_id, 0), r.citation_count)
    return sum(per_pub.values())


class CitationGroup(str, Enum):
    LOW = "Low"
    MEDIUM = "Medium"
    HIGH = "High"

    def __str__(self) -> str:
        return self.value


def linear_quantile(sorted_values: Sequence[float], q: float) -> float:
    """Quantile by linear interpolation between order statistics:
    position h = (n - 1) q, value x[floor h] + (h - floor h)(x[floor h + 1] - x[floor h])."""
    n = len(sorted_values)
    h = (n - 1) * q
    lo = math.floor(h)
    hi = min(lo + 1, n - 1)
    return sorted_values[lo] + (h - lo) * (sorted_values[hi] - sorted_values[lo])


def group_of(v: float, t1: float, t2: float) -> CitationGroup:
    if v < t1:
        return CitationGroup.LOW
    if v > t2:
        return CitationGroup.HIGH
    return CitationGroup.MEDIUM


def citation_groups(normalized: Sequence[tuple[str, float]]
                    ) -> tuple[dict[str, CitationGroup], tuple[float, float]]:
    if not normalized:
        raise MetricsError("no values to group")
    vals = sorted(v for _, v in normalized)
    t1, t2 = linear_quantile(vals, 1 / 3), linear_quantile(vals, 2 / 3)
    return {rid: group_of(v, t1, t2) for rid, v in normalized}, (t1, t2)


@dataclass(frozen=True)
class CitationProfile:
    researcher_id: str
    total_citations: int
    academic_age: int
    annual_rate: float
    discipline_normalized: float | None = None
    citation_group: CitationGroup | None = None


def citation_profiles(groups: Mapping[str, Sequence[AuthorshipRecord]],
                      classes: Iterable[MobilityClassification],
                      disciplines: Mapping[str, str],
                      reference_year: int = 2020
                      ) -> tuple[dict[str, CitationProfile], tuple[float, float] | None]:
    """Annual and discipline-normalized rates for classified researchers.

    Field means and tertiles are taken over the mobile types only;
    non-migrants get an annual rate but no normalized rate or group.
    """
    classes = list(classes)
    base: dict[str, CitationProfile] = {}
    for c in classes:
        recs = groups[c.researcher_id]
        age = academic_age(min(r.year for r in recs), reference_year)
        tot = total_citations(recs)
        base[c.researcher_id] = CitationProfile(c.researcher_id, tot, age, annual_citation_rate(tot, age))

    migrants = [c.researcher_id for c in classes if c.mobility_type in MOBILE_TYPES]
    sums: dict[str, list[float]] = defaultdict(list)
    for rid in migrants:
        sums[disciplines.get(rid, "")].append(base[rid].annual_rate)
    means = {d: math.fsum(v) / len(v) for d, v in sums.items()}

    normalized = []
    for rid in migrants:
        mean = means[disciplines.get(rid, "")]
        if mean > 0:
            normalized.append((rid, discipline_normalized_rate(base[rid].annual_rate, mean)))
    if not normalized:
        return base, None
    grp, thresholds = citation_groups(normalized)
    out = dict(base)
    for rid, v in normalized:
        p = base[rid]
        out[rid] = CitationProfile(rid, p.total_citations, p.academic_age, p.annual_rate, v, grp[rid])
    return out, thresholds


def field_means_among_migrants(profiles: Mapping[str, CitationProfile],
                               classes: Iterable[MobilityClassification],
                               disciplines: Mapping[str, str]) -> dict[str, float]:
    acc: dict[str, list[float]] = defaultdict(list)
    for c in classes:
        if c.mobility_type in MOBILE_TYPES:
            acc[disciplines.get(c.researcher_id, "")].append(profiles[c.researcher_id].annual_rate)
    return {d: math.fsum(v) / len(v) for d, v in acc.items()}
