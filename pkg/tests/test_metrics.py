import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from scholmig.ingest import Corpus, group_by_author
from scholmig.metrics import (
    ActivePopulation, CitationGroup, MetricsError, academic_age, aggregate_flows, annual_citation_rate,
    citation_groups, citation_profiles, discipline_normalized_rate, field_means_among_migrants, group_of,
    linear_quantile, net_migration_rate, nmr_series, nmr_value, reported_window, research_active_population,
    total_citations,
)
from scholmig.mobility import MOBILE_TYPES, MigrationEvent, run_mobility

import oracles
from conftest import rec


def ev(o, d, y=2005):
    return MigrationEvent("R", y, o, d)


def test_flows_counting():
    fin, fout = aggregate_flows([ev("US", "DE"), ev("US", "DE"), ev("DE", "GB")])
    assert fin.counts == {("US", "DE"): 2}
    assert fout.counts == {("DE", "GB"): 1}
    fin, fout = aggregate_flows([])
    assert fin.counts == {} == fout.counts


def test_flows_match_filter_count(messy_synth):
    corpus, _ = messy_synth
    events = run_mobility(corpus.records).events
    fin, fout = aggregate_flows(events, "DE", (1996, 2020))
    for (o, d), n in fin.counts.items():
        assert n == sum(1 for e in events if e.origin == o and e.destination == d == "DE")
    for (o, d), n in fout.counts.items():
        assert n == sum(1 for e in events if e.origin == o == "DE" and e.destination == d)
    assert fin.total() == sum(e.destination == "DE" for e in events)
    assert fout.total() == sum(e.origin == "DE" for e in events)


def test_population_window_edges():
    c = Corpus((rec(author="X", year=2006),))
    assert research_active_population(c, "DE", 2008) == 1
    assert research_active_population(c, "DE", 2009) == 0
    with pytest.raises(MetricsError):
        research_active_population(c, "DE", 1990)


def test_population_series_matches_brute_force(messy_synth):
    corpus, _ = messy_synth
    pop = ActivePopulation(corpus.records, "DE", 2)
    series = pop.series(range(1996, 2021))
    for y in range(1996, 2021):
        want = oracles.active_population(corpus.records, "DE", y, 2)
        assert series[y] == want == pop(y)


def test_nmr_arithmetic():
    assert nmr_value(2, 1, 1000) == 1.0
    assert nmr_value(3, 3, 10) == 0.0
    assert nmr_value(1, 0, 0) is None


@pytest.mark.parametrize("window, expected", [((1996, 2020), (1998, 2017)), ((2000, 2006), (2002, 2003))])
def test_reported_window(window, expected):
    assert reported_window(window) == expected


def test_reported_window_too_short():
    with pytest.raises(MetricsError):
        reported_window((2000, 2003))


def test_series_equals_year_by_year_and_brute_force(messy_synth):
    corpus, _ = messy_synth
    events = run_mobility(corpus.records).events
    s = nmr_series(events, corpus)
    assert s.reported_window == (1998, 2017)
    assert list(s.points) == list(range(1998, 2018))
    for y, p in s.points.items():
        one = net_migration_rate(events, corpus, "DE", y)
        brute = oracles.nmr(corpus.records, events, "DE", y)
        assert (p.nmr is None) == (one is None) == (brute is None)
        if brute is not None:
            assert abs(p.nmr - brute) <= 1e-9 and abs(one - brute) <= 1e-9


@pytest.mark.parametrize("first, age", [(2012, 8), (2020, 1), (1996, 24)])
def test_academic_age(first, age):
    assert academic_age(first, 2020) == age


def test_rates():
    assert annual_citation_rate(40, 8) == 5.0
    assert annual_citation_rate(0, 3) == 0.0
    assert discipline_normalized_rate(5.0, 2.5) == 2.0
    assert discipline_normalized_rate(1.7, 1.7) == 1.0
    with pytest.raises(MetricsError):
        annual_citation_rate(1, 0)
    with pytest.raises(MetricsError):
        discipline_normalized_rate(1.0, 0.0)
    with pytest.raises(MetricsError):
        academic_age(2021, 2020)


def test_citation_sum_over_records():
    recs = [rec(citation_count=c) for c in (3, 5, 0, 9)]
    assert total_citations(recs) == 17
    assert annual_citation_rate(total_citations(recs), 5) == pytest.approx(3.4)


def test_shared_publication_counted_once():
    recs = [rec(pub="p1", citation_count=4), rec(pub="p1", citation_count=4), rec(pub="p2", citation_count=1)]
    assert total_citations(recs) == 5


def test_groups_reference_thresholds():
    assert group_of(0.5, 0.18, 0.73) is CitationGroup.MEDIUM
    assert group_of(0.9, 0.18, 0.73) is CitationGroup.HIGH
    assert group_of(0.1, 0.18, 0.73) is CitationGroup.LOW
    assert group_of(0.18, 0.18, 0.73) is CitationGroup.MEDIUM
    assert group_of(0.73, 0.18, 0.73) is CitationGroup.MEDIUM


def test_nine_values_split_evenly():
    vals = [(f"r{i}", v) for i, v in enumerate([0.1, 0.9, 0.5, 0.3, 0.7, 0.2, 0.8, 0.4, 0.6])]
    grp, (t1, t2) = citation_groups(vals)
    # Linear interpolation: h = 8/3 -> 0.3 + 2/3 * 0.1; h = 16/3 -> 0.6 + 1/3 * 0.1.
    assert t1 == pytest.approx(0.3 + 0.2 / 3) and t2 == pytest.approx(0.6 + 0.1 / 3)
    sizes = [sum(g is k for g in grp.values()) for k in CitationGroup]
    assert sizes == [3, 3, 3]


@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=60), st.floats(0, 1))
def test_linear_quantile_matches_numpy(vals, q):
    vals = sorted(vals)
    assert linear_quantile(vals, q) == pytest.approx(float(np.percentile(vals, 100 * q)), rel=1e-9, abs=1e-6)


@given(st.lists(st.floats(0, 100, allow_nan=False), min_size=3, max_size=90, unique=True))
def test_tertile_sizes(vals):
    grp, _ = citation_groups([(str(i), v) for i, v in enumerate(vals)])
    n = len(vals)
    sizes = [sum(g is k for g in grp.values()) for k in CitationGroup]
    assert sum(sizes) == n
    assert all(abs(s - n / 3) <= 1 for s in sizes)


def test_profiles_and_field_means(messy_synth):
    corpus, _ = messy_synth
    res = run_mobility(corpus.records)
    groups = group_by_author(corpus.records)
    disc = {c.researcher_id: ("A" if i % 2 else "B") for i, c in enumerate(res.classes)}
    profiles, (t1, t2) = citation_profiles(groups, res.classes, disc, 2020)
    means = field_means_among_migrants(profiles, res.classes, disc)
    for d in ("A", "B"):
        rates = [total_citations(groups[c.researcher_id])
                 / max(2020 - min(r.year for r in groups[c.researcher_id]), 1)
                 for c in res.classes if c.mobility_type in MOBILE_TYPES and disc[c.researcher_id] == d]
        assert means[d] == pytest.approx(math.fsum(rates) / len(rates), abs=1e-12)
    migrants = [c.researcher_id for c in res.classes if c.mobility_type in MOBILE_TYPES]
    assert all(profiles[r].citation_group is not None for r in migrants)
    assert all(profiles[c.researcher_id].citation_group is None
               for c in res.classes if c.mobility_type not in MOBILE_TYPES)
    assert (t1, t2) == pytest.approx(oracles.tertiles([profiles[r].discipline_normalized for r in migrants]))
