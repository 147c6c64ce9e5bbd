import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scholmig import kernels
from scholmig.disambig import (
    FORCED_DISTINCT, ClusterAssignment, DisambiguationError, ScoreTable, SimilarityMatrix,
    build_distance_matrix, cluster_labels, cluster_records, disambiguate, flag_suspicious,
    pairwise_similarity, reissue_ids, score_to_distance,
)
from scholmig.ingest import Corpus

from conftest import rec, synth

BACKENDS = sorted(kernels.BACKENDS)


def _author(n_pubs, countries):
    return [rec(author="X", country=countries[i % len(countries)]) for i in range(n_pubs)]


@pytest.mark.parametrize("n_pubs, countries, expected", [
    (10, ["DE", "FR", "IT", "ES", "PL", "NL", "AT"], True),
    (10, ["DE", "FR", "IT", "ES", "PL", "NL"], False),
    (292, ["DE", "FR"], False),
    (293, ["DE", "FR"], True),
])
def test_flag_suspicious(n_pubs, countries, expected):
    (v,) = flag_suspicious(Corpus(tuple(_author(n_pubs, countries))))
    assert v.suspicious is expected
    assert v.n_publications == n_pubs


def test_flag_counts_distinct_publications():
    recs = [rec(author="X", pub="same", country=c) for c in ["DE"] * 300]
    (v,) = flag_suspicious(Corpus(tuple(recs)))
    assert v.n_publications == 1 and not v.suspicious


def test_score_hand_sum():
    a = rec(given_name="Michael", coauthor_ids=("c1", "c2", "c3"), grant_numbers=("G1",))
    b = rec(given_name="Michael", coauthor_ids=("c1", "c2"), grant_numbers=("G1", "G2"))
    assert pairwise_similarity(a, b) == 2 + 4 + 5 == 11
    assert score_to_distance(11) == pytest.approx(1 / 12)


def test_forced_distinct_and_compatible():
    assert pairwise_similarity(rec(given_name="Michael"), rec(given_name="Maria")) is FORCED_DISTINCT
    assert score_to_distance(FORCED_DISTINCT) == 1.0
    assert pairwise_similarity(rec(given_name="M."), rec(given_name="Michael")) == 1
    assert pairwise_similarity(rec(given_name="Michael"), rec(given_name="M.")) == 1
    # Only the abbreviated side's first initial is matched against the full name.
    assert pairwise_similarity(rec(given_name="M. J."), rec(given_name="Michael")) == 1
    assert pairwise_similarity(rec(given_name="J. M."), rec(given_name="Michael")) == 0
    assert pairwise_similarity(rec(given_name="K."), rec(given_name="Michael")) == 0


def test_caps_and_funding():
    co = tuple(f"c{i}" for i in range(10))
    a = rec(given_name="", coauthor_ids=co, asjc_codes=(1100, 1200, 1300, 1400, 1401),
            funding_texts=("DFG  Grant",), grant_numbers=("1", "2", "3"))
    b = rec(given_name="", coauthor_ids=co, asjc_codes=(1100, 1200, 1300, 1499),
            funding_texts=("dfg grant",), grant_numbers=("1", "2", "3"))
    assert pairwise_similarity(a, b) == 6 + 3 + 2 + 10


def test_custom_weights_toml(tmp_path):
    p = tmp_path / "w.toml"
    p.write_text("[weights]\nname_exact = 4\ngrant_cap = 5\n")
    w = ScoreTable.from_toml(p)
    assert w.name_exact == 4 and w.grant_cap == 5 and w.name_compatible == 1
    a = rec(given_name="Anna", grant_numbers=("1", "2"))
    assert pairwise_similarity(a, a, w) == 4 + 5


_GIVEN = ["Anna", "A.", "A. M.", "Maria", "M.", "", "Anna M."]


def _random_records(rng, n):
    return [rec(author="X", given_name=_GIVEN[rng.integers(len(_GIVEN))],
                coauthor_ids=tuple(f"c{k}" for k in rng.integers(0, 6, rng.integers(0, 4))),
                asjc_codes=tuple(int(k) * 100 + 1 for k in rng.integers(11, 16, rng.integers(0, 4))),
                funding_texts=tuple(["DFG", "ERC"][k] for k in rng.integers(0, 2, rng.integers(0, 2))),
                grant_numbers=tuple(f"g{k}" for k in rng.integers(0, 3, rng.integers(0, 3))))
            for _ in range(n)]


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("seed", range(5))
def test_matrix_equals_pairwise_oracle(backend, seed):
    recs = _random_records(np.random.default_rng(seed), 6 + seed * 5)
    m = build_distance_matrix(recs, backend=backend)
    n = len(recs)
    for i, j in itertools.product(range(n), repeat=2):
        want = 0.0 if i == j else score_to_distance(pairwise_similarity(recs[i], recs[j]))
        assert m.distances[i, j] == pytest.approx(want, abs=1e-15)


def test_matrix_rejects_mixed_ids():
    with pytest.raises(DisambiguationError):
        build_distance_matrix([rec(author="A"), rec(author="B")])


def naive_cluster(d, threshold, linkage):
    """Explicit member lists; linkage recomputed from original distances every round."""
    clusters = [[i] for i in range(len(d))]
    agg = {"single": min, "complete": max, "average": lambda v: sum(v) / len(v)}[linkage]
    while len(clusters) > 1:
        best = None
        for a, b in itertools.combinations(range(len(clusters)), 2):
            v = agg([d[i][j] for i in clusters[a] for j in clusters[b]])
            if best is None or v < best[0]:
                best = (v, a, b)
        if best[0] > threshold:
            break
        _, a, b = best
        clusters[a] = sorted(clusters[a] + clusters[b])
        del clusters[b]
    labels = [0] * len(d)
    for c in clusters:
        for i in c:
            labels[i] = min(c)
    return labels


def _sym(rng, n, values=None):
    a = rng.choice(values, size=(n, n)) if values is not None else rng.random((n, n))
    d = np.triu(a, 1)
    return d + d.T


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("linkage", ["single", "complete", "average"])
def test_cluster_matches_naive_oracle(backend, linkage):
    rng = np.random.default_rng(11)
    for trial in range(40):
        n = int(rng.integers(1, 14))
        # Tie-heavy grids for min/max linkage; continuous values for averaging.
        d = _sym(rng, n, [0.1, 0.3, 0.5, 0.7, 1.0]) if linkage != "average" else _sym(rng, n)
        labels = kernels.cluster_threshold(d.copy(), 0.5, kernels.LINKAGES[linkage], backend=backend)
        assert labels.tolist() == naive_cluster(d.tolist(), 0.5, linkage)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 25), st.integers(0, 2**32 - 1), st.sampled_from(["single", "complete", "average"]))
def test_backends_agree(n, seed, linkage):
    if len(BACKENDS) < 2:
        pytest.skip("compiled extension not built")
    rng = np.random.default_rng(seed)
    d = _sym(rng, n, [0.05, 0.25, 0.5, 0.75, 1.0])
    out = [kernels.cluster_threshold(d.copy(), 0.5, kernels.LINKAGES[linkage], backend=b) for b in BACKENDS]
    assert out[0].tolist() == out[1].tolist()


def _matrix(d):
    return SimilarityMatrix(tuple(f"r{i}" for i in range(len(d))), np.array(d, dtype=float))


def test_cluster_extremes():
    n = 5
    ones = np.ones((n, n)) - np.eye(n)
    assert cluster_records(_matrix(ones), parent_author_id="X").n_clusters == 5
    assert cluster_records(_matrix(ones * 0.05), parent_author_id="X").n_clusters == 1


def test_two_planted_groups():
    g = [0, 0, 1, 1, 0]
    d = [[0.0 if i == j else (0.1 if g[i] == g[j] else 0.9) for j in range(5)] for i in range(5)]
    a = cluster_records(_matrix(d), parent_author_id="X")
    assert a.mapping == {"r0": "X#1", "r1": "X#1", "r4": "X#1", "r2": "X#2", "r3": "X#2"}


def test_threshold_is_inclusive():
    d = [[0, 0.5], [0.5, 0]]
    assert cluster_labels(_matrix(d), 0.5).tolist() == [0, 0]
    assert cluster_labels(_matrix(d), 0.4999).tolist() == [0, 1]


def test_reissue():
    recs = tuple(rec(author="X") for _ in range(3)) + (rec(author="Y"),)
    c = Corpus(recs)
    assert reissue_ids(c, []) == c
    mapping = {r.record_id: f"X#{k + 1}" for k, r in enumerate(recs[:3])}
    out = reissue_ids(c, [ClusterAssignment("X", mapping)])
    assert [r.author_id for r in out.records] == ["X#1", "X#2", "X#3", "Y"]
    with pytest.raises(DisambiguationError):
        reissue_ids(c, [ClusterAssignment("X", {"nope": "X#1"})])


def test_disambiguate_no_suspicious():
    c = Corpus(tuple(rec(author="A", given_name="Anna") for _ in range(3)))
    out, report = disambiguate(c)
    assert out == c and report.n_suspicious == 0


def test_disambiguate_planted_collisions():
    corpus, truth = synth(seed=3, n_researchers=600, p_tie_year=0.25, n_id_collisions=20, n_prolific=2)
    out, report = disambiguate(corpus)
    assert report.n_suspicious >= len(truth.collisions)
    revised = {}
    for r in out.records:
        if "#" in r.author_id:
            revised.setdefault(r.author_id, set()).add(truth.record_person[r.record_id])
    assert all(len(p) == 1 for p in revised.values())
    for parent in truth.collisions:
        assert len([a for a in revised if a.split("#")[0] == parent]) >= 2
