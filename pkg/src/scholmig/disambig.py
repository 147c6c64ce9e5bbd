"""Splitting of suspicious author IDs into per-person clusters."""

from __future__ import annotations

import logging
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import tomli

from . import kernels
from .ingest import AuthorshipRecord, Corpus, given_tokens, group_by_author, normalize_name

log = logging.getLogger(__name__)


class _ForcedDistinct:
    def __repr__(self) -> str:
        return "FORCED_DISTINCT"


FORCED_DISTINCT = _ForcedDistinct()


class DisambiguationError(ValueError):
    pass


@dataclass(frozen=True)
class ScoreTable:
    name_exact: float = 2.0
    name_compatible: float = 1.0
    per_shared_coauthor: float = 2.0
    coauthor_cap: float = 6.0
    per_shared_asjc_2digit: float = 1.0
    asjc_cap: float = 3.0
    shared_funding_text: float = 2.0
    per_shared_grant: float = 5.0
    grant_cap: float = 10.0

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, f.name) for f in fields(self)], dtype=np.float64)

    @classmethod
    def from_toml(cls, path: str | Path) -> "ScoreTable":
        with open(path, "rb") as fh:
            raw = tomli.load(fh)
        raw = raw.get("weights", raw)
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise DisambiguationError(f"unknown weight keys: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in raw.items()})


@dataclass(frozen=True)
class SuspicionVerdict:
    author_id: str
    n_countries: int
    n_publications: int
    suspicious: bool


def flag_suspicious(corpus: Corpus, country_threshold: int = 6,
                    pub_threshold: int = 292) -> list[SuspicionVerdict]:
    out = []
    for aid, recs in group_by_author(corpus.records).items():
        nc = len({r.country for r in recs if r.country is not None})
        npub = len({r.publication_id for r in recs})
        out.append(SuspicionVerdict(aid, nc, npub, nc > country_threshold or npub > pub_threshold))
    return out


def _norm_text(s: str) -> str:
    return " ".join(s.casefold().split())


def pairwise_similarity(a: AuthorshipRecord, b: AuthorshipRecord,
                        weights: ScoreTable = ScoreTable()):
    """Rule-based evidence that two records belong to one person.

    Returns a non-negative score or ``FORCED_DISTINCT`` when both records
    carry different full given names.
    """
    score = 0.0
    ka, kb = normalize_name(a.given_name), normalize_name(b.given_name)
    ta, tb = given_tokens(a.given_name), given_tokens(b.given_name)
    if ka and kb:
        if ka != kb:
            return FORCED_DISTINCT
        score += weights.name_exact
    elif ta and tb:
        if not ka and not kb:
            compatible = ta[0][0] == tb[0][0]
        elif not ka:
            compatible = ta[0][0] in {t[0] for t in tb}
        else:
            compatible = tb[0][0] in {t[0] for t in ta}
        if compatible:
            score += weights.name_compatible

    shared_co = len(set(a.coauthor_ids) & set(b.coauthor_ids))
    score += min(weights.per_shared_coauthor * shared_co, weights.coauthor_cap)
    shared_asjc = len({c // 100 for c in a.asjc_codes} & {c // 100 for c in b.asjc_codes})
    score += min(weights.per_shared_asjc_2digit * shared_asjc, weights.asjc_cap)
    fa = {_norm_text(t) for t in a.funding_texts if t.strip()}
    fb = {_norm_text(t) for t in b.funding_texts if t.strip()}
    if fa & fb:
        score += weights.shared_funding_text
    shared_gr = len({g.strip() for g in a.grant_numbers if g.strip()}
                    & {g.strip() for g in b.grant_numbers if g.strip()})
    score += min(weights.per_shared_grant * shared_gr, weights.grant_cap)
    return score


def score_to_distance(score) -> float:
    if score is FORCED_DISTINCT:
        return 1.0
    return 1.0 / (1.0 + score)


@dataclass(frozen=True)
class SimilarityMatrix:
    record_ids: tuple[str, ...]
    distances: np.ndarray


class _Interner:
    def __init__(self):
        self.ids: dict = {}

    def __call__(self, key) -> int:
        return self.ids.setdefault(key, len(self.ids))


def _csr(rows: list[list[int]]) -> tuple[np.ndarray, np.ndarray]:
    ptr = np.zeros(len(rows) + 1, dtype=np.int64)
    flat: list[int] = []
    for i, row in enumerate(rows):
        u = sorted(set(row))
        flat.extend(u)
        ptr[i + 1] = len(flat)
    return ptr, np.array(flat, dtype=np.int64)


def encode_records(records: Sequence[AuthorshipRecord]) -> tuple:
    """Integer encoding of the similarity features, in kernel argument order."""
    names, chars = _Interner(), _Interner()
    co, asj, fu, gr = _Interner(), _Interner(), _Interner(), _Interner()
    n = len(records)
    name_key = np.full(n, -1, dtype=np.int32)
    first_initial = np.full(n, -1, dtype=np.int32)
    mask = np.zeros(n, dtype=np.uint64)
    co_rows, as_rows, fu_rows, gr_rows = [], [], [], []
    for i, r in enumerate(records):
        key = normalize_name(r.given_name)
        if key:
            name_key[i] = names(key)
        toks = given_tokens(r.given_name)
        if toks:
            first_initial[i] = chars(toks[0][0]) % 64
            m = 0
            for t in toks:
                m |= 1 << (chars(t[0]) % 64)
            mask[i] = m
        co_rows.append([co(c) for c in r.coauthor_ids])
        as_rows.append([asj(c // 100) for c in r.asjc_codes])
        fu_rows.append([fu(_norm_text(t)) for t in r.funding_texts if t.strip()])
        gr_rows.append([gr(g.strip()) for g in r.grant_numbers if g.strip()])
    return (name_key, first_initial, mask, *_csr(co_rows), *_csr(as_rows),
            *_csr(fu_rows), *_csr(gr_rows))


def build_distance_matrix(records: Sequence[AuthorshipRecord], weights: ScoreTable = ScoreTable(),
                          backend: str | None = None) -> SimilarityMatrix:
    if len({r.author_id for r in records}) > 1:
        raise DisambiguationError("records span several author IDs")
    dist = kernels.distance_matrix(*encode_records(records), weights.as_array(), backend=backend)
    return SimilarityMatrix(tuple(r.record_id for r in records), dist)


@dataclass(frozen=True)
class ClusterAssignment:
    parent_author_id: str
    mapping: dict[str, str]

    @property
    def n_clusters(self) -> int:
        return len(set(self.mapping.values()))


def cluster_labels(m: SimilarityMatrix, merge_threshold: float = 0.5, linkage: str = "average",
                   backend: str | None = None) -> np.ndarray:
    """Cluster representative (smallest row index) for each row."""
    dist = np.array(m.distances, dtype=np.float64, order="C", copy=True)
    return kernels.cluster_threshold(dist, merge_threshold, kernels.LINKAGES[linkage], backend=backend)


def cluster_records(m: SimilarityMatrix, merge_threshold: float = 0.5, parent_author_id: str = "",
                    linkage: str = "average", backend: str | None = None) -> ClusterAssignment:
    labels = cluster_labels(m, merge_threshold, linkage, backend)
    members: dict[int, list[str]] = {}
    for rid, lab in zip(m.record_ids, labels.tolist()):
        members.setdefault(lab, []).append(rid)
    ordered = sorted(members.values(), key=min)
    mapping = {}
    for k, rids in enumerate(ordered, start=1):
        for rid in rids:
            mapping[rid] = f"{parent_author_id}#{k}"
    return ClusterAssignment(parent_author_id, mapping)


def reissue_ids(corpus: Corpus, assignments: Iterable[ClusterAssignment]) -> Corpus:
    remap: dict[str, str] = {}
    for a in assignments:
        remap.update(a.mapping)
    known = {r.record_id for r in corpus.records}
    missing = set(remap) - known
    if missing:
        raise DisambiguationError(f"assignment references unknown record_id {sorted(missing)[0]!r}")
    return corpus.replace_records(
        replace(r, author_id=remap[r.record_id]) if r.record_id in remap else r
        for r in corpus.records
    )


@dataclass(frozen=True)
class DisambiguationReport:
    n_author_ids: int
    n_suspicious: int
    n_suspicious_records: int
    n_revised_ids: int
    clusters_per_id: dict[str, int]

    def to_dict(self) -> dict:
        return {
            "n_author_ids": self.n_author_ids,
            "n_suspicious": self.n_suspicious,
            "n_suspicious_records": self.n_suspicious_records,
            "n_revised_ids": self.n_revised_ids,
            "clusters_per_id": dict(sorted(self.clusters_per_id.items())),
        }


def disambiguate(corpus: Corpus, weights: ScoreTable = ScoreTable(), merge_threshold: float = 0.5,
                 country_threshold: int = 6, pub_threshold: int = 292, linkage: str = "average",
                 backend: str | None = None) -> tuple[Corpus, DisambiguationReport]:
    verdicts = flag_suspicious(corpus, country_threshold, pub_threshold)
    suspicious = {v.author_id for v in verdicts if v.suspicious}
    groups = group_by_author(r for r in corpus.records if r.author_id in suspicious)
    assignments = []
    for aid, recs in groups.items():
        m = build_distance_matrix(recs, weights, backend)
        assignments.append(cluster_records(m, merge_threshold, aid, linkage, backend))
    log.info("disambiguated %d suspicious IDs", len(assignments))
    report = DisambiguationReport(
        n_author_ids=len(verdicts),
        n_suspicious=len(suspicious),
        n_suspicious_records=sum(len(g) for g in groups.values()),
        n_revised_ids=sum(a.n_clusters for a in assignments),
        clusters_per_id={a.parent_author_id: a.n_clusters for a in assignments},
    )
    return reissue_ids(corpus, assignments), report
