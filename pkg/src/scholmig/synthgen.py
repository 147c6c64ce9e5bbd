"""Deterministic synthetic corpora with planted careers and ground truth.

Randomness comes from SplitMix64 only:

    state <- state + 0x9E3779B97F4A7C15            (mod 2**64)
    z <- (state ^ (state >> 30)) * 0xBF58476D1CE4E5B9
    z <- (z ^ (z >> 27)) * 0x94D049BB133111EB
    out <- z ^ (z >> 31)

Uniform floats are ``(out >> 11) * 2**-53``; an integer below ``n`` is
``floor(u * n)``.  Per-publication citations are geometric with the
discipline's mean ``m``: ``k = floor(ln(1 - u) / ln(m / (1 + m)))``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import tomli

from . import countries
from .ingest import AuthorshipRecord, Corpus, group_by_author
from .mobility import MigrationEvent, MobilityClassification, MobilityType
from .taxonomy_gender import ASJC_DISCIPLINES, DISCIPLINE_FIELD, UNKNOWN, load_name_table

_MASK64 = (1 << 64) - 1


class SynthError(ValueError):
    pass


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def random(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def below(self, n: int) -> int:
        return int(self.random() * n)

    def between(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi]."""
        return lo + self.below(hi - lo + 1)

    def chance(self, p: float) -> bool:
        return self.random() < p

    def choice(self, seq: Sequence):
        return seq[self.below(len(seq))]

    def sample(self, seq: Sequence, k: int) -> list:
        pool = list(seq)
        for i in range(k):
            j = i + self.below(len(pool) - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]

    def geometric(self, mean: float) -> int:
        if mean <= 0:
            return 0
        q = mean / (1.0 + mean)
        return int(math.floor(math.log(1.0 - self.random()) / math.log(q)))


DEFAULT_POOL = ("DE", "US", "GB", "CH", "AT", "FR", "NL", "IT", "ES", "SE", "DK", "RU",
                "IN", "CN", "KR", "JP", "CA", "AU", "PL", "BE")

# Mean citations per publication by field.
DEFAULT_CITATION_MEANS = {
    "Health Sciences": 6.0, "Life Sciences": 9.0, "Physical Sciences": 5.0, "Social Sciences": 2.5,
}

_CITIES = {
    "DE": ("Berlin", "Munich", "Hamburg", "Rostock", "Heidelberg", "Leipzig"),
    "US": ("Boston", "Chicago", "Berkeley", "Houston", "Seattle"),
    "GB": ("London", "Oxford", "Cambridge", "Manchester", "Edinburgh"),
    "CH": ("Zurich", "Geneva", "Basel", "Lausanne"),
    "AT": ("Vienna", "Graz", "Innsbruck", "Salzburg"),
    "FR": ("Paris", "Lyon", "Toulouse", "Grenoble"),
    "NL": ("Amsterdam", "Utrecht", "Leiden", "Delft"),
    "IT": ("Rome", "Milan", "Padua", "Bologna"),
    "ES": ("Madrid", "Barcelona", "Valencia", "Seville"),
    "SE": ("Stockholm", "Uppsala", "Lund", "Gothenburg"),
    "DK": ("Copenhagen", "Aarhus", "Odense"),
    "RU": ("Moscow", "Novosibirsk", "Kazan"),
    "IN": ("Bangalore", "Mumbai", "Delhi", "Chennai"),
    "CN": ("Beijing", "Shanghai", "Wuhan", "Nanjing"),
    "KR": ("Seoul", "Daejeon", "Busan"),
    "JP": ("Tokyo", "Kyoto", "Osaka", "Sendai"),
    "CA": ("Toronto", "Montreal", "Vancouver"),
    "AU": ("Sydney", "Melbourne", "Brisbane"),
    "PL": ("Warsaw", "Krakow", "Wroclaw"),
    "BE": ("Brussels", "Leuven", "Ghent"),
}
_NAME_VARIANTS = {"US": ("United States", "USA"), "GB": ("United Kingdom", "UK"),
                  "RU": ("Russia", "Russian Federation"), "KR": ("South Korea", "Republic of Korea")}
_UNITS = ("Department of Physics", "Institute of Chemistry", "Faculty of Medicine",
          "Department of Economics", "Centre for Neuroscience", "School of Engineering",
          "Department of Mathematics", "Institute for Social Research", "Laboratory of Biology")
_INSTITUTIONS = ("University of {city}", "{city} Institute of Technology", "{city} Medical Centre",
                 "Research Institute {city}", "National Laboratory {city}")
_FUNDERS = ("German Research Foundation", "European Research Council", "National Science Foundation",
            "Alexander von Humboldt Foundation", "Wellcome Trust")
_SURNAMES = ("Mueller", "Schmidt", "Schneider", "Fischer", "Weber", "Meyer", "Wagner", "Becker",
             "Schulz", "Hoffmann", "Smith", "Johnson", "Brown", "Garcia", "Rossi", "Martin",
             "Ivanov", "Kumar", "Wang", "Li", "Zhang", "Tanaka", "Kim", "Nowak", "Jensen",
             "Andersson", "Dubois", "Silva", "Novak", "Horvat", "Yilmaz", "Cohen", "Khan")
# Given names deliberately absent from the name table.
_UNLISTED_NAMES = ("Zhiwei", "Oluwaseun", "Thandiwe", "Bartholomaeus", "Yevgenia", "Anselm", "Quirin")


@dataclass(frozen=True)
class SynthSpec:
    seed: int = 42
    n_researchers: int = 1000
    window: tuple[int, int] = (1996, 2020)
    focal: str = "DE"
    country_pool: tuple[str, ...] = DEFAULT_POOL
    p_single_paper: float = 0.3
    p_migration: float = 0.3
    p_tie_year: float = 0.0
    n_id_collisions: int = 0
    n_prolific: int = 0
    p_mask_country: float = 0.0
    n_mask_country: int | None = None
    p_empty_affiliation: float = 0.0
    p_unlisted_name: float = 0.15
    p_gap_year: float = 0.2
    max_pubs_per_year: int = 3
    max_career_years: int = 12
    citation_means: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_CITATION_MEANS))
    name_table: str | None = None

    def validate(self) -> None:
        for name in ("p_single_paper", "p_migration", "p_tie_year", "p_mask_country",
                     "p_empty_affiliation", "p_unlisted_name", "p_gap_year"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise SynthError(f"{name}={v} outside [0, 1]")
        if self.n_researchers < 1:
            raise SynthError("n_researchers must be positive")
        if self.n_id_collisions > self.n_researchers // 2:
            raise SynthError("n_id_collisions exceeds n_researchers / 2")
        if self.window[0] > self.window[1] - 2:
            raise SynthError("window must span at least three years")
        if self.focal not in self.country_pool or len(set(self.country_pool)) < 3:
            raise SynthError("country_pool needs the focal country and two others")
        for c in self.country_pool:
            if not countries.is_valid_code(c):
                raise SynthError(f"unknown country {c!r}")
        if any(m < 0 for m in self.citation_means.values()):
            raise SynthError("citation means must be non-negative")

    def run_id(self) -> str:
        blob = json.dumps(_spec_to_dict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _spec_to_dict(spec: SynthSpec) -> dict:
    d = asdict(spec)
    d["window"] = list(spec.window)
    d["country_pool"] = list(spec.country_pool)
    d["citation_means"] = dict(spec.citation_means)
    return d


def load_spec(path: str | Path) -> SynthSpec:
    with open(path, "rb") as fh:
        raw = tomli.load(fh)
    raw = raw.get("synth", raw)
    if "window" in raw:
        w = raw["window"]
        raw["window"] = (w["start_year"], w["end_year"]) if isinstance(w, dict) else tuple(w)
    if "country_pool" in raw:
        raw["country_pool"] = tuple(raw["country_pool"])
    return SynthSpec(**raw)


@dataclass
class PersonTruth:
    person_id: str
    author_id: str
    given_name: str
    gender: str
    discipline: str
    mobility_type: str
    modes: dict[int, list[str]]
    events: list[tuple[int, str, str]]


@dataclass
class GroundTruth:
    run_id: str
    n_records: int
    persons: dict[str, PersonTruth]
    record_person: dict[str, str]
    collisions: dict[str, list[str]]
    masked: dict[str, str]

    def events(self) -> list[MigrationEvent]:
        return [MigrationEvent(p.person_id, y, o, d)
                for p in self.persons.values() for y, o, d in p.events]

    def to_json(self) -> str:
        d = asdict(self)
        for p in d["persons"].values():
            p["modes"] = {str(y): s for y, s in p["modes"].items()}
        return json.dumps(d, sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "GroundTruth":
        d = json.loads(text)
        persons = {}
        for pid, p in d["persons"].items():
            p["modes"] = {int(y): s for y, s in p["modes"].items()}
            p["events"] = [tuple(e) for e in p["events"]]
            persons[pid] = PersonTruth(**p)
        d["persons"] = persons
        return cls(**d)


# ---------------------------------------------------------------- generation

class _Builder:
    def __init__(self, spec: SynthSpec):
        self.spec = spec
        self.rng = SplitMix64(spec.seed)
        self.table = load_name_table(spec.name_table)
        self.table_names = sorted(self.table)
        self.others = [c for c in spec.country_pool if c != spec.focal]
        self.prefixes = sorted(ASJC_DISCIPLINES)
        self.records: list[dict] = []

    # -- per-person attributes

    def given_name(self) -> tuple[str, str]:
        rng = self.rng
        if rng.chance(self.spec.p_unlisted_name):
            return rng.choice(_UNLISTED_NAMES), UNKNOWN
        key = rng.choice(self.table_names)
        return key.capitalize(), self._true_gender(key)

    def _true_gender(self, key: str) -> str:
        e = self.table.get(key)
        return e.gender if e is not None else UNKNOWN

    def affiliation(self, country: str) -> str:
        rng = self.rng
        city = rng.choice(_CITIES.get(country, ("Capital City", "Harbour Town")))
        name = rng.choice(_NAME_VARIANTS.get(country, (countries.country_name(country),)))
        inst = rng.choice(_INSTITUTIONS).format(city=city)
        return f"{rng.choice(_UNITS)}, {inst}, {rng.between(10000, 99999)} {city}, {name}"

    def career_years(self, n_segments: int, single: bool, min_years: int = 2) -> list[int]:
        rng, (w0, w1) = self.rng, self.spec.window
        if single:
            return [rng.between(w0, w1)]
        min_len = max(n_segments, min_years)
        max_len = max(min_len, min(self.spec.max_career_years, w1 - w0 + 1))
        length = rng.between(min_len, max_len)
        start = rng.between(w0, w1 - length + 1)
        years = [y for y in range(start, start + length)
                 if y in (start, start + length - 1) or not rng.chance(self.spec.p_gap_year)]
        while len(years) < n_segments:
            missing = sorted(set(range(start, start + length)) - set(years))
            years = sorted(years + [missing[0]])
        return years

    def segment_countries(self, mtype: MobilityType) -> list[str]:
        f, rng = self.spec.focal, self.rng
        if mtype in (MobilityType.SINGLE_PAPER, MobilityType.NON_MOVER):
            return [f]
        x = rng.choice(self.others)
        if mtype is MobilityType.IMMIGRANT:
            return [x, f]
        if mtype is MobilityType.EMIGRANT:
            return [f, x]
        if mtype is MobilityType.RETURN_MIGRANT:
            return [f, x, f]
        return [x, f, rng.choice(self.others)]

    def pick_type(self) -> MobilityType:
        rng, s = self.rng, self.spec
        if rng.chance(s.p_single_paper):
            return MobilityType.SINGLE_PAPER
        if rng.chance(s.p_migration):
            return rng.choice((MobilityType.IMMIGRANT, MobilityType.EMIGRANT,
                               MobilityType.RETURN_MIGRANT, MobilityType.TRANSIENT))
        return MobilityType.NON_MOVER


def generate_corpus(spec: SynthSpec = SynthSpec()) -> tuple[Corpus, GroundTruth]:
    spec.validate()
    b = _Builder(spec)
    rng = b.rng
    persons: dict[str, PersonTruth] = {}
    plans: dict[str, dict] = {}

    for i in range(spec.n_researchers):
        pid = f"A{i:07d}"
        mtype = MobilityType.NON_MOVER if i < spec.n_prolific else b.pick_type()
        given, gender = b.given_name()
        prefix = rng.choice(b.prefixes)
        discipline = ASJC_DISCIPLINES[prefix][0]
        segs = b.segment_countries(mtype)
        if i < spec.n_prolific:
            years = list(range(spec.window[0], spec.window[1] + 1))
            per_year = math.ceil(300 / len(years)) + 1
        else:
            years = b.career_years(len(segs), mtype is MobilityType.SINGLE_PAPER)
            per_year = None
        cuts = sorted(rng.sample(range(1, len(years)), len(segs) - 1)) if len(segs) > 1 else []
        bounds = [0] + cuts + [len(years)]
        year_country = {}
        seg_start = set()
        for k, c in enumerate(segs):
            seg_start.add(years[bounds[k]])
            for y in years[bounds[k]:bounds[k + 1]]:
                year_country[y] = c
        plans[pid] = dict(
            mtype=mtype, given=given, surname=rng.choice(_SURNAMES), prefix=prefix,
            years=years, year_country=year_country, seg_start=seg_start, per_year=per_year,
            coauthors=[f"C{i:07d}-{j}" for j in range(6)], grants=[f"GR-{i:07d}-{j}" for j in range(2)],
        )
        persons[pid] = PersonTruth(pid, pid, given, gender, discipline, mtype.value, {}, [])

    # Collisions: partner B's records move under A's author ID.
    collisions: dict[str, list[str]] = {}
    eligible = [pid for pid in sorted(plans)
                if plans[pid]["mtype"] is not MobilityType.SINGLE_PAPER][spec.n_prolific:]
    if 2 * spec.n_id_collisions > len(eligible):
        raise SynthError("not enough multi-publication researchers for the requested collisions")
    chosen = rng.sample(eligible, 2 * spec.n_id_collisions)
    for a, bb in zip(chosen[0::2], chosen[1::2]):
        a, bb = min(a, bb), max(a, bb)
        _make_collision(b, plans, persons, a, bb)
        collisions[a] = [a, bb]

    # Emit records.
    record_person: dict[str, str] = {}
    for pid in sorted(plans):
        _emit_person(b, pid, plans[pid], persons[pid], record_person)

    # Ground-truth modes and events from the plan.
    for pid, plan in plans.items():
        modes = {y: sorted(plan["tie_modes"].get(y, {plan["year_country"][y]})) for y in plan["years"]}
        persons[pid].modes = modes
        ev = []
        prev = None
        for y in plan["years"]:
            c = plan["year_country"][y]
            if prev is not None and c != prev:
                ev.append((y, prev, c))
            prev = c
        persons[pid].events = ev

    masked = _mask(b, spec)
    records = tuple(_to_record(d) for d in b.records)
    corpus = Corpus(records, spec.window)
    truth = GroundTruth(spec.run_id(), len(records), persons, record_person, collisions, masked)
    return corpus, truth


def _make_collision(b: _Builder, plans, persons, a: str, bb: str) -> None:
    pa, pb = plans[a], plans[bb]
    pb["surname"] = pa["surname"]
    key_a = pa["given"].lower()
    same_initial = [n for n in b.table_names if n[0] == key_a[0] and n != key_a]
    alt = [n for n in b.table_names if n != key_a]
    key_b = b.rng.choice(same_initial or alt)
    pb["given"] = key_b.capitalize()
    persons[bb].given_name = pb["given"]
    persons[bb].gender = b._true_gender(key_b)
    persons[bb].author_id = a
    pb["author_id"] = a
    # Secondary affiliations push the shared ID past the country threshold.
    used = set(pa["year_country"].values()) | set(pb["year_country"].values())
    spare = [c for c in b.spec.country_pool if c not in used]
    need = max(0, 7 - len(used))
    if len(spare) < need:
        raise SynthError("country pool too small for ID collisions")
    extra = b.rng.sample(spare, max(need, min(len(spare), 4)))
    pa["secondary"] = extra[0::2]
    pb["secondary"] = extra[1::2]


def _emit_person(b: _Builder, pid: str, plan: dict, truth: PersonTruth, record_person: dict) -> None:
    rng, spec = b.rng, b.spec
    author_id = plan.get("author_id", pid)
    years = plan["years"]
    mtype = plan["mtype"]
    plan["tie_modes"] = {}
    # Each secondary country gets one extra affiliation record in some year;
    # that year keeps strictly more main-country records so its mode holds.
    sec_by_year: dict[int, list[str]] = {}
    secondary = list(plan.get("secondary", ()))
    if secondary:
        picked = rng.sample(years, min(len(secondary), len(years)))
        for j, c in enumerate(secondary):
            sec_by_year.setdefault(picked[j % len(picked)], []).append(c)
    middle = rng.choice("ABCDEFGHJKLMNPRSTW") + "." if rng.chance(0.2) else None

    for y in years:
        country = plan["year_country"][y]
        if mtype is MobilityType.SINGLE_PAPER:
            n_pubs = 1
        elif plan["per_year"] is not None:
            n_pubs = plan["per_year"]
        else:
            n_pubs = rng.between(1, spec.max_pubs_per_year)
        if mtype is MobilityType.NON_MOVER and len(years) == 1:
            n_pubs = max(n_pubs, 2)
        sec = sec_by_year.get(y, [])
        if sec:
            n_pubs = max(n_pubs, len(sec) + 1)
        tie = (mtype is not MobilityType.SINGLE_PAPER and not secondary and y != years[0]
               and y != years[-1] and y not in plan["seg_start"] and rng.chance(spec.p_tie_year))
        tie_country = rng.choice([c for c in spec.country_pool if c != country]) if tie else None
        if tie:
            plan["tie_modes"][y] = {country, tie_country}
        for k in range(n_pubs):
            pub = f"P{pid[1:]}-{y}-{k}"
            mean = spec.citation_means.get(DISCIPLINE_FIELD[ASJC_DISCIPLINES[plan["prefix"]][0]], 0.0)
            cites = rng.geometric(mean)
            shared = _pub_features(b, plan, middle)
            affs = [country]
            if tie:
                affs.append(tie_country)
            if k < len(sec):
                affs.append(sec[k])
            for c in affs:
                rid = f"r{len(b.records):08d}"
                b.records.append(dict(
                    record_id=rid, author_id=author_id, publication_id=pub, year=y,
                    affiliation_text=b.affiliation(c), country=c, citation_count=cites,
                    surname=plan["surname"], **shared,
                ))
                record_person[rid] = pid


def _pub_features(b: _Builder, plan: dict, middle: str | None) -> dict:
    rng = b.rng
    given = plan["given"]
    if middle is not None:
        given = f"{middle} {given}" if rng.chance(0.5) else f"{given} {middle}"
    codes = [plan["prefix"] * 100 + rng.between(1, 12)]
    if rng.chance(0.3):
        codes.append(rng.choice(b.prefixes) * 100 + rng.between(1, 12))
    coauthors = sorted(set(rng.sample(plan["coauthors"], rng.between(1, 3))))
    funding = [rng.choice(_FUNDERS)] if rng.chance(0.3) else []
    grants = [rng.choice(plan["grants"])] if rng.chance(0.3) else []
    return dict(given_name=given, asjc_codes=tuple(codes), coauthor_ids=tuple(coauthors),
                funding_texts=tuple(funding), grant_numbers=tuple(grants))


def _mask(b: _Builder, spec: SynthSpec) -> dict[str, str]:
    n = spec.n_mask_country
    if n is None:
        n = int(round(spec.p_mask_country * len(b.records)))
    n = min(n, len(b.records))
    masked = {}
    for i in sorted(b.rng.sample(range(len(b.records)), n)):
        d = b.records[i]
        masked[d["record_id"]] = d["country"]
        d["country"] = None
        if b.rng.chance(spec.p_empty_affiliation):
            d["affiliation_text"] = ""
    return masked


def _to_record(d: dict) -> AuthorshipRecord:
    return AuthorshipRecord(
        record_id=d["record_id"], author_id=d["author_id"], publication_id=d["publication_id"],
        year=d["year"], affiliation_text=d["affiliation_text"], country=d["country"],
        asjc_codes=d["asjc_codes"], citation_count=d["citation_count"], given_name=d["given_name"],
        surname=d["surname"], coauthor_ids=d["coauthor_ids"], funding_texts=d["funding_texts"],
        grant_numbers=d["grant_numbers"],
    )


# ---------------------------------------------------------------- scoring

@dataclass
class PipelineOutputs:
    run_id: str
    corpus: Corpus
    events: list[MigrationEvent]
    classes: list[MobilityClassification]


@dataclass
class ScoreCard:
    event_recall: float
    event_precision: float
    mobility_accuracy: float
    mobility_confusion: dict[str, dict[str, int]]
    fill_accuracy: float
    n_masked: int
    cluster_purity: float
    pure_cluster_fraction: float
    collisions_resolved: float

    def to_dict(self) -> dict:
        return asdict(self)


def researcher_person_map(corpus: Corpus, truth: GroundTruth) -> dict[str, str]:
    """Majority true person of each (possibly revised) researcher ID."""
    out = {}
    for rid, recs in group_by_author(corpus.records).items():
        counts: dict[str, int] = {}
        for r in recs:
            p = truth.record_person[r.record_id]
            counts[p] = counts.get(p, 0) + 1
        out[rid] = max(sorted(counts), key=counts.get)
    return out


def score_pipeline(truth: GroundTruth, outputs: PipelineOutputs) -> ScoreCard:
    if truth.run_id != outputs.run_id:
        raise SynthError(f"run id mismatch: truth {truth.run_id} vs outputs {outputs.run_id}")
    to_person = researcher_person_map(outputs.corpus, truth)

    true_ev = {(e.researcher_id, e.year, e.origin, e.destination) for e in truth.events()}
    got_ev = {(to_person[e.researcher_id], e.year, e.origin, e.destination) for e in outputs.events}
    hit = len(true_ev & got_ev)
    recall = hit / len(true_ev) if true_ev else 1.0
    precision = hit / len(got_ev) if got_ev else 1.0

    confusion: dict[str, dict[str, int]] = {}
    correct = 0
    for c in outputs.classes:
        t = truth.persons[to_person[c.researcher_id]].mobility_type
        row = confusion.setdefault(t, {})
        row[c.mobility_type.value] = row.get(c.mobility_type.value, 0) + 1
        correct += t == c.mobility_type.value
    accuracy = correct / len(outputs.classes) if outputs.classes else 1.0

    by_id = {r.record_id: r for r in outputs.corpus.records}
    restored = sum(1 for rid, c in truth.masked.items() if rid in by_id and by_id[rid].country == c)
    fill = restored / len(truth.masked) if truth.masked else 1.0

    revised = {aid: recs for aid, recs in group_by_author(outputs.corpus.records).items() if "#" in aid}
    total = majority = pure = 0
    for recs in revised.values():
        counts: dict[str, int] = {}
        for r in recs:
            p = truth.record_person[r.record_id]
            counts[p] = counts.get(p, 0) + 1
        total += len(recs)
        majority += max(counts.values())
        pure += len(counts) == 1
    purity = majority / total if total else 1.0
    pure_frac = pure / len(revised) if revised else 1.0

    resolved = 0
    for parent in truth.collisions:
        clusters = [recs for aid, recs in revised.items() if aid.split("#")[0] == parent]
        if clusters and all(len({truth.record_person[r.record_id] for r in recs}) == 1 for recs in clusters):
            resolved += 1
    resolved_frac = resolved / len(truth.collisions) if truth.collisions else 1.0

    return ScoreCard(recall, precision, accuracy, confusion, fill, len(truth.masked),
                     purity, pure_frac, resolved_frac)
