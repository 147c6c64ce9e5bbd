"""End-to-end orchestration and the plot-ready report bundle."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import platform
import statistics
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
import scipy
import tomli

from . import __version__, kernels
from .country_infer import CountryModel, FillReport, TrainConfig, fill_missing_countries, train_country_model
from .disambig import ScoreTable, disambiguate
from .ingest import Corpus, IngestConfig, group_by_author, parse_corpus, write_corpus
from .metrics import CitationProfile, aggregate_flows, citation_profiles, nmr_series
from .mobility import MOBILE_TYPES, MobilityResult, MobilityType, run_mobility, write_classes, write_events
from .synthgen import generate_corpus, load_spec
from .taxonomy_gender import (
    DISCIPLINE_FIELD, DISCIPLINES, MULTIDISCIPLINARY, UNDEFINED, DisciplineAssignment, GenderRecord,
    assign_all, gender_ratio_by_discipline, infer_gender, load_name_table, researcher_given_name,
)

log = logging.getLogger(__name__)

REPORT_FILES = (
    "mobility_table.csv", "citation_stats_by_discipline_and_type.csv", "flows_in.csv", "flows_out.csv",
    "nmr.csv", "citation_groups_by_corridor.csv", "gender_ratios.csv",
)
UNDEFINED_TEXT = "—"


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


# ---------------------------------------------------------------- config

@dataclass
class PipelineConfig:
    corpus: str | None = None
    synth_spec: str | None = None
    names: str | None = None
    weights: str | None = None
    general_nmr: str | None = None
    base_dir: str = "."
    focal: str = "DE"
    start_year: int = 1996
    end_year: int = 2020
    strict: bool = False
    snapshot_date: str = "2020-04-01"
    reference_year: int | None = None
    head_trim: int = 2
    tail_trim: int = 3
    vicinity: int = 2
    country_threshold: int = 6
    pub_threshold: int = 292
    merge_threshold: float = 0.5
    linkage: str = "average"
    z_threshold: float = 1.0
    p_min: float = 0.6
    c_min: int = 5
    model_seed: int = 0
    model_epochs: int = 5
    model_hidden: int = 64
    model_dim: int = 1 << 16
    model_lr: float = 0.1
    model_batch: int = 256
    model_max_records: int | None = None
    model_stratify: bool = False

    def resolve(self, p: str | None) -> Path | None:
        if p is None:
            return None
        path = Path(p)
        return path if path.is_absolute() else Path(self.base_dir) / path

    def ingest_config(self) -> IngestConfig:
        return IngestConfig(self.start_year, self.end_year, self.strict,
                            date.fromisoformat(self.snapshot_date))

    def train_config(self) -> TrainConfig:
        return TrainConfig(dim=self.model_dim, hidden=self.model_hidden, epochs=self.model_epochs,
                           batch_size=self.model_batch, learning_rate=self.model_lr,
                           seed=self.model_seed, max_records=self.model_max_records,
                           stratify=self.model_stratify)

    def public_dict(self) -> dict:
        d = dict(self.__dict__)
        d.pop("base_dir")
        return d


def load_pipeline_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    with open(path, "rb") as fh:
        raw = tomli.load(fh)
    paths = raw.get("paths", {})
    window = raw.get("window", {})
    trims = raw.get("trims", {})
    th = raw.get("thresholds", {})
    seeds = raw.get("seeds", {})
    model = raw.get("country_model", {})
    cfg = PipelineConfig(
        corpus=paths.get("corpus"), synth_spec=paths.get("synth_spec"), names=paths.get("names"),
        weights=paths.get("weights"), general_nmr=paths.get("general_nmr"),
        base_dir=str(path.parent),
        focal=raw.get("focal", "DE"),
        start_year=window.get("start_year", 1996), end_year=window.get("end_year", 2020),
        strict=raw.get("strict", False), snapshot_date=str(raw.get("snapshot_date", "2020-04-01")),
        reference_year=raw.get("reference_year"),
        head_trim=trims.get("head", 2), tail_trim=trims.get("tail", 3),
        vicinity=raw.get("vicinity", 2),
        country_threshold=th.get("countries", 6), pub_threshold=th.get("publications", 292),
        merge_threshold=float(th.get("merge", 0.5)), linkage=raw.get("linkage", "average"),
        z_threshold=float(th.get("z", 1.0)), p_min=float(th.get("p_min", 0.6)),
        c_min=int(th.get("c_min", 5)),
        model_seed=seeds.get("country_model", 0),
        model_epochs=model.get("epochs", 5), model_hidden=model.get("hidden", 64),
        model_dim=model.get("dim", 1 << 16), model_lr=float(model.get("learning_rate", 0.1)),
        model_batch=model.get("batch_size", 256), model_max_records=model.get("max_records"),
        model_stratify=model.get("stratify", False),
    )
    if (cfg.corpus is None) == (cfg.synth_spec is None):
        raise ValueError("config needs exactly one of paths.corpus or paths.synth_spec")
    return cfg


# ---------------------------------------------------------------- tables

@dataclass
class Table:
    header: tuple[str, ...]
    rows: list[tuple] = field(default_factory=list)


@dataclass
class ReportBundle:
    mobility_table: Table
    citation_stats: Table
    flows_in: Table
    flows_out: Table
    nmr: Table
    corridor: Table
    gender_ratios: Table
    manifest: dict

    def tables(self) -> dict[str, Table]:
        return dict(zip(REPORT_FILES, (self.mobility_table, self.citation_stats, self.flows_in,
                                       self.flows_out, self.nmr, self.corridor, self.gender_ratios)))


def fmt(x: Any, digits: int = 6) -> str:
    if x is None:
        return ""
    if x is UNDEFINED:
        return UNDEFINED_TEXT
    if isinstance(x, float):
        return f"{x:.{digits}f}"
    return str(x)


def mobility_table(classes: Sequence) -> Table:
    counts = {t: 0 for t in MobilityType}
    for c in classes:
        counts[c.mobility_type] += 1
    total = sum(counts.values())
    rows = [(t.value, counts[t], f"{100.0 * counts[t] / total:.2f}" if total else "")
            for t in MobilityType]
    return Table(("mobility_type", "count", "percent"), rows)


def _disc_order(d: str) -> int:
    return DISCIPLINES.index(d) if d in DISCIPLINES else len(DISCIPLINES)


def citation_stats_table(classes: Sequence, profiles: Mapping[str, CitationProfile],
                         disciplines: Mapping[str, str]) -> Table:
    buckets: dict[tuple[str, str], list[float]] = {}
    for c in classes:
        key = (disciplines.get(c.researcher_id, MULTIDISCIPLINARY), c.mobility_type.value)
        buckets.setdefault(key, []).append(profiles[c.researcher_id].annual_rate)
    order = {t.value: i for i, t in enumerate(MobilityType)}
    rows = []
    for (d, t) in sorted(buckets, key=lambda k: (_disc_order(k[0]), k[0], order[k[1]])):
        v = buckets[(d, t)]
        rows.append((d, DISCIPLINE_FIELD.get(d, MULTIDISCIPLINARY), t, len(v),
                     fmt(math.fsum(v) / len(v)), fmt(float(statistics.median(v))),
                     fmt(float(statistics.pstdev(v)))))
    return Table(("discipline", "field", "mobility_type", "n", "mean", "median", "std"), rows)


def flows_tables(events, focal: str, period: tuple[int, int]) -> tuple[Table, Table]:
    fin, fout = aggregate_flows(events, focal, period)
    header = ("origin", "destination", "count")
    return (Table(header, [(o, d, n) for (o, d), n in fin.counts.items()]),
            Table(header, [(o, d, n) for (o, d), n in fout.counts.items()]))


def nmr_table(series, general: Mapping[int, float] | None = None) -> Table:
    header = ("year", "inflow", "outflow", "population", "nmr")
    if general is not None:
        header += ("general_population_nmr",)
    rows = []
    for y, p in series.points.items():
        row = (y, p.inflow, p.outflow, p.population, fmt(p.nmr))
        if general is not None:
            row += (fmt(general.get(y)),)
        rows.append(row)
    return Table(header, rows)


def corridor_table(classes: Sequence, profiles: Mapping[str, CitationProfile]) -> Table:
    """Citation-group composition of immigrants by origin and emigrants by destination."""
    counts: dict[tuple[str, str], dict[str, int]] = {}
    for c in classes:
        p = profiles.get(c.researcher_id)
        if p is None or p.citation_group is None:
            continue
        if c.mobility_type is MobilityType.IMMIGRANT:
            key = (c.academic_origin, "in")
        elif c.mobility_type is MobilityType.EMIGRANT:
            key = (c.academic_destination, "out")
        else:
            continue
        g = counts.setdefault(key, {"Low": 0, "Medium": 0, "High": 0})
        g[p.citation_group.value] += 1
    rows = []
    for (country, direction) in sorted(counts):
        g = counts[(country, direction)]
        total = sum(g.values())
        for name in ("Low", "Medium", "High"):
            rows.append((country, direction, name, g[name], fmt(g[name] / total)))
    return Table(("country", "direction", "citation_group", "count", "share"), rows)


def gender_table(classes: Sequence, assignments: Mapping[str, DisciplineAssignment],
                 genders: Mapping[str, GenderRecord]) -> Table:
    all_r = gender_ratio_by_discipline(classes, assignments, genders, "all")
    mig_r = gender_ratio_by_discipline(classes, assignments, genders, "migrants")
    counts: dict[tuple[str, bool], list[int]] = {}
    for c in classes:
        a, g = assignments.get(c.researcher_id), genders.get(c.researcher_id)
        if a is None or g is None or g.gender not in ("male", "female"):
            continue
        for mig in (False, True):
            if mig and c.mobility_type not in MOBILE_TYPES:
                continue
            mf = counts.setdefault((a.discipline, mig), [0, 0])
            mf[0 if g.gender == "male" else 1] += 1
    discs = sorted({d for d, _ in counts}, key=lambda d: (_disc_order(d), d))
    rows = []
    for d in discs:
        ma, fa = counts.get((d, False), [0, 0])
        mm, fm = counts.get((d, True), [0, 0])
        rows.append((d, DISCIPLINE_FIELD.get(d, MULTIDISCIPLINARY),
                     fmt(all_r.get(d, UNDEFINED)), fmt(mig_r.get(d, UNDEFINED)), ma, fa, mm, fm))
    return Table(("discipline", "field", "ratio_all", "ratio_migrants", "male_all", "female_all",
                  "male_migrants", "female_migrants"), rows)


def emit_reports(bundle: ReportBundle, out_dir: str | Path) -> list[Path]:
    """Write every report table plus ``manifest.json``; returns the paths written."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tag = f"# manifest {bundle.manifest['manifest_hash']}"
    written = []
    digests = {}
    for name, table in bundle.tables().items():
        path = out_dir / name
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(tag + "\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(table.header)
            w.writerows(table.rows)
        digests[name] = _sha256(path)
        written.append(path)
    manifest = dict(bundle.manifest, files=digests)
    mpath = out_dir / "manifest.json"
    mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    written.append(mpath)
    return written


def read_report(path: str | Path) -> tuple[list[str], list[list[str]]]:
    """Header and rows of an emitted report, skipping the manifest line."""
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], rows[1:]


# ---------------------------------------------------------------- stages

def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def fill_stage(corpus: Corpus, cfg: TrainConfig, model_path: Path | None = None
               ) -> tuple[Corpus, FillReport, CountryModel | None]:
    """Train on labelled records and fill missing countries; no-op when nothing is fillable."""
    if not any(r.country is None and r.affiliation_text.strip() for r in corpus.records):
        unfillable = sum(1 for r in corpus.records if r.country is None)
        return corpus, FillReport(0, unfillable, len(corpus) - unfillable), None
    model = train_country_model(corpus, cfg)
    if model_path is not None:
        model.save(model_path)
    filled, report = fill_missing_countries(corpus, model)
    return filled, report, model


def classify_stage(groups: Mapping[str, Sequence], table, z_threshold: float = 1.0,
                   p_min: float = 0.6, c_min: int = 5
                   ) -> tuple[dict[str, DisciplineAssignment], dict[str, GenderRecord]]:
    assignments = assign_all(groups, z_threshold)
    genders = {rid: infer_gender(researcher_given_name(recs), table, p_min, c_min, rid)
               for rid, recs in groups.items()}
    return assignments, genders


def write_assignments(assignments: Mapping[str, DisciplineAssignment], path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("researcher_id", "field", "discipline"))
        for rid in sorted(assignments):
            a = assignments[rid]
            w.writerow((rid, a.field, a.discipline))


def read_assignments(path: Path) -> dict[str, DisciplineAssignment]:
    with open(path, newline="", encoding="utf-8") as fh:
        return {r["researcher_id"]: DisciplineAssignment(r["researcher_id"], r["field"], r["discipline"])
                for r in csv.DictReader(fh)}


def write_genders(genders: Mapping[str, GenderRecord], path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("researcher_id", "gender", "source"))
        for rid in sorted(genders):
            w.writerow((rid, genders[rid].gender, genders[rid].source))


def read_genders(path: Path) -> dict[str, GenderRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        return {r["researcher_id"]: GenderRecord(r["researcher_id"], r["gender"], r["source"])
                for r in csv.DictReader(fh)}


def write_citation_profiles(profiles: Mapping[str, CitationProfile], path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("researcher_id", "total_citations", "academic_age", "annual_rate",
                    "discipline_normalized", "citation_group"))
        for rid in sorted(profiles):
            p = profiles[rid]
            w.writerow((rid, p.total_citations, p.academic_age, fmt(p.annual_rate),
                        fmt(p.discipline_normalized), p.citation_group.value if p.citation_group else ""))


def read_general_nmr(path: Path) -> dict[int, float]:
    with open(path, newline="", encoding="utf-8") as fh:
        return {int(r["year"]): float(r["nmr"]) for r in csv.DictReader(fh) if r["nmr"].strip()}


@dataclass
class MetricsOutputs:
    profiles: dict[str, CitationProfile]
    thresholds: tuple[float, float] | None
    flows_in: Table
    flows_out: Table
    nmr: Table
    corridor: Table
    citation_stats: Table


def metrics_stage(corpus: Corpus, mob: MobilityResult, assignments: Mapping[str, DisciplineAssignment],
                  focal: str = "DE", head_trim: int = 2, tail_trim: int = 3, vicinity: int = 2,
                  reference_year: int | None = None,
                  general_nmr: Mapping[int, float] | None = None) -> MetricsOutputs:
    groups = group_by_author(corpus.records)
    disciplines = {rid: a.discipline for rid, a in assignments.items()}
    ref = corpus.window[1] if reference_year is None else reference_year
    profiles, thresholds = citation_profiles(groups, mob.classes, disciplines, ref)
    fin, fout = flows_tables(mob.events, focal, corpus.window)
    series = nmr_series(mob.events, corpus, focal, head_trim, tail_trim, vicinity)
    return MetricsOutputs(profiles, thresholds, fin, fout, nmr_table(series, general_nmr),
                          corridor_table(mob.classes, profiles),
                          citation_stats_table(mob.classes, profiles, disciplines))


def _manifest(cfg: PipelineConfig, inputs: Mapping[str, Path], run_id: str) -> dict:
    body = {
        "config": cfg.public_dict(),
        "inputs": {k: _sha256(p) for k, p in sorted(inputs.items())},
        "run_id": run_id,
        "seeds": {"country_model": cfg.model_seed},
        "versions": {"scholmig": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
    }
    digest = hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()
    # Both kernel backends give identical results, so the choice is recorded but not hashed.
    return dict(body, manifest_hash=digest, kernel_backend=kernels.BACKEND)


def run_pipeline(cfg: PipelineConfig, out_dir: str | Path) -> ReportBundle:
    """ingest -> fill-country -> disambiguate -> mobility -> classify -> metrics -> report.

    Intermediates go to ``out_dir/intermediate``.  If a stage fails, a
    ``STALE`` marker naming it is left in ``out_dir`` and PipelineError
    is raised.
    """
    out_dir = Path(out_dir)
    inter = out_dir / "intermediate"
    inter.mkdir(parents=True, exist_ok=True)
    stale = out_dir / "STALE"
    stage = "ingest"
    try:
        inputs: dict[str, Path] = {}
        if cfg.synth_spec is not None:
            spec_path = cfg.resolve(cfg.synth_spec)
            inputs["synth_spec"] = spec_path
            spec = load_spec(spec_path)
            corpus, truth = generate_corpus(spec)
            write_corpus(corpus, inter / "corpus.csv")
            (inter / "truth.json").write_text(truth.to_json(), encoding="utf-8")
            run_id = truth.run_id
            corpus = parse_corpus(inter / "corpus.csv", cfg.ingest_config())
        else:
            src = cfg.resolve(cfg.corpus)
            inputs["corpus"] = src
            corpus = parse_corpus(src, cfg.ingest_config())
            run_id = _sha256(src)[:16]
        for key in ("names", "weights", "general_nmr"):
            if getattr(cfg, key) is not None:
                inputs[key] = cfg.resolve(getattr(cfg, key))
        manifest = _manifest(cfg, inputs, run_id)
        manifest["rejected_rows"] = len(corpus.rejected)

        stage = "fill-country"
        corpus, fill_report, _ = fill_stage(corpus, cfg.train_config(), inter / "model.bin")
        write_corpus(corpus, inter / "corpus_filled.csv", with_imputed=True)
        _write_json(inter / "fill.json", fill_report.to_dict())

        stage = "disambiguate"
        weights = ScoreTable.from_toml(inputs["weights"]) if "weights" in inputs else ScoreTable()
        corpus, dis_report = disambiguate(corpus, weights, cfg.merge_threshold, cfg.country_threshold,
                                          cfg.pub_threshold, cfg.linkage)
        write_corpus(corpus, inter / "corpus_disamb.csv", with_imputed=True)
        _write_json(inter / "disamb.json", dis_report.to_dict())

        stage = "mobility"
        mob = run_mobility(corpus.records, cfg.focal)
        write_events(mob.events, inter / "events.csv")
        write_classes(mob.classes, inter / "classes.csv")

        stage = "classify"
        admitted = {rid: recs for rid, recs in group_by_author(corpus.records).items()
                    if rid in mob.profiles}
        table = load_name_table(inputs.get("names"))
        assignments, genders = classify_stage(admitted, table, cfg.z_threshold, cfg.p_min, cfg.c_min)
        write_assignments(assignments, inter / "assignments.csv")
        write_genders(genders, inter / "genders.csv")

        stage = "metrics"
        general = read_general_nmr(inputs["general_nmr"]) if "general_nmr" in inputs else None
        m = metrics_stage(corpus, mob, assignments, cfg.focal, cfg.head_trim, cfg.tail_trim,
                          cfg.vicinity, cfg.reference_year, general)
        write_citation_profiles(m.profiles, inter / "citation_profiles.csv")

        stage = "report"
        known = sum(1 for g in genders.values() if g.gender != "unknown")
        manifest["gender_coverage"] = fmt(known / len(genders)) if genders else ""
        manifest["citation_thresholds"] = [fmt(t) for t in m.thresholds] if m.thresholds else None
        bundle = ReportBundle(
            mobility_table=mobility_table(mob.classes), citation_stats=m.citation_stats,
            flows_in=m.flows_in, flows_out=m.flows_out, nmr=m.nmr, corridor=m.corridor,
            gender_ratios=gender_table(mob.classes, assignments, genders), manifest=manifest,
        )
        emit_reports(bundle, out_dir)
    except Exception as e:
        stale.write_text(f"{stage}: {e}\n", encoding="utf-8")
        raise PipelineError(stage, e) from e
    if stale.exists():
        stale.unlink()
    return bundle
