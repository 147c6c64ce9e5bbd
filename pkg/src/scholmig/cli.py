"""``scholmig`` command line.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .country_infer import CountryModel, ModelError, TrainConfig, fill_missing_countries, train_country_model
from .disambig import DisambiguationError, ScoreTable, disambiguate
from .ingest import Corpus, IngestConfig, IngestError, group_by_author, load_ingest_config, parse_corpus, write_corpus
from .metrics import MetricsError
from .mobility import MobilityError, MobilityResult, read_classes, read_events, run_mobility, write_classes, write_events
from .pipeline import (
    PipelineError, classify_stage, load_pipeline_config, metrics_stage, read_assignments,
    read_general_nmr, run_pipeline, write_assignments, write_citation_profiles, write_genders,
)
from .synthgen import GroundTruth, PipelineOutputs, SynthError, generate_corpus, load_spec, score_pipeline
from .taxonomy_gender import load_name_table

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3
DATA_ERRORS = (IngestError, ModelError, DisambiguationError, MobilityError, MetricsError,
               SynthError, FileNotFoundError, ValueError, KeyError)

log = logging.getLogger("scholmig")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _two_paths(value: str) -> tuple[Path, Path]:
    parts = value.split(",")
    if len(parts) != 2 or not all(parts):
        raise UsageError(f"--out expects two comma-separated paths, got {value!r}")
    return Path(parts[0]), Path(parts[1])


def _ingest_cfg(args) -> IngestConfig:
    return load_ingest_config(args.config) if args.config else IngestConfig()


def _load(args) -> Corpus:
    corpus = parse_corpus(args.input, _ingest_cfg(args))
    if corpus.rejected:
        log.warning("%d rows rejected", len(corpus.rejected))
    return corpus


def cmd_synth(args) -> int:
    corpus, truth = generate_corpus(load_spec(args.spec))
    write_corpus(corpus, args.out)
    Path(args.truth).write_text(truth.to_json(), encoding="utf-8")
    log.info("wrote %d records for %d persons", len(corpus), len(truth.persons))
    return EXIT_OK


def cmd_train_country(args) -> int:
    cfg = TrainConfig(seed=args.seed, epochs=args.epochs, hidden=args.hidden,
                      learning_rate=args.lr, max_records=args.max_records, stratify=args.stratify)
    model = train_country_model(_load(args), cfg)
    model.save(args.out)
    log.info("held-out accuracy %.4f", model.meta.held_out_accuracy)
    return EXIT_OK


def cmd_fill_country(args) -> int:
    corpus, report = fill_missing_countries(_load(args), CountryModel.load(args.model))
    write_corpus(corpus, args.out, with_imputed=True)
    if args.report:
        Path(args.report).write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_disambiguate(args) -> int:
    weights = ScoreTable.from_toml(args.weights) if args.weights else ScoreTable()
    corpus, report = disambiguate(_load(args), weights, args.threshold, args.max_countries,
                                  args.max_publications, args.linkage)
    write_corpus(corpus, args.out, with_imputed=True)
    if args.report:
        Path(args.report).write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n",
                                     encoding="utf-8")
    return EXIT_OK


def cmd_mobility(args) -> int:
    events_path, classes_path = _two_paths(args.out)
    res = run_mobility(_load(args).records, args.focal)
    write_events(res.events, events_path)
    write_classes(res.classes, classes_path)
    log.info("%d events, %d classified, %d unplaced, %d not admitted",
             len(res.events), len(res.classes), res.n_unplaced, res.n_not_admitted)
    return EXIT_OK


def cmd_classify(args) -> int:
    a_path, g_path = _two_paths(args.out)
    groups = group_by_author(_load(args).records)
    assignments, genders = classify_stage(groups, load_name_table(args.names), args.z_threshold,
                                          args.p_min, args.c_min)
    write_assignments(assignments, a_path)
    write_genders(genders, g_path)
    return EXIT_OK


def cmd_metrics(args) -> int:
    corpus = _load(args)
    classes = read_classes(args.classes)
    mob = MobilityResult({}, read_events(args.events), classes)
    assignments = read_assignments(args.assignments) if args.assignments else {}
    general = read_general_nmr(args.general_nmr) if args.general_nmr else None
    m = metrics_stage(corpus, mob, assignments, args.focal, args.head_trim, args.tail_trim,
                      args.vicinity, args.reference_year, general)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, table in (("flows_in.csv", m.flows_in), ("flows_out.csv", m.flows_out),
                        ("nmr.csv", m.nmr), ("citation_groups_by_corridor.csv", m.corridor)):
        with open(out / name, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(table.header)
            w.writerows(table.rows)
    write_citation_profiles(m.profiles, out / "citation_profiles.csv")
    return EXIT_OK


def cmd_pipeline(args) -> int:
    bundle = run_pipeline(load_pipeline_config(args.config), args.out_dir)
    print(bundle.manifest["manifest_hash"])
    return EXIT_OK


def cmd_score(args) -> int:
    out = Path(args.out_dir)
    inter = out / "intermediate"
    manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
    truth = GroundTruth.from_json(Path(args.truth).read_text(encoding="utf-8"))
    corpus = parse_corpus(inter / "corpus_disamb.csv")
    outputs = PipelineOutputs(manifest["run_id"], corpus, read_events(inter / "events.csv"),
                              read_classes(inter / "classes.csv"))
    print(json.dumps(score_pipeline(truth, outputs).to_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="scholmig", description="Researcher migration analytics from authorship records.")
    p.add_argument("--version", action="version", version=f"scholmig {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def with_input(sp):
        sp.add_argument("--in", dest="input", required=True, help="corpus CSV or JSONL")
        sp.add_argument("--config", help="ingest TOML (window, strict, snapshot_date)")
        return sp

    s = sub.add_parser("synth", help="generate a synthetic corpus with ground truth")
    s.add_argument("--spec", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--truth", required=True)
    s.set_defaults(func=cmd_synth)

    s = with_input(sub.add_parser("train-country", help="train the affiliation country classifier"))
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--epochs", type=int, default=5)
    s.add_argument("--hidden", type=int, default=64)
    s.add_argument("--lr", type=float, default=0.1)
    s.add_argument("--max-records", type=int)
    s.add_argument("--stratify", action="store_true")
    s.set_defaults(func=cmd_train_country)

    s = with_input(sub.add_parser("fill-country", help="impute missing countries"))
    s.add_argument("--model", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--report")
    s.set_defaults(func=cmd_fill_country)

    s = with_input(sub.add_parser("disambiguate", help="split suspicious author IDs"))
    s.add_argument("--out", required=True)
    s.add_argument("--weights")
    s.add_argument("--threshold", type=float, default=0.5)
    s.add_argument("--linkage", choices=("single", "complete", "average"), default="average")
    s.add_argument("--max-countries", type=int, default=6)
    s.add_argument("--max-publications", type=int, default=292)
    s.add_argument("--report")
    s.set_defaults(func=cmd_disambiguate)

    s = with_input(sub.add_parser("mobility", help="detect events and classify mobility"))
    s.add_argument("--focal", default="DE")
    s.add_argument("--out", required=True, help="events.csv,classes.csv")
    s.set_defaults(func=cmd_mobility)

    s = with_input(sub.add_parser("classify", help="discipline and gender per researcher"))
    s.add_argument("--names", help="name,gender,probability,count table (bundled by default)")
    s.add_argument("--out", required=True, help="assignments.csv,genders.csv")
    s.add_argument("--z-threshold", type=float, default=1.0)
    s.add_argument("--p-min", type=float, default=0.6)
    s.add_argument("--c-min", type=int, default=5)
    s.set_defaults(func=cmd_classify)

    s = with_input(sub.add_parser("metrics", help="flows, NMR and citation profiles"))
    s.add_argument("--events", required=True)
    s.add_argument("--classes", required=True)
    s.add_argument("--assignments")
    s.add_argument("--general-nmr", help="CSV year,nmr for the general population")
    s.add_argument("--focal", default="DE")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--head-trim", type=int, default=2)
    s.add_argument("--tail-trim", type=int, default=3)
    s.add_argument("--vicinity", type=int, default=2)
    s.add_argument("--reference-year", type=int)
    s.set_defaults(func=cmd_metrics)

    s = sub.add_parser("pipeline", help="run every stage and emit the report bundle")
    s.add_argument("--config", required=True)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_pipeline)

    s = sub.add_parser("score", help="score a synthetic pipeline run against its ground truth")
    s.add_argument("--truth", required=True)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_score)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"scholmig: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as e:
        print(f"scholmig: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except PipelineError as e:
        print(f"scholmig: {e}", file=sys.stderr)
        return EXIT_DATA if isinstance(e.cause, DATA_ERRORS) else EXIT_INTERNAL
    except DATA_ERRORS as e:
        print(f"scholmig: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except Exception as e:  # noqa: BLE001
        log.exception("internal error")
        print(f"scholmig: internal error: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
