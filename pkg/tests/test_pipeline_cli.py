import json
import subprocess
import sys

import pytest

from scholmig.cli import main
from scholmig.ingest import COLUMNS
from scholmig.pipeline import (
    REPORT_FILES, PipelineConfig, PipelineError, load_pipeline_config, read_report, run_pipeline,
)

SYNTH = """seed = 5
n_researchers = 300
p_tie_year = 0.2
n_id_collisions = 5
n_prolific = 1
n_mask_country = 20
"""


def _config(tmp_path, extra=""):
    (tmp_path / "synth.toml").write_text(SYNTH)
    p = tmp_path / "run.toml"
    p.write_text(f'focal = "DE"\n{extra}\n[paths]\nsynth_spec = "synth.toml"\n'
                 "[window]\nstart_year = 1996\nend_year = 2020\n")
    return p


@pytest.fixture(scope="module")
def bundle_dir(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("run")
    run_pipeline(load_pipeline_config(_config(tmp)), tmp / "out")
    return tmp / "out"


def test_all_reports_exist_and_parse(bundle_dir):
    manifest = json.loads((bundle_dir / "manifest.json").read_text())
    for name in REPORT_FILES:
        first = (bundle_dir / name).read_text().splitlines()[0]
        assert first == f"# manifest {manifest['manifest_hash']}"
        header, rows = read_report(bundle_dir / name)
        assert header and all(len(r) == len(header) for r in rows)
    assert set(manifest["files"]) == set(REPORT_FILES)
    assert "timestamp" not in json.dumps(manifest)
    for f in ("corpus.csv", "corpus_filled.csv", "corpus_disamb.csv", "events.csv", "classes.csv",
              "assignments.csv", "genders.csv", "citation_profiles.csv", "model.bin", "fill.json",
              "disamb.json", "truth.json"):
        assert (bundle_dir / "intermediate" / f).is_file()


def test_mobility_table_sums_to_100(bundle_dir):
    header, rows = read_report(bundle_dir / "mobility_table.csv")
    assert header == ["mobility_type", "count", "percent"]
    assert len(rows) == 6
    assert abs(sum(float(r[2]) for r in rows) - 100.0) <= 0.05


def test_corridor_schema(bundle_dir):
    header, rows = read_report(bundle_dir / "citation_groups_by_corridor.csv")
    assert header == ["country", "direction", "citation_group", "count", "share"]
    keys = [(r[0], r[1], r[2]) for r in rows]
    assert len(keys) == len(set(keys)) and rows
    corridors = {(r[0], r[1]) for r in rows}
    assert len(rows) == 3 * len(corridors)
    for c in corridors:
        assert abs(sum(float(r[4]) for r in rows if (r[0], r[1]) == c) - 1) < 1e-5


def test_gender_ratio_columns(bundle_dir):
    header, rows = read_report(bundle_dir / "gender_ratios.csv")
    assert {"ratio_all", "ratio_migrants"} <= set(header)
    assert rows


def test_nmr_report_window(bundle_dir):
    _, rows = read_report(bundle_dir / "nmr.csv")
    assert [int(r[0]) for r in rows] == list(range(1998, 2018))


def test_byte_identical_rerun(tmp_path, bundle_dir):
    run_pipeline(load_pipeline_config(_config(tmp_path)), tmp_path / "again")
    for name in REPORT_FILES + ("manifest.json",):
        assert (tmp_path / "again" / name).read_bytes() == (bundle_dir / name).read_bytes()


def test_config_change_changes_hash(tmp_path, bundle_dir):
    run_pipeline(load_pipeline_config(_config(tmp_path, "vicinity = 3")), tmp_path / "v3")
    a = json.loads((tmp_path / "v3" / "manifest.json").read_text())["manifest_hash"]
    b = json.loads((bundle_dir / "manifest.json").read_text())["manifest_hash"]
    assert a != b


def test_empty_corpus_gives_headers_only(tmp_path):
    (tmp_path / "c.csv").write_text(",".join(COLUMNS) + "\n")
    cfg = PipelineConfig(corpus="c.csv", base_dir=str(tmp_path))
    run_pipeline(cfg, tmp_path / "out")
    for name in REPORT_FILES:
        header, rows = read_report(tmp_path / "out" / name)
        assert header
        if name == "mobility_table.csv":
            assert [r[1] for r in rows] == ["0"] * 6
        elif name != "nmr.csv":
            assert rows == []


def test_stage_failure_marks_stale(tmp_path):
    (tmp_path / "c.csv").write_text("not,a,corpus\n")
    cfg = PipelineConfig(corpus="c.csv", base_dir=str(tmp_path))
    with pytest.raises(PipelineError) as e:
        run_pipeline(cfg, tmp_path / "out")
    assert e.value.stage == "ingest"
    assert (tmp_path / "out" / "STALE").read_text().startswith("ingest:")


def test_config_requires_one_source(tmp_path):
    p = tmp_path / "r.toml"
    p.write_text("focal = 'DE'\n")
    with pytest.raises(ValueError):
        load_pipeline_config(p)


def test_cli_stage_suffix_reproduces_bundle(tmp_path, bundle_dir):
    inter = bundle_dir / "intermediate"
    ev, cl = tmp_path / "e.csv", tmp_path / "k.csv"
    assert main(["mobility", "--in", str(inter / "corpus_disamb.csv"), "--out", f"{ev},{cl}"]) == 0
    assert ev.read_bytes() == (inter / "events.csv").read_bytes()
    assert cl.read_bytes() == (inter / "classes.csv").read_bytes()
    a, g = tmp_path / "a.csv", tmp_path / "g.csv"
    assert main(["classify", "--in", str(inter / "corpus_disamb.csv"), "--out", f"{a},{g}"]) == 0
    assert main(["metrics", "--in", str(inter / "corpus_disamb.csv"), "--events", str(ev),
                 "--classes", str(cl), "--assignments", str(inter / "assignments.csv"),
                 "--out-dir", str(tmp_path / "m")]) == 0
    for name in ("flows_in.csv", "flows_out.csv", "nmr.csv", "citation_groups_by_corridor.csv"):
        lines = (bundle_dir / name).read_text().splitlines()[1:]
        assert (tmp_path / "m" / name).read_text().splitlines() == lines
    assert (tmp_path / "m" / "citation_profiles.csv").read_bytes() == \
        (inter / "citation_profiles.csv").read_bytes()


def test_cli_country_and_disambiguation_chain(tmp_path):
    (tmp_path / "s.toml").write_text(SYNTH)
    c, t = tmp_path / "c.csv", tmp_path / "t.json"
    assert main(["synth", "--spec", str(tmp_path / "s.toml"), "--out", str(c), "--truth", str(t)]) == 0
    m = tmp_path / "m.bin"
    assert main(["train-country", "--in", str(c), "--out", str(m), "--seed", "1"]) == 0
    f, rep = tmp_path / "f.csv", tmp_path / "fill.json"
    assert main(["fill-country", "--in", str(c), "--model", str(m), "--out", str(f), "--report", str(rep)]) == 0
    assert json.loads(rep.read_text())["filled"] == 20
    d, drep = tmp_path / "d.csv", tmp_path / "d.json"
    (tmp_path / "w.toml").write_text("[weights]\nname_exact = 2\n")
    assert main(["disambiguate", "--in", str(f), "--out", str(d), "--weights", str(tmp_path / "w.toml"),
                 "--threshold", "0.5", "--report", str(drep)]) == 0
    report = json.loads(drep.read_text())
    assert report["n_suspicious"] >= 5 and len(report["clusters_per_id"]) == report["n_suspicious"]


def test_cli_score(tmp_path, bundle_dir, capsys):
    assert main(["score", "--truth", str(bundle_dir / "intermediate" / "truth.json"),
                 "--out-dir", str(bundle_dir)]) == 0
    card = json.loads(capsys.readouterr().out)
    assert card["event_recall"] >= 0.95 and card["cluster_purity"] >= 0.9


@pytest.mark.parametrize("argv, code", [
    ([], 1),
    (["mobility", "--in", "x.csv"], 1),
    (["mobility", "--in", "x.csv", "--out", "only-one"], 1),
    (["mobility", "--in", "does-not-exist.csv", "--out", "a,b"], 2),
    (["bogus"], 1),
])
def test_cli_exit_codes(argv, code, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == code


def test_cli_pipeline_entry_point(tmp_path):
    cfg = _config(tmp_path)
    r = subprocess.run([sys.executable, "-m", "scholmig.cli", "pipeline", "--config", str(cfg),
                        "--out-dir", str(tmp_path / "o")], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert len(r.stdout.strip()) == 64


def test_cli_pipeline_data_error(tmp_path):
    (tmp_path / "c.csv").write_text("bad\n")
    (tmp_path / "r.toml").write_text('[paths]\ncorpus = "c.csv"\n')
    assert main(["pipeline", "--config", str(tmp_path / "r.toml"), "--out-dir", str(tmp_path / "o")]) == 2


def test_pure_python_backend_gives_same_bundle(tmp_path, bundle_dir):
    import os
    cfg = _config(tmp_path)
    env = dict(os.environ, SCHOLMIG_PURE_PYTHON="1")
    code = ("import sys; from scholmig import kernels; assert kernels.BACKEND == 'python';"
            "from scholmig.pipeline import *; run_pipeline(load_pipeline_config(sys.argv[1]), sys.argv[2])")
    r = subprocess.run([sys.executable, "-c", code, str(cfg), str(tmp_path / "py")], env=env,
                       capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    for name in REPORT_FILES:
        assert (tmp_path / "py" / name).read_bytes() == (bundle_dir / name).read_bytes()
