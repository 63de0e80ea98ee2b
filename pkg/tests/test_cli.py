"""Batch driver: config handling, exit codes, reruns, quarantine, import."""

import json
import shutil
from types import SimpleNamespace

import numpy as np
import pytest

from horizonscan import cli, lda
from horizonscan.cli import (
    EXIT_OK,
    EXIT_STAGE,
    EXIT_USAGE,
    PipelineConfig,
    UsageError,
    build_config,
    compute_run_id,
    read_config_file,
)
from horizonscan.mallet import TopicDiagnostics, write_diagnostics_xml


def _args(config=None, seed=None, threads=None):
    return SimpleNamespace(config=config, seed=seed, threads=threads)


def _write_cfg(path, **kv):
    path.write_text("".join(f"{k}={v}\n" for k, v in kv.items()),
                    encoding="utf-8")
    return path


# --- config file parsing -----------------------------------------------------

def test_read_config_file_comments_and_whitespace(tmp_path):
    p = tmp_path / "a.cfg"
    p.write_text(
        "# full line comment\n"
        "\n"
        "  n_topics = 12   # trailing comment\n"
        "corpus=  data.jsonl  \n",
        encoding="utf-8")
    assert read_config_file(p) == {"n_topics": "12", "corpus": "data.jsonl"}


def test_read_config_file_rejects_unknown_key(tmp_path):
    p = _write_cfg(tmp_path / "a.cfg", n_topcis=10)
    with pytest.raises(UsageError, match=r"a.cfg:1: unknown config key 'n_topcis'"):
        read_config_file(p)


def test_read_config_file_rejects_bare_line(tmp_path):
    p = tmp_path / "a.cfg"
    p.write_text("n_topics\n", encoding="utf-8")
    with pytest.raises(UsageError, match="expected key=value"):
        read_config_file(p)


def test_read_config_file_missing(tmp_path):
    with pytest.raises(UsageError, match="config file not found"):
        read_config_file(tmp_path / "nope.cfg")


def test_build_config_types_and_overrides(tmp_path):
    p = _write_cfg(tmp_path / "a.cfg", n_topics=7, alpha_sum=2.5, seed=3,
                   corpus="c.jsonl")
    cfg = build_config(_args(config=str(p)))
    assert cfg.n_topics == 7
    assert cfg.alpha_sum == 2.5
    assert cfg.seed == 3
    cfg = build_config(_args(config=str(p), seed=9, threads=4))
    assert cfg.seed == 9
    assert cfg.threads == 4


def test_build_config_bad_int(tmp_path):
    p = _write_cfg(tmp_path / "a.cfg", n_topics="many")
    with pytest.raises(UsageError, match="wants an integer"):
        build_config(_args(config=str(p)))


def test_build_config_bad_float(tmp_path):
    p = _write_cfg(tmp_path / "a.cfg", alpha_sum="lots")
    with pytest.raises(UsageError, match="wants a number"):
        build_config(_args(config=str(p)))


def test_pipeline_config_validation():
    with pytest.raises(UsageError, match="at least 2"):
        PipelineConfig(n_topics=1)
    with pytest.raises(UsageError, match="year window is empty"):
        PipelineConfig(year_min=2019, year_max=2014)


# --- exit codes --------------------------------------------------------------

def test_missing_corpus_is_usage_error(tmp_path, capsys):
    cfg = _write_cfg(tmp_path / "a.cfg", corpus=str(tmp_path / "absent.jsonl"))
    rc = cli.main(["--config", str(cfg), "--out", str(tmp_path / "out"), "ingest"])
    assert rc == EXIT_USAGE
    err = capsys.readouterr().err
    assert "absent.jsonl" in err


def test_unconfigured_corpus_is_usage_error(tmp_path, capsys):
    rc = cli.main(["--out", str(tmp_path / "out"), "ingest"])
    assert rc == EXIT_USAGE
    assert "corpus" in capsys.readouterr().err


def test_unknown_config_key_is_usage_error(tmp_path, capsys):
    cfg = tmp_path / "a.cfg"
    cfg.write_text("n_tops=5\n", encoding="utf-8")
    rc = cli.main(["--config", str(cfg), "--out", str(tmp_path / "out"), "run"])
    assert rc == EXIT_USAGE
    assert "n_tops" in capsys.readouterr().err


def test_model_before_ingest_is_usage_error(tmp_path, capsys):
    rc = cli.main(["--out", str(tmp_path / "out"), "model"])
    assert rc == EXIT_USAGE
    assert "run ingest first" in capsys.readouterr().err


def test_stage_commands_require_out(capsys):
    rc = cli.main(["ingest"])
    assert rc == EXIT_USAGE
    assert "--out" in capsys.readouterr().err
    rc = cli.main(["synth"])
    assert rc == EXIT_USAGE
    rc = cli.main(["serve"])
    assert rc == EXIT_USAGE


# --- determinism -------------------------------------------------------------

def test_rerun_is_byte_identical(pipeline_dir, synth_dir, tmp_path):
    out2 = tmp_path / "run2"
    rc = cli.main(["--config", str(synth_dir / "pipeline.cfg"),
                   "--out", str(out2), "run"])
    assert rc == EXIT_OK
    for rel in ("metrics/fits.csv", "metrics/timeseries.csv", "model/state.gz",
                "model/coherence.csv", "layout/coords.csv", "lq/activity.csv",
                "report/top_topics.csv"):
        assert (out2 / rel).read_bytes() == (pipeline_dir / rel).read_bytes(), rel
    meta1 = json.loads((pipeline_dir / "meta.json").read_text(encoding="utf-8"))
    meta2 = json.loads((out2 / "meta.json").read_text(encoding="utf-8"))
    assert meta1["run_id"] == meta2["run_id"]


def test_seed_changes_run_id(synth_dir):
    raw = read_config_file(synth_dir / "pipeline.cfg")
    base = PipelineConfig(**{k: int(v) if k in cli._INT_KEYS
                             else float(v) if k in cli._FLOAT_KEYS else v
                             for k, v in raw.items()})
    a = compute_run_id(base.seed, base.run_id_inputs())
    bumped = PipelineConfig(**{**{f: getattr(base, f) for f in
                                  base.run_id_inputs()}, "seed": base.seed + 1})
    b = compute_run_id(bumped.seed, bumped.run_id_inputs())
    assert a != b


# --- failure quarantine ------------------------------------------------------

def test_failed_run_quarantines_partial_output(tmp_path, capsys):
    corpus = tmp_path / "old.jsonl"
    rows = [{"doc_id": f"d{i}", "title": "t", "abstract": "a b c",
             "year": 1999, "source": "publication", "countries": ["US"]}
            for i in range(3)]
    corpus.write_text("".join(json.dumps(r) + "\n" for r in rows),
                      encoding="utf-8")
    cfgfile = _write_cfg(tmp_path / "a.cfg", corpus=str(corpus))
    out = tmp_path / "out"
    rc = cli.main(["--config", str(cfgfile), "--out", str(out), "run"])
    assert rc == EXIT_STAGE
    err = capsys.readouterr().err
    assert "partial outputs moved" in err
    cfg = build_config(_args(config=str(cfgfile)))
    rid = compute_run_id(cfg.seed, cfg.run_id_inputs())
    assert [e.name for e in out.iterdir()] == [rid]
    partial = out / rid / "partial"
    assert (partial / "corpus").is_dir()
    assert not (out / "meta.json").exists()
    assert not (partial / "meta.json").exists()


def test_rejected_docs_reach_the_rejects_file(tmp_path):
    corpus = tmp_path / "mixed.jsonl"
    good = {"doc_id": "ok", "title": "t", "abstract": "alpha beta gamma",
            "year": 2015, "source": "publication", "countries": ["US"]}
    bad = {"doc_id": "late", "title": "t", "abstract": "a", "year": 1999,
           "source": "publication", "countries": []}
    corpus.write_text(json.dumps(good) + "\n" + json.dumps(bad) + "\n",
                      encoding="utf-8")
    cfgfile = _write_cfg(tmp_path / "a.cfg", corpus=str(corpus))
    out = tmp_path / "out"
    rc = cli.main(["--config", str(cfgfile), "--out", str(out), "ingest"])
    assert rc == EXIT_OK
    rejects = (out / "corpus" / "rejects.csv").read_text(encoding="utf-8")
    assert rejects.splitlines()[0] == "line,reason"
    assert "2," in rejects and "outside window" in rejects


# --- import of external sampler state ---------------------------------------

@pytest.fixture()
def import_dir(pipeline_dir, tmp_path):
    """Corpus artifacts without a model, as if the sampler ran elsewhere."""
    dest = tmp_path / "imported"
    dest.mkdir()
    shutil.copy(pipeline_dir / "docs.jsonl", dest / "docs.jsonl")
    shutil.copytree(pipeline_dir / "corpus", dest / "corpus")
    return dest


def test_import_mallet_matches_in_process_model(pipeline_dir, import_dir):
    state = pipeline_dir / "model" / "state.gz"
    rc = cli.main(["--out", str(import_dir), "import-mallet",
                   "--state", str(state)])
    assert rc == EXIT_OK
    ours = lda.load_model(pipeline_dir / "model")
    theirs = lda.load_model(import_dir / "model")
    # identical parameters; only the sweep history cannot survive the
    # state-file round trip
    assert theirs.doc_ids == ours.doc_ids
    assert theirs.vocabulary == ours.vocabulary
    assert np.array_equal(theirs.alpha, ours.alpha)
    assert theirs.beta == ours.beta
    assert np.array_equal(theirs.doc_topic, ours.doc_topic)
    assert np.array_equal(theirs.term_topic, ours.term_topic)
    assert (import_dir / "model" / "state.gz").read_bytes() == state.read_bytes()
    assert (import_dir / "model" / "coherence.csv").read_bytes() == \
        (pipeline_dir / "model" / "coherence.csv").read_bytes()


def test_import_mallet_with_diagnostics(pipeline_dir, import_dir, tmp_path):
    diags = {t: TopicDiagnostics(t, -10.0 * (t + 1), [("w", 1.0)])
             for t in range(5)}
    xml = tmp_path / "diag.xml"
    write_diagnostics_xml(diags, xml)
    rc = cli.main(["--out", str(import_dir), "import-mallet",
                   "--state", str(pipeline_dir / "model" / "state.gz"),
                   "--diagnostics", str(xml)])
    assert rc == EXIT_OK
    text = (import_dir / "model" / "coherence.csv").read_text(encoding="utf-8")
    assert "diagnostics" in text
    assert "-30.0" in text


def test_import_mallet_doc_count_mismatch(pipeline_dir, import_dir, capsys):
    lines = (import_dir / "docs.jsonl").read_text(encoding="utf-8").splitlines()
    (import_dir / "docs.jsonl").write_text("\n".join(lines[:-1]) + "\n",
                                           encoding="utf-8")
    rc = cli.main(["--out", str(import_dir), "import-mallet",
                   "--state", str(pipeline_dir / "model" / "state.gz")])
    assert rc == EXIT_STAGE
    assert "corpus metadata" in capsys.readouterr().err


def test_import_mallet_missing_state(import_dir, capsys):
    rc = cli.main(["--out", str(import_dir), "import-mallet",
                   "--state", str(import_dir / "ghost.gz")])
    assert rc == EXIT_USAGE
    assert "ghost.gz" in capsys.readouterr().err


def test_report_subcommand_on_snapshot(snapshot_copy):
    shutil.rmtree(snapshot_copy / "report")
    rc = cli.main(["--out", str(snapshot_copy), "report"])
    assert rc == EXIT_OK
    assert (snapshot_copy / "report" / "top_topics.csv").exists()


def test_synth_subcommand_writes_bundle(tmp_path):
    out = tmp_path / "synthetic"
    rc = cli.main(["--out", str(out), "synth", "--n-docs", "50",
                   "--n-topics", "3"])
    assert rc == EXIT_OK
    assert (out / "corpus.jsonl").exists()
    assert (out / "truth.json").exists()
    assert (out / "pipeline.cfg").exists()
