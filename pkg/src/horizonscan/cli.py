"""Batch driver: ingest -> model -> metrics -> lq -> layout -> snapshot.

Each stage is its own subcommand writing into a shared run directory
whose layout doubles as the snapshot layout; `run` chains them all and
quarantines partial output on failure. meta.json is written last and
acts as the commit marker: a directory without it is not a snapshot.

Exit codes: 0 success, 2 usage or input problem, 3 stage failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import shutil
import sys
from dataclasses import dataclass, field, fields as dc_fields
from pathlib import Path

import numpy as np

from . import growth, ingest, lda, lq as lq_mod, layout as layout_mod
from . import reports, synth as synth_mod
from .mallet import (coherence_map, parse_diagnostics_xml, parse_mallet_state,
                     write_mallet_state)
from .snapshot import Snapshot, SnapshotPaths, compute_run_id, write_coherence_csv

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_STAGE = 3


class UsageError(Exception):
    """Bad flags, missing files, malformed config: the caller's problem."""


@dataclass
class PipelineConfig:
    corpus: str = ""
    year_min: int = 2014
    year_max: int = 2018
    n_topics: int = 20
    n_sweeps: int = 200
    seed: int = 0
    alpha_sum: float = 5.0
    beta: float = 0.01
    hyper_every: int = 10
    report_every: int = 10
    max_doc_fraction: float = 0.05
    vocab_size: int = 200_000
    top_n: int = 200
    coherence_floor: float = -1000.0
    calibration_tol: float = 0.05
    min_calibration_topics: int = 100
    knn_k: int = 15
    stopwords: str = ""
    multiword_stops: str = ""
    lemma_map: str = ""
    replacements: str = ""
    fields_file: str = ""
    threads: int = 1

    def __post_init__(self):
        if self.n_topics < 2:
            raise UsageError("n_topics must be at least 2")
        if self.year_max < self.year_min:
            raise UsageError("year window is empty (year_max < year_min)")

    @property
    def year_range(self):
        return (self.year_min, self.year_max)

    def run_id_inputs(self) -> dict:
        """Everything that can change results. threads only changes wall
        time, so it stays out; so does anything about output placement."""
        skip = {"threads"}
        return {f.name: getattr(self, f.name) for f in dc_fields(self)
                if f.name not in skip}


_INT_KEYS = {"year_min", "year_max", "n_topics", "n_sweeps", "seed",
             "hyper_every", "report_every", "vocab_size", "top_n",
             "min_calibration_topics", "knn_k", "threads"}
_FLOAT_KEYS = {"alpha_sum", "beta", "max_doc_fraction", "coherence_floor",
               "calibration_tol"}


def read_config_file(path) -> dict:
    """Flat key=value lines; '#' starts a comment; unknown keys rejected."""
    known = {f.name for f in dc_fields(PipelineConfig)}
    out = {}
    p = Path(path)
    if not p.exists():
        raise UsageError(f"config file not found: {path}")
    for lineno, line in enumerate(p.read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in known:
            raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
        out[key] = value
    return out


def build_config(args) -> PipelineConfig:
    raw = read_config_file(args.config) if args.config else {}
    if args.seed is not None:
        raw["seed"] = str(args.seed)
    if args.threads is not None:
        raw["threads"] = str(args.threads)
    kwargs = {}
    for key, value in raw.items():
        if key in _INT_KEYS:
            try:
                kwargs[key] = int(value)
            except ValueError:
                raise UsageError(f"config key {key} wants an integer, got {value!r}")
        elif key in _FLOAT_KEYS:
            try:
                kwargs[key] = float(value)
            except ValueError:
                raise UsageError(f"config key {key} wants a number, got {value!r}")
        else:
            kwargs[key] = value
    return PipelineConfig(**kwargs)


def _require_out(args) -> SnapshotPaths:
    if not args.out:
        raise UsageError("--out is required for this subcommand")
    return SnapshotPaths(args.out)


def _vocab_prep(cfg: PipelineConfig) -> ingest.VocabPrepConfig:
    def maybe(path, reader, empty):
        if not path:
            return empty
        if not Path(path).exists():
            raise UsageError(f"config map file not found: {path}")
        return reader(path)
    return ingest.VocabPrepConfig(
        stopwords=maybe(cfg.stopwords, ingest.read_wordlist, set()),
        multiword_stops=maybe(cfg.multiword_stops, ingest.read_phraselist, []),
        lemma_map=maybe(cfg.lemma_map, ingest.read_pairmap, {}),
        replacements=maybe(cfg.replacements, ingest.replacement_map, {}),
        max_doc_fraction=cfg.max_doc_fraction,
        vocab_size=cfg.vocab_size,
    )


# --- stages -----------------------------------------------------------------

def stage_ingest(cfg: PipelineConfig, p: SnapshotPaths) -> None:
    if not cfg.corpus:
        raise UsageError("no corpus path configured (config key `corpus`)")
    if not Path(cfg.corpus).exists():
        raise UsageError(f"corpus file not found: {cfg.corpus}")
    p.make_dirs()
    docs, rejects = ingest.load_corpus(cfg.corpus, year_range=cfg.year_range)
    if not docs:
        raise RuntimeError(f"no usable documents in {cfg.corpus} "
                           f"({len(rejects)} rejected)")
    ingest.write_corpus_jsonl(docs, p.docs)
    with open(p.rejects, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["line", "reason"])
        for lineno, reason in rejects:
            w.writerow([lineno, reason])
    vcfg = _vocab_prep(cfg)
    token_docs = ingest.normalize_corpus(docs, vcfg, workers=max(1, cfg.threads))
    corpus = ingest.prune_vocabulary([d.doc_id for d in docs], token_docs, vcfg)
    ingest.write_tokenized(corpus, p.tokenized, p.vocabulary)
    stats = {"n_docs": corpus.n_docs, "n_types": corpus.n_types,
             "n_tokens": corpus.n_tokens, "lower_cutoff": corpus.lower_cutoff,
             "n_rejects": len(rejects)}
    p.corpus_stats.write_text(json.dumps(stats), encoding="utf-8")
    print(f"ingest: {corpus.n_docs} docs, {corpus.n_types} types, "
          f"{corpus.n_tokens} tokens, {len(rejects)} rejects")


def stage_model(cfg: PipelineConfig, p: SnapshotPaths) -> None:
    if not p.tokenized.exists():
        raise UsageError(f"no tokenized corpus at {p.tokenized}; run ingest first")
    corpus = ingest.read_tokenized(p.tokenized, p.vocabulary)
    model, state = lda.fit_lda(
        corpus, n_topics=cfg.n_topics, n_sweeps=cfg.n_sweeps, seed=cfg.seed,
        alpha_sum=cfg.alpha_sum, beta=cfg.beta, hyper_every=cfg.hyper_every,
        report_every=cfg.report_every,
        progress=lambda s, ll: print(f"model: sweep {s} ll/token {ll:.5f}"))
    lda.save_model(model, p.model_dir)
    write_mallet_state(state, p.state)
    write_coherence_csv(lda.model_coherences(model, corpus), p.coherence,
                        origin="recomputed")
    print(f"model: {cfg.n_topics} topics, {cfg.n_sweeps} sweeps, seed {cfg.seed}")


def stage_import_mallet(cfg: PipelineConfig, p: SnapshotPaths,
                        state_path, diagnostics_path=None) -> None:
    if not Path(state_path).exists():
        raise UsageError(f"state file not found: {state_path}")
    state = parse_mallet_state(state_path)
    if p.docs.exists():
        n_meta = sum(1 for line in open(p.docs, encoding="utf-8") if line.strip())
        if n_meta != len(state.doc_ids):
            raise RuntimeError(
                f"state has {len(state.doc_ids)} docs but corpus metadata has "
                f"{n_meta}")
    p.make_dirs()
    model = lda.model_from_state(state)
    lda.save_model(model, p.model_dir)
    write_mallet_state(state, p.state)
    if diagnostics_path:
        if not Path(diagnostics_path).exists():
            raise UsageError(f"diagnostics file not found: {diagnostics_path}")
        diags = parse_diagnostics_xml(diagnostics_path)
        write_coherence_csv(coherence_map(diags), p.coherence, origin="diagnostics")
    elif p.tokenized.exists():
        corpus = ingest.read_tokenized(p.tokenized, p.vocabulary)
        write_coherence_csv(lda.model_coherences(model, corpus), p.coherence,
                            origin="recomputed")
    else:
        raise UsageError("no diagnostics file and no tokenized corpus to "
                         "recompute coherence from")
    print(f"import-mallet: {model.n_topics} topics, {len(model.doc_ids)} docs")


def _load_doc_meta(p: SnapshotPaths) -> list[dict]:
    if not p.docs.exists():
        raise UsageError(f"no document metadata at {p.docs}; run ingest first")
    out = []
    with open(p.docs, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(json.loads(line))
    return out


def stage_metrics(cfg: PipelineConfig, p: SnapshotPaths) -> None:
    model = lda.load_model(p.model_dir)
    meta = _load_doc_meta(p)
    years = {d["doc_id"]: int(d["year"]) for d in meta}
    sums = lda.doc_topic_year_sums(model, years)
    growth.write_topic_year_counts(sums, p.timeseries)

    calib = growth.calibrate_error_scale(
        sums, tol=cfg.calibration_tol, year_range=cfg.year_range,
        min_topics=cfg.min_calibration_topics)
    p.calibration.write_text(json.dumps({
        "scale": repr(calib.scale),
        "mode_chi2": repr(calib.mode_chi2),
        "iterations": calib.iterations,
        "converged": calib.converged,
        "skipped": calib.skipped,
    }), encoding="utf-8")

    series, excluded = growth.build_time_series(
        sums, scale=calib.scale, year_range=cfg.year_range)
    fits = growth.fit_many(series)
    for tid, reason in sorted(excluded.items()):
        fits.append(growth.FitResult(
            tid, 0.0, float("nan"), float("nan"), float("nan"), float("nan"),
            float("nan"), float("nan"), 0, False))
    growth.write_fits(fits, p.fits)
    growth.write_screen(fits, p.screen)
    chis = [f.chi2_red for f in fits
            if f.fittable and f.converged and np.isfinite(f.chi2_red)]
    counts, edges = np.histogram(np.clip(chis, 0.0, 5.0), bins=40, range=(0.0, 5.0))
    growth.write_histogram(counts, edges, p.histogram)
    print(f"metrics: {len(fits)} fits, error scale {calib.scale:.4f}"
          + (" (calibration skipped)" if calib.skipped else ""))


def stage_lq(cfg: PipelineConfig, p: SnapshotPaths) -> None:
    model = lda.load_model(p.model_dir)
    meta = _load_doc_meta(p)
    attr_of = {
        "source": lambda d: d.get("source"),
        "country": lambda d: d.get("countries") or [],
        "org": lambda d: d.get("orgs") or [],
        "sponsor": lambda d: d.get("sponsors") or [],
    }
    matrices = {}
    for etype, getter in attr_of.items():
        values = {d["doc_id"]: getter(d) for d in meta}
        if etype != "source" and not any(values.values()):
            continue
        group_sums = lda.doc_topic_group_sums(model, values)
        entities = sorted(group_sums)
        categories = [str(t) for t in range(model.n_topics)]
        counts = np.array([[group_sums[e].get(t, 0.0) for t in range(model.n_topics)]
                           for e in entities])
        matrices[etype] = lq_mod.ActivityMatrix(entities, categories, counts)
    p.lq_dir.mkdir(parents=True, exist_ok=True)
    lq_mod.write_activity(matrices, p.activity)
    print(f"lq: activity for {sorted(matrices)}")


def stage_layout(cfg: PipelineConfig, p: SnapshotPaths) -> None:
    model = lda.load_model(p.model_dir)
    ids = list(range(model.n_topics))
    lay = layout_mod.pca_layout(ids, model.term_topic)
    p.layout_dir.mkdir(parents=True, exist_ok=True)
    layout_mod.write_coords(lay, p.coords)
    graph = layout_mod.knn_graph(ids, model.term_topic, k=min(cfg.knn_k, max(1, model.n_topics - 1)))
    layout_mod.write_knn(graph, p.knn)
    print(f"layout: {model.n_topics} topics, k={cfg.knn_k}")


def stage_snapshot(cfg: PipelineConfig, p: SnapshotPaths) -> str:
    for needed in (p.docs, p.model_dir / "model.json", p.fits, p.coords):
        if not needed.exists():
            raise UsageError(f"snapshot incomplete: missing {needed}")
    p.labels_dir.mkdir(parents=True, exist_ok=True)
    if not p.journal.exists():
        p.journal.touch()
    if cfg.fields_file:
        if not Path(cfg.fields_file).exists():
            raise UsageError(f"fields file not found: {cfg.fields_file}")
        shutil.copyfile(cfg.fields_file, p.root / "fields.csv")
    stats = json.loads(p.corpus_stats.read_text(encoding="utf-8")) \
        if p.corpus_stats.exists() else {}
    run_id = compute_run_id(cfg.seed, cfg.run_id_inputs())
    meta = {
        "run_id": run_id,
        "seed": cfg.seed,
        "year_range": [cfg.year_min, cfg.year_max],
        "n_topics": cfg.n_topics,
        "config": {k: str(v) for k, v in sorted(cfg.run_id_inputs().items())},
        **stats,
    }
    p.meta.write_text(json.dumps(meta, sort_keys=True), encoding="utf-8")
    Snapshot.load(p.root)   # validates cross-artifact consistency
    print(f"snapshot: run {run_id} at {p.root}")
    return run_id


def stage_report(cfg: PipelineConfig, p: SnapshotPaths) -> None:
    snap = Snapshot.load(p.root)
    written = reports.write_all(snap, p.root / "report", top_n=cfg.top_n,
                                coherence_floor=cfg.coherence_floor)
    print(f"report: {written}")


def run_pipeline(cfg: PipelineConfig, out_dir) -> str:
    p = SnapshotPaths(out_dir)
    try:
        stage_ingest(cfg, p)
        stage_model(cfg, p)
        stage_metrics(cfg, p)
        stage_lq(cfg, p)
        stage_layout(cfg, p)
        run_id = stage_snapshot(cfg, p)
        stage_report(cfg, p)
        return run_id
    except UsageError:
        raise
    except Exception:
        _quarantine(cfg, p)
        raise


def _quarantine(cfg: PipelineConfig, p: SnapshotPaths) -> None:
    """Move partial stage output out of the way so a half-written tree is
    never mistaken for a snapshot."""
    if not p.root.exists():
        return
    run_id = compute_run_id(cfg.seed, cfg.run_id_inputs())
    dest = p.root / run_id / "partial"
    dest.mkdir(parents=True, exist_ok=True)
    for entry in list(p.root.iterdir()):
        if entry.name == run_id:
            continue
        shutil.move(str(entry), str(dest / entry.name))
    print(f"stage failed; partial outputs moved to {dest}", file=sys.stderr)


# --- argument parsing --------------------------------------------------------

def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="scan-cli",
        description="corpus-to-dashboard pipeline for emerging-topic scanning")
    ap.add_argument("--config", help="flat key=value config file")
    ap.add_argument("--seed", type=int, default=None, help="override config seed")
    ap.add_argument("--threads", type=int, default=None, help="worker cap")
    ap.add_argument("--out", help="run/snapshot directory")
    sub = ap.add_subparsers(dest="command", required=True)

    for name, help_text in [
        ("ingest", "load corpus, normalize text, prune vocabulary"),
        ("model", "fit the topic model on the ingested corpus"),
        ("metrics", "time series, calibration, growth fits, screening"),
        ("lq", "entity-by-topic activity sums for specialization"),
        ("layout", "2-D map coordinates and neighbor graph"),
        ("snapshot", "finalize the run directory as an immutable snapshot"),
        ("report", "table and figure CSVs from a snapshot"),
        ("run", "all stages in order"),
    ]:
        sub.add_parser(name, help=help_text)

    im = sub.add_parser("import-mallet", help="adopt an external sampler state")
    im.add_argument("--state", required=True, help="gzipped assignment state file")
    im.add_argument("--diagnostics", help="topic diagnostics XML")

    sy = sub.add_parser("synth", help="generate the bundled synthetic corpus")
    sy.add_argument("--n-docs", type=int, default=2000)
    sy.add_argument("--n-topics", type=int, default=20)

    sv = sub.add_parser("serve", help="serve a snapshot over HTTP")
    sv.add_argument("--host", default="127.0.0.1")
    sv.add_argument("--port", type=int, default=None,
                    help="default: SCAN_PORT env var or 8350")
    sv.add_argument("--ui", help="static dashboard directory to mount at /ui")
    return ap


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        cfg = build_config(args)
        if args.command == "synth":
            if not args.out:
                raise UsageError("--out is required for synth")
            docs, truth = synth_mod.generate_corpus(
                n_docs=args.n_docs, n_topics=args.n_topics, seed=cfg.seed,
                year_range=cfg.year_range)
            synth_mod.write_synth(args.out, docs, truth, n_sweeps=cfg.n_sweeps)
            print(f"synth: {len(docs)} docs, {truth.n_topics} topics -> {args.out}")
            return EXIT_OK
        if args.command == "serve":
            if not args.out:
                raise UsageError("--out (snapshot directory) is required for serve")
            from .service import run_server
            run_server(args.out, host=args.host, port=args.port, ui_dir=args.ui)
            return EXIT_OK

        p = _require_out(args)
        if args.command == "ingest":
            stage_ingest(cfg, p)
        elif args.command == "model":
            stage_model(cfg, p)
        elif args.command == "import-mallet":
            stage_import_mallet(cfg, p, args.state, args.diagnostics)
        elif args.command == "metrics":
            stage_metrics(cfg, p)
        elif args.command == "lq":
            stage_lq(cfg, p)
        elif args.command == "layout":
            stage_layout(cfg, p)
        elif args.command == "snapshot":
            stage_snapshot(cfg, p)
        elif args.command == "report":
            stage_report(cfg, p)
        elif args.command == "run":
            run_pipeline(cfg, args.out)
        return EXIT_OK
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError,) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as e:
        print(f"stage failure: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
