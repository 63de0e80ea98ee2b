"""Run snapshot: the immutable artifact directory a service instance loads.

One pipeline run produces one directory. Everything in it is a pure
function of (corpus, config, seed); the run id is a hash of exactly
those, so reruns are recognizable. Labels live beside the snapshot but
are not part of it: they mutate, the snapshot never does.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from . import growth, layout as layout_mod, lq as lq_mod
from .labels import LabelStore, SupertopicRegistry
from .lda import TopicModel, load_model


def compute_run_id(seed: int, config: dict) -> str:
    """Deterministic id for a (seed, config) pair. No clocks involved."""
    canon = json.dumps({"seed": seed, "config": {str(k): str(v) for k, v in sorted(config.items())}},
                       sort_keys=True)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


class SnapshotPaths:
    """Fixed file layout under a snapshot root."""

    def __init__(self, root):
        self.root = Path(root)

    @property
    def meta(self): return self.root / "meta.json"
    @property
    def docs(self): return self.root / "docs.jsonl"
    @property
    def corpus_dir(self): return self.root / "corpus"
    @property
    def tokenized(self): return self.root / "corpus" / "tokenized.txt"
    @property
    def vocabulary(self): return self.root / "corpus" / "vocabulary.tsv"
    @property
    def corpus_stats(self): return self.root / "corpus" / "stats.json"
    @property
    def rejects(self): return self.root / "corpus" / "rejects.csv"
    @property
    def model_dir(self): return self.root / "model"
    @property
    def state(self): return self.root / "model" / "state.gz"
    @property
    def coherence(self): return self.root / "model" / "coherence.csv"
    @property
    def metrics_dir(self): return self.root / "metrics"
    @property
    def timeseries(self): return self.root / "metrics" / "timeseries.csv"
    @property
    def fits(self): return self.root / "metrics" / "fits.csv"
    @property
    def calibration(self): return self.root / "metrics" / "calibration.json"
    @property
    def histogram(self): return self.root / "metrics" / "histogram.csv"
    @property
    def screen(self): return self.root / "metrics" / "screen.csv"
    @property
    def lq_dir(self): return self.root / "lq"
    @property
    def activity(self): return self.root / "lq" / "activity.csv"
    @property
    def layout_dir(self): return self.root / "layout"
    @property
    def coords(self): return self.root / "layout" / "coords.csv"
    @property
    def knn(self): return self.root / "layout" / "knn.csv"
    @property
    def labels_dir(self): return self.root / "labels"
    @property
    def journal(self): return self.root / "labels" / "journal.jsonl"
    @property
    def supertopics(self): return self.root / "labels" / "supertopics.json"

    def make_dirs(self) -> None:
        for d in (self.root, self.corpus_dir, self.model_dir, self.metrics_dir,
                  self.lq_dir, self.layout_dir, self.labels_dir):
            d.mkdir(parents=True, exist_ok=True)


def write_coherence_csv(coherences: dict, path, origin: str) -> None:
    """`topic_id,coherence,skipped_pairs,origin`; origin says whether the
    value came from a diagnostics file or was recomputed here."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["topic_id", "coherence", "skipped_pairs", "origin"])
        for tid in sorted(coherences):
            val = coherences[tid]
            score, skipped = val if isinstance(val, tuple) else (val, 0)
            w.writerow([tid, repr(float(score)), int(skipped), origin])


def read_coherence_csv(path):
    out = {}
    origins = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if [h.strip() for h in header[:4]] != ["topic_id", "coherence", "skipped_pairs", "origin"]:
            raise ValueError(f"{path}: unexpected coherence header")
        for row in reader:
            if not row:
                continue
            out[int(row[0])] = float(row[1])
            origins[int(row[0])] = row[3]
    return out, origins


def read_docs_jsonl(path):
    """Doc metadata keyed by id, in file order (for browser payloads)."""
    docs = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            d = json.loads(line)
            docs[d["doc_id"]] = d
    return docs


@dataclass
class Snapshot:
    """Loaded artifacts for one run, plus the mutable label stores."""

    root: Path
    meta: dict
    model: TopicModel
    fits: list
    sums: dict                      # topic -> year -> fractional count
    calibration: dict
    coherences: dict                # topic -> float
    coherence_origin: dict
    map_layout: layout_mod.TopicMapLayout
    knn: dict
    activity: dict                  # entity_type -> ActivityMatrix
    docs: dict                      # doc_id -> metadata dict
    labels: LabelStore
    supertopics: SupertopicRegistry
    fits_by_id: dict = field(init=False)

    def __post_init__(self):
        self.fits_by_id = {f.topic_id: f for f in self.fits}

    @property
    def run_id(self) -> str:
        return self.meta["run_id"]

    @classmethod
    def load(cls, root) -> "Snapshot":
        p = SnapshotPaths(root)
        if not p.meta.exists():
            raise FileNotFoundError(f"not a snapshot directory: {root} (no meta.json)")
        meta = json.loads(p.meta.read_text(encoding="utf-8"))
        model = load_model(p.model_dir)
        fits = growth.read_fits(p.fits)
        sums = growth.read_topic_year_counts(p.timeseries)
        calibration = json.loads(p.calibration.read_text(encoding="utf-8"))
        coherences, origin = read_coherence_csv(p.coherence)
        coords = layout_mod.read_coords(p.coords, method="snapshot")
        knn = layout_mod.read_knn(p.knn)
        activity = lq_mod.read_activity(p.activity)
        docs = read_docs_jsonl(p.docs)
        snap = cls(
            root=Path(root), meta=meta, model=model, fits=fits, sums=sums,
            calibration=calibration, coherences=coherences,
            coherence_origin=origin, map_layout=coords, knn=knn,
            activity=activity, docs=docs,
            labels=LabelStore(p.journal),
            supertopics=SupertopicRegistry(p.supertopics),
        )
        snap.validate()
        return snap

    def validate(self) -> None:
        """Cross-artifact consistency: every model topic appears exactly
        once in fits and once in the layout, ids match everywhere."""
        k = self.model.n_topics
        fit_ids = [f.topic_id for f in self.fits]
        if sorted(fit_ids) != list(range(k)):
            raise ValueError(
                f"fits cover topics {sorted(fit_ids)[:5]}... expected 0..{k - 1} once each")
        if sorted(self.map_layout.topic_ids) != list(range(k)):
            raise ValueError("layout topic ids do not match the model")
        if self.meta.get("n_topics") != k:
            raise ValueError(
                f"meta says {self.meta.get('n_topics')} topics, model has {k}")
        if len(self.docs) != len(self.model.doc_ids):
            raise ValueError(
                f"docs.jsonl has {len(self.docs)} records, model has "
                f"{len(self.model.doc_ids)} documents")

    def topic_sizes(self) -> dict:
        sizes = self.model.topic_sizes()
        return {k: float(sizes[k]) for k in range(self.model.n_topics)}

    def fit_for(self, topic_id: int):
        f = self.fits_by_id.get(topic_id)
        if f is not None and f.fittable:
            return f
        return None

    def unfit_reason(self, topic_id: int) -> str | None:
        f = self.fits_by_id.get(topic_id)
        if f is None:
            return "no fit row"
        if not f.fittable:
            return "no activity in the year window"
        if not math.isfinite(f.chi2_red):
            return "degenerate fit"
        return None
