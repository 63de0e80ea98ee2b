"""Synthetic corpus with planted structure.

Twenty-ish topics with disjoint vocabularies, each growing (or shrinking)
along its own exponential in yearly document counts, with per-topic
source and country mixes. Everything the pipeline is supposed to recover
is written to a ground-truth file, so recovery is checkable instead of
eyeballed. All draws come from one seeded generator.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ingest import RawDocument, SOURCES, write_corpus_jsonl

COUNTRIES = ("US", "CN", "DE", "JP", "KR", "IN")
WORDS_PER_TOPIC = 40


@dataclass
class PlantedTruth:
    n_topics: int
    year_range: tuple
    k: list[float]                  # per-topic growth rate
    n0: list[float]                 # per-topic expected count in the first year
    vocabularies: list[list[str]]   # disjoint term lists
    doc_topic: dict = field(default_factory=dict)      # doc_id -> topic
    source_mix: list = field(default_factory=list)     # per topic {source: p}
    country_mix: list = field(default_factory=list)    # per topic {country: p}

    @property
    def hottest_topic(self) -> int:
        return int(np.argmax(self.k))

    def to_json(self) -> str:
        return json.dumps({
            "n_topics": self.n_topics,
            "year_range": list(self.year_range),
            "k": self.k,
            "n0": self.n0,
            "vocabularies": self.vocabularies,
            "doc_topic": self.doc_topic,
            "source_mix": self.source_mix,
            "country_mix": self.country_mix,
        })

    @classmethod
    def from_json(cls, text: str) -> "PlantedTruth":
        d = json.loads(text)
        return cls(
            n_topics=d["n_topics"],
            year_range=tuple(d["year_range"]),
            k=[float(v) for v in d["k"]],
            n0=[float(v) for v in d["n0"]],
            vocabularies=d["vocabularies"],
            doc_topic=d["doc_topic"],
            source_mix=d["source_mix"],
            country_mix=d["country_mix"],
        )


def _topic_vocab(t: int) -> list[str]:
    return [f"topic{t:02d}term{i:02d}" for i in range(WORDS_PER_TOPIC)]


def _largest_remainder(expected: np.ndarray, total: int) -> np.ndarray:
    """Integer counts summing exactly to `total`, proportional to
    `expected`. Ties go to the earlier cell so the result is stable."""
    flat = expected.ravel()
    scaled = flat * (total / flat.sum())
    floors = np.floor(scaled).astype(int)
    short = total - int(floors.sum())
    order = np.lexsort((np.arange(flat.size), -(scaled - floors)))
    floors[order[:short]] += 1
    return floors.reshape(expected.shape)


def generate_corpus(n_docs: int = 2000, n_topics: int = 20, seed: int = 0,
                    year_range=(2014, 2018)):
    """Build (documents, truth). Documents are pure single-topic texts.

    Growth rates are spread over a band with the last topic pushed well
    clear of the pack, so "which planted topic grows fastest" has an
    unambiguous answer under sampling noise.
    """
    if n_topics < 2:
        raise ValueError("need at least 2 topics")
    y0, y1 = year_range
    years = list(range(y0, y1 + 1))
    if not years:
        raise ValueError("empty year range")
    rng = np.random.default_rng(seed)

    ks = np.linspace(-0.05, 0.45, n_topics - 1).tolist() + [0.8]
    base = rng.uniform(0.8, 1.2, size=n_topics)
    expected = np.array([
        [base[t] * math.exp(ks[t] * (y - y0)) for y in years]
        for t in range(n_topics)
    ])
    counts = _largest_remainder(expected, n_docs)

    vocabularies = [_topic_vocab(t) for t in range(n_topics)]
    source_mix = []
    country_mix = []
    for t in range(n_topics):
        probs = [0.7, 0.2, 0.1]
        rot = t % 3
        source_mix.append({SOURCES[(i + rot) % 3]: probs[i] for i in range(3)})
        cm = {c: 0.075 for c in COUNTRIES}
        cm[COUNTRIES[t % 6]] = 0.5
        cm[COUNTRIES[(t + 3) % 6]] = 0.2
        total = sum(cm.values())
        country_mix.append({c: p / total for c, p in cm.items()})

    truth = PlantedTruth(
        n_topics=n_topics,
        year_range=(y0, y1),
        k=[float(v) for v in ks],
        n0=[float(expected[t, 0] * (n_docs / expected.sum())) for t in range(n_topics)],
        vocabularies=vocabularies,
        source_mix=source_mix,
        country_mix=country_mix,
    )

    docs: list[RawDocument] = []
    serial = 0
    for t in range(n_topics):
        vocab = vocabularies[t]
        s_names = list(source_mix[t])
        s_probs = [source_mix[t][s] for s in s_names]
        c_names = list(country_mix[t])
        c_probs = [country_mix[t][c] for c in c_names]
        for yi, year in enumerate(years):
            for _ in range(int(counts[t, yi])):
                length = int(rng.integers(15, 40))
                words = rng.choice(vocab, size=length).tolist()
                title_words = rng.choice(vocab, size=3).tolist()
                source = str(rng.choice(s_names, p=s_probs))
                n_countries = 2 if rng.random() < 0.2 else 1
                countries = list(dict.fromkeys(
                    str(c) for c in rng.choice(c_names, size=n_countries,
                                               replace=False, p=c_probs)))
                doc_id = f"syn{serial:05d}"
                serial += 1
                docs.append(RawDocument(
                    doc_id=doc_id,
                    title=" ".join(title_words),
                    abstract=" ".join(words),
                    year=int(year),
                    source=source,
                    countries=countries,
                ))
                truth.doc_topic[doc_id] = t
    return docs, truth


def write_synth(out_dir, docs, truth: PlantedTruth, n_sweeps: int = 150) -> None:
    """Emit corpus.jsonl, truth.json, and a pipeline config tuned for the
    synthetic data (its words are too concentrated for the default
    document-frequency cutoff)."""
    d = Path(out_dir)
    d.mkdir(parents=True, exist_ok=True)
    write_corpus_jsonl(docs, d / "corpus.jsonl")
    (d / "truth.json").write_text(truth.to_json(), encoding="utf-8")
    y0, y1 = truth.year_range
    cfg = "\n".join([
        f"corpus={d / 'corpus.jsonl'}",
        f"year_min={y0}",
        f"year_max={y1}",
        f"n_topics={truth.n_topics}",
        f"n_sweeps={n_sweeps}",
        "max_doc_fraction=0.5",
        "vocab_size=200000",
        "top_n=200",
        "coherence_floor=-1000",
        "calibration_tol=0.1",
    ]) + "\n"
    (d / "pipeline.cfg").write_text(cfg, encoding="utf-8")


def load_truth(path) -> PlantedTruth:
    return PlantedTruth.from_json(Path(path).read_text(encoding="utf-8"))


def match_topics(truth: PlantedTruth, model) -> dict:
    """Greedy map planted topic -> (learned topic, cosine) by matching
    each planted term-distribution against learned term rows."""
    vocab_index = {w: i for i, w in enumerate(model.vocabulary)}
    n_learned = model.n_topics
    sims = np.zeros((truth.n_topics, n_learned))
    for t, words in enumerate(truth.vocabularies):
        planted = np.zeros(len(model.vocabulary))
        hits = [vocab_index[w] for w in words if w in vocab_index]
        if not hits:
            continue
        planted[hits] = 1.0 / len(hits)
        pn = np.linalg.norm(planted)
        for k in range(n_learned):
            row = model.term_topic[k]
            denom = pn * np.linalg.norm(row)
            sims[t, k] = float(planted @ row / denom) if denom > 0 else 0.0
    out = {}
    taken: set[int] = set()
    order = np.dstack(np.unravel_index(np.argsort(-sims, axis=None), sims.shape))[0]
    for t, k in order:
        t, k = int(t), int(k)
        if t in out or k in taken:
            continue
        out[t] = (k, float(sims[t, k]))
        taken.add(k)
        if len(out) == truth.n_topics:
            break
    return out
