"""Topic discovery by collapsed Gibbs sampling.

Standard LDA with an asymmetric document-topic prior learned by
fixed-point updates and a fixed symmetric term prior. The per-token
resampling loop is compiled with numba; randomness is pre-drawn outside
the kernel from a seeded generator, so a run is reproducible bit for bit
for a given seed regardless of compilation.
"""

from __future__ import annotations

import gzip
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit
from scipy.special import digamma, gammaln

from .ingest import TokenizedCorpus

MIN_ALPHA = 1e-10


@dataclass
class GibbsState:
    """Flat token stream with current topic assignments."""

    doc_ids: list[str]
    vocabulary: list[str]
    tokens: np.ndarray       # word index per position
    offsets: np.ndarray      # doc d spans tokens[offsets[d]:offsets[d+1]]
    z: np.ndarray            # topic per position
    alpha: np.ndarray
    beta: float

    @property
    def n_topics(self) -> int:
        return len(self.alpha)

    def counts(self):
        k, v = self.n_topics, len(self.vocabulary)
        d = len(self.doc_ids)
        n_kw = np.zeros((k, v), dtype=np.int64)
        n_dk = np.zeros((d, k), dtype=np.int64)
        np.add.at(n_kw, (self.z, self.tokens), 1)
        doc_of = np.repeat(np.arange(d), np.diff(self.offsets))
        np.add.at(n_dk, (doc_of, self.z), 1)
        return n_kw, n_kw.sum(axis=1), n_dk


@dataclass
class TopicModel:
    doc_ids: list[str]
    vocabulary: list[str]
    term_topic: np.ndarray   # (K, V) rows sum to 1
    doc_topic: np.ndarray    # (D, K) rows sum to 1
    alpha: np.ndarray
    beta: float
    ll_history: list = field(default_factory=list)  # (sweep, ll per token)

    @property
    def n_topics(self) -> int:
        return self.term_topic.shape[0]

    @property
    def n_types(self) -> int:
        return self.term_topic.shape[1]

    def top_terms(self, topic: int, n: int = 20) -> list[tuple[str, float]]:
        row = self.term_topic[topic]
        order = np.lexsort((np.arange(len(row)), -row))[:n]
        return [(self.vocabulary[i], float(row[i])) for i in order]

    def topic_sizes(self) -> np.ndarray:
        """Fractional token mass per topic, summed over documents."""
        return self.doc_topic.sum(axis=0)


@njit(cache=True)
def _sweep(tokens, offsets, z, n_kw, n_k, n_dk, alpha, beta, u, p):
    n_docs = offsets.shape[0] - 1
    n_top = n_kw.shape[0]
    vbeta = n_kw.shape[1] * beta
    for d in range(n_docs):
        for pos in range(offsets[d], offsets[d + 1]):
            w = tokens[pos]
            k = z[pos]
            n_kw[k, w] -= 1
            n_k[k] -= 1
            n_dk[d, k] -= 1
            cum = 0.0
            for kk in range(n_top):
                cum += (n_kw[kk, w] + beta) / (n_k[kk] + vbeta) * (n_dk[d, kk] + alpha[kk])
                p[kk] = cum
            r = u[pos] * cum
            knew = n_top - 1
            for kk in range(n_top):
                if r < p[kk]:
                    knew = kk
                    break
            n_kw[knew, w] += 1
            n_k[knew] += 1
            n_dk[d, knew] += 1
            z[pos] = knew


def minka_alpha_step(n_dk: np.ndarray, doc_lens: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """One fixed-point refinement of the asymmetric document-topic prior.

    alpha_k *= sum_d[psi(n_dk + a_k) - psi(a_k)] / sum_d[psi(N_d + A) - psi(A)]
    with A the current alpha total; components are floored to keep the
    prior proper when a topic collapses to zero usage.
    """
    a_sum = float(alpha.sum())
    num = digamma(n_dk + alpha[None, :]).sum(axis=0) - len(doc_lens) * digamma(alpha)
    den = float(np.sum(digamma(doc_lens + a_sum)) - len(doc_lens) * digamma(a_sum))
    if den <= 0:
        return alpha.copy()
    out = alpha * num / den
    return np.maximum(out, MIN_ALPHA)


def joint_ll_per_token(n_kw, n_k, n_dk, doc_lens, alpha, beta) -> float:
    """Collapsed joint log p(words, assignments) divided by token count."""
    n_top, n_types = n_kw.shape
    word_side = (n_top * gammaln(n_types * beta)
                 - n_top * n_types * gammaln(beta)
                 + gammaln(n_kw + beta).sum()
                 - gammaln(n_k + n_types * beta).sum())
    a_sum = float(alpha.sum())
    doc_side = (len(doc_lens) * (gammaln(a_sum) - gammaln(alpha).sum())
                + gammaln(n_dk + alpha[None, :]).sum()
                - gammaln(doc_lens + a_sum).sum())
    total = int(n_k.sum())
    if total == 0:
        raise ValueError("no tokens")
    return float(word_side + doc_side) / total


def fit_lda(corpus: TokenizedCorpus, n_topics: int, n_sweeps: int = 200,
            seed: int = 0, alpha_sum: float = 5.0, beta: float = 0.01,
            optimize_hyper: bool = True, hyper_every: int = 10,
            report_every: int = 10, progress=None):
    """Run the sampler and return (TopicModel, GibbsState).

    Reported point estimates are posterior means under the final counts:
    term weight (n_kw+b)/(n_k+Vb), doc mixture (n_dk+a_k)/(N_d+A). Empty
    documents are legal and fall back to the prior mixture.
    """
    if n_topics < 1:
        raise ValueError("n_topics must be positive")
    if n_sweeps < 1:
        raise ValueError("n_sweeps must be positive")
    doc_ids = [did for did, _ in corpus.docs]
    tokens = np.array([w for _, ws in corpus.docs for w in ws], dtype=np.int32)
    lens = np.array([len(ws) for _, ws in corpus.docs], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(lens)]).astype(np.int64)
    n_positions = int(tokens.size)
    if n_positions == 0:
        raise ValueError("corpus has no tokens")
    if n_topics > n_positions:
        raise ValueError(
            f"n_topics={n_topics} exceeds total token occurrences ({n_positions})")

    rng = np.random.default_rng(seed)
    alpha = np.full(n_topics, alpha_sum / n_topics, dtype=np.float64)
    z = rng.integers(0, n_topics, size=n_positions).astype(np.int32)

    n_kw = np.zeros((n_topics, corpus.n_types), dtype=np.int64)
    n_dk = np.zeros((len(doc_ids), n_topics), dtype=np.int64)
    np.add.at(n_kw, (z, tokens), 1)
    doc_of = np.repeat(np.arange(len(doc_ids)), lens)
    np.add.at(n_dk, (doc_of, z), 1)
    n_k = n_kw.sum(axis=1)

    p = np.empty(n_topics, dtype=np.float64)
    history = []
    for sweep in range(1, n_sweeps + 1):
        u = rng.random(n_positions)
        _sweep(tokens, offsets, z, n_kw, n_k, n_dk, alpha, beta, u, p)
        if optimize_hyper and hyper_every > 0 and sweep % hyper_every == 0:
            alpha = minka_alpha_step(n_dk, lens, alpha)
        if report_every > 0 and (sweep % report_every == 0 or sweep == n_sweeps):
            ll = joint_ll_per_token(n_kw, n_k, n_dk, lens, alpha, beta)
            history.append((sweep, ll))
            if progress is not None:
                progress(sweep, ll)

    phi = (n_kw + beta) / (n_k + corpus.n_types * beta)[:, None]
    theta = (n_dk + alpha[None, :]) / (lens + alpha.sum())[:, None]
    model = TopicModel(doc_ids, list(corpus.vocabulary), phi, theta, alpha,
                       beta, history)
    state = GibbsState(doc_ids, list(corpus.vocabulary), tokens, offsets, z,
                       alpha.copy(), beta)
    return model, state


def model_from_state(state: GibbsState) -> TopicModel:
    """Point estimates recomputed from a raw assignment state."""
    n_kw, n_k, n_dk = state.counts()
    lens = np.diff(state.offsets)
    phi = (n_kw + state.beta) / (n_k + len(state.vocabulary) * state.beta)[:, None]
    theta = (n_dk + state.alpha[None, :]) / (lens + state.alpha.sum())[:, None]
    return TopicModel(list(state.doc_ids), list(state.vocabulary), phi, theta,
                      state.alpha.copy(), state.beta)


# --- aggregation over document metadata ------------------------------------

MISSING_GROUP = "(none)"


def doc_topic_year_sums(model: TopicModel, years: dict) -> dict:
    """Fractional doc counts per topic per year: sum of mixtures by year.

    `years` maps doc id to an integer year; docs missing from it are
    skipped. Result: {topic_id: {year: float}}.
    """
    out: dict[int, dict[int, float]] = {k: {} for k in range(model.n_topics)}
    for i, did in enumerate(model.doc_ids):
        year = years.get(did)
        if year is None:
            continue
        row = model.doc_topic[i]
        for k in range(model.n_topics):
            out[k][year] = out[k].get(year, 0.0) + float(row[k])
    return out


def doc_topic_group_sums(model: TopicModel, groups: dict) -> dict:
    """Fractional activity per group per topic: {group: {topic_id: float}}.

    A doc with several group values splits its mass equally among them; a
    doc with none lands in the "(none)" bucket so totals stay closed.
    """
    out: dict[str, dict[int, float]] = {}
    for i, did in enumerate(model.doc_ids):
        raw = groups.get(did)
        if raw is None or raw == "" or raw == []:
            names = [MISSING_GROUP]
        elif isinstance(raw, str):
            names = [raw]
        else:
            names = [str(g) for g in raw]
        share = 1.0 / len(names)
        row = model.doc_topic[i]
        for name in names:
            per = out.setdefault(name, {})
            for k in range(model.n_topics):
                per[k] = per.get(k, 0.0) + float(row[k]) * share
    return out


# --- topic quality ----------------------------------------------------------

def coherence(top_terms: list, term_doc_sets: dict, flag_missing: bool = True):
    """Co-document coherence of a ranked term list.

    sum over pairs (m earlier-ranked than l is not; m from 2..M, l < m) of
    log[(codoc(v_m, v_l) + 1) / doc(v_l)]. Terms that never occur have no
    doc count to condition on; such pairs are skipped and counted.
    """
    score = 0.0
    skipped = 0
    for m in range(1, len(top_terms)):
        vm = top_terms[m]
        for l in range(m):
            vl = top_terms[l]
            docs_l = term_doc_sets.get(vl)
            if not docs_l or vm not in term_doc_sets:
                if flag_missing:
                    skipped += 1
                continue
            co = len(docs_l & term_doc_sets[vm])
            score += math.log((co + 1) / len(docs_l))
    return score, skipped


def term_document_sets(corpus: TokenizedCorpus) -> dict:
    """Map each vocabulary term to the set of doc positions containing it."""
    sets: dict[str, set] = {}
    for pos, (_, ws) in enumerate(corpus.docs):
        for w in set(ws):
            sets.setdefault(corpus.vocabulary[w], set()).add(pos)
    return sets


def model_coherences(model: TopicModel, corpus: TokenizedCorpus, n_terms: int = 20) -> dict:
    sets = term_document_sets(corpus)
    out = {}
    for k in range(model.n_topics):
        terms = [t for t, _ in model.top_terms(k, n_terms)]
        out[k] = coherence(terms, sets)
    return out


# --- persistence -------------------------------------------------------------

def _write_matrix_gz(path, row_label: str, row_ids, matrix: np.ndarray) -> None:
    with gzip.open(path, "wt", encoding="utf-8", newline="") as fh:
        fh.write(row_label + "," + ",".join(str(i) for i in range(matrix.shape[1])) + "\n")
        for rid, row in zip(row_ids, matrix):
            fh.write(str(rid) + "," + ",".join(repr(float(v)) for v in row) + "\n")


def _read_matrix_gz(path):
    with gzip.open(path, "rt", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split(",")
        ids, rows = [], []
        for line in fh:
            parts = line.rstrip("\n").split(",")
            ids.append(parts[0])
            rows.append([float(v) for v in parts[1:]])
    return ids, np.array(rows, dtype=float), header


def save_model(model: TopicModel, directory) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    _write_matrix_gz(d / "term_topic.csv.gz", "topic_id",
                     range(model.n_topics), model.term_topic)
    _write_matrix_gz(d / "doc_topic.csv.gz", "doc_id",
                     model.doc_ids, model.doc_topic)
    meta = {
        "alpha": [repr(float(a)) for a in model.alpha],
        "beta": repr(float(model.beta)),
        "vocabulary": model.vocabulary,
        "ll_history": [[s, repr(float(ll))] for s, ll in model.ll_history],
    }
    (d / "model.json").write_text(json.dumps(meta), encoding="utf-8")


def load_model(directory) -> TopicModel:
    d = Path(directory)
    meta = json.loads((d / "model.json").read_text(encoding="utf-8"))
    _, phi, _ = _read_matrix_gz(d / "term_topic.csv.gz")
    doc_ids, theta, _ = _read_matrix_gz(d / "doc_topic.csv.gz")
    return TopicModel(
        doc_ids=doc_ids,
        vocabulary=list(meta["vocabulary"]),
        term_topic=phi,
        doc_topic=theta,
        alpha=np.array([float(a) for a in meta["alpha"]]),
        beta=float(meta["beta"]),
        ll_history=[(int(s), float(ll)) for s, ll in meta["ll_history"]],
    )
