"""Corpus loading, text normalization, and vocabulary pruning.

Documents arrive as line-delimited JSON (one object per line). Text is
normalized through a configurable chain: lowercase, multiword stop-phrase
removal, phrase replacement (longest match first), tokenization,
lemmatization, single-token stopword removal. The vocabulary is then
pruned by document frequency: an upper cutoff as a fraction of the corpus
plus a fixed-size cap on the number of retained tokens.
"""

from __future__ import annotations

import json
import logging
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

logger = logging.getLogger(__name__)

SOURCES = ("publication", "patent", "grant")

REQUIRED_FIELDS = ("doc_id", "title", "abstract", "year", "source")
OPTIONAL_LIST_FIELDS = ("countries", "orgs", "sponsors")

_TOKEN_RE = re.compile(r"[^0-9a-z_]+")


@dataclass
class RawDocument:
    """One corpus record: a publication, patent, or grant."""

    doc_id: str
    title: str
    abstract: str
    year: int
    source: str
    countries: list[str] = field(default_factory=list)
    orgs: list[str] = field(default_factory=list)
    sponsors: list[str] = field(default_factory=list)

    @property
    def text(self) -> str:
        return self.title + " " + self.abstract


@dataclass
class VocabPrepConfig:
    """Vocabulary preparation maps and pruning thresholds."""

    stopwords: set[str] = field(default_factory=set)
    multiword_stops: list[str] = field(default_factory=list)
    lemma_map: dict[str, str] = field(default_factory=dict)
    replacements: dict[str, str] = field(default_factory=dict)
    max_doc_fraction: float = 0.05
    vocab_size: int = 200_000

    def __post_init__(self):
        if not 0.0 < self.max_doc_fraction <= 1.0:
            raise ValueError("max_doc_fraction must be in (0, 1]")
        if self.vocab_size < 1:
            raise ValueError("vocab_size must be positive")
        for phrase in self.replacements:
            if len(phrase.split()) < 2:
                raise ValueError(f"replacement key is not multi-token: {phrase!r}")
        # phrase maps are matched on lowercased text
        self.stopwords = {w.lower() for w in self.stopwords}
        self.multiword_stops = [p.lower() for p in self.multiword_stops]
        self.lemma_map = {k.lower(): v.lower() for k, v in self.lemma_map.items()}
        self.replacements = {k.lower(): v.lower() for k, v in self.replacements.items()}


@dataclass
class TokenizedCorpus:
    """Normalized corpus encoded against a pruned vocabulary."""

    docs: list[tuple[str, list[int]]]
    vocabulary: list[str]
    doc_freq: list[int]
    lower_cutoff: int

    @property
    def n_docs(self) -> int:
        return len(self.docs)

    @property
    def n_types(self) -> int:
        return len(self.vocabulary)

    @property
    def n_tokens(self) -> int:
        return sum(len(toks) for _, toks in self.docs)


def load_corpus(path, schema=None, year_range=(2014, 2018)):
    """Read line-delimited JSON records into RawDocuments.

    `schema` maps canonical field names to the file's field names, e.g.
    ``{"doc_id": "id"}``. Malformed or incomplete records are skipped and
    returned as rejects `(line_number, reason)`; a duplicate doc_id is an
    error because it would corrupt every downstream join.

    Returns (documents, rejects).
    """
    schema = schema or {}
    names = {f: schema.get(f, f) for f in REQUIRED_FIELDS + OPTIONAL_LIST_FIELDS}

    docs: list[RawDocument] = []
    rejects: list[tuple[int, str]] = []
    seen_ids: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError:
                rejects.append((lineno, "malformed JSON"))
                continue
            missing = [f for f in REQUIRED_FIELDS if names[f] not in rec or rec[names[f]] is None]
            if missing:
                rejects.append((lineno, "missing " + ",".join(missing)))
                continue
            try:
                year = int(rec[names["year"]])
            except (TypeError, ValueError):
                rejects.append((lineno, "non-integer year"))
                continue
            source = str(rec[names["source"]])
            if source not in SOURCES:
                rejects.append((lineno, f"unknown source {source!r}"))
                continue
            if year_range is not None and not (year_range[0] <= year <= year_range[1]):
                rejects.append((lineno, f"year {year} outside window"))
                continue
            doc_id = str(rec[names["doc_id"]])
            if doc_id in seen_ids:
                raise ValueError(f"duplicate doc_id {doc_id!r} at line {lineno}")
            seen_ids.add(doc_id)
            docs.append(
                RawDocument(
                    doc_id=doc_id,
                    title=str(rec[names["title"]]),
                    abstract=str(rec[names["abstract"]]),
                    year=year,
                    source=source,
                    countries=[str(x) for x in rec.get(names["countries"], [])],
                    orgs=[str(x) for x in rec.get(names["orgs"], [])],
                    sponsors=[str(x) for x in rec.get(names["sponsors"], [])],
                )
            )
    logger.info("loaded %d documents, %d rejects from %s", len(docs), len(rejects), path)
    return docs, rejects


def _remove_phrases(text: str, phrases: list[str]) -> str:
    """Delete each phrase (longest first, non-overlapping left-to-right)."""
    if not phrases:
        return text
    ordered = sorted(phrases, key=len, reverse=True)
    pattern = re.compile(
        r"\b(?:" + "|".join(re.escape(p) for p in ordered) + r")\b"
    )
    return pattern.sub(" ", text)


def _apply_replacements(text: str, mapping: dict[str, str]) -> str:
    """Substitute each phrase with its mapped token, longest match first."""
    if not mapping:
        return text
    ordered = sorted(mapping, key=len, reverse=True)
    pattern = re.compile(
        r"\b(?:" + "|".join(re.escape(p) for p in ordered) + r")\b"
    )
    return pattern.sub(lambda m: mapping[m.group(0)], text)


def normalize_text(doc: RawDocument | str, cfg: VocabPrepConfig) -> list[str]:
    """Normalize one document's text into a token list.

    Order matters: multiword stops go first so their words never feed a
    replacement; replacements are applied before per-token steps so an
    underscore-joined phrase survives even if a constituent word is a
    stopword or lemma target.
    """
    text = doc.text if isinstance(doc, RawDocument) else doc
    text = text.lower()
    text = _remove_phrases(text, cfg.multiword_stops)
    text = _apply_replacements(text, cfg.replacements)
    tokens = [t for t in _TOKEN_RE.split(text) if t]
    out = []
    for tok in tokens:
        if len(tok) <= 1 or tok.isdigit():
            continue
        tok = cfg.lemma_map.get(tok, tok)
        if tok in cfg.stopwords:
            continue
        out.append(tok)
    return out


def _normalize_batch(args):
    texts, cfg = args
    return [normalize_text(t, cfg) for t in texts]


def normalize_corpus(docs: list[RawDocument], cfg: VocabPrepConfig, workers: int = 1):
    """Normalize every document; returns a list of token lists.

    Normalization is per-document, so extra workers just partition the
    list; results are returned in input order either way.
    """
    if workers <= 1 or len(docs) < 256:
        return [normalize_text(d, cfg) for d in docs]
    chunks = [docs[i::workers] for i in range(workers)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_normalize_batch, [([d.text for d in c], cfg) for c in chunks]))
    out: list[list[str]] = [None] * len(docs)  # type: ignore[list-item]
    for w, part in enumerate(parts):
        for j, toks in enumerate(part):
            out[w + j * workers] = toks
    return out


def prune_vocabulary(doc_ids, token_docs, cfg: VocabPrepConfig) -> TokenizedCorpus:
    """Prune by document frequency and re-encode documents.

    Tokens present in more than max_doc_fraction of documents are dropped,
    the rest are ranked by document frequency (ties broken alphabetically)
    and capped at vocab_size. The realized lower cutoff, the document
    frequency of the weakest retained token, is recorded.
    """
    n_docs = len(token_docs)
    df: dict[str, int] = {}
    for toks in token_docs:
        for tok in set(toks):
            df[tok] = df.get(tok, 0) + 1

    max_df = cfg.max_doc_fraction * n_docs
    survivors = {t: c for t, c in df.items() if c <= max_df}
    ranked = sorted(survivors.items(), key=lambda kv: (-kv[1], kv[0]))
    kept = ranked[: cfg.vocab_size]
    lower_cutoff = min((c for _, c in kept), default=0)

    vocabulary = [t for t, _ in kept]
    index = {t: i for i, t in enumerate(vocabulary)}
    doc_freq = [c for _, c in kept]

    docs = []
    for doc_id, toks in zip(doc_ids, token_docs):
        docs.append((doc_id, [index[t] for t in toks if t in index]))
    logger.info(
        "vocabulary: %d of %d types kept (upper cutoff %.3g docs, lower cutoff %d)",
        len(vocabulary), len(df), max_df, lower_cutoff,
    )
    return TokenizedCorpus(docs=docs, vocabulary=vocabulary, doc_freq=doc_freq, lower_cutoff=lower_cutoff)


# --- plain-text config maps ------------------------------------------------

def read_wordlist(path) -> set[str]:
    """One token per line; blank lines and #-comments skipped."""
    out = set()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            w = line.strip()
            if w and not w.startswith("#"):
                out.add(w)
    return out


def read_phraselist(path) -> list[str]:
    """One phrase per line, in file order."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            p = line.strip()
            if p and not p.startswith("#"):
                out.append(p)
    return out


def read_pairmap(path) -> dict[str, str]:
    """Tab-separated `from<TAB>to` lines."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected `from<TAB>to`")
            out[parts[0].strip()] = parts[1].strip()
    return out


def replacement_map(path) -> dict[str, str]:
    """Replacement file: `phrase<TAB>joined` or just `phrase` per line.

    A line with no tab maps the phrase to its underscore-joined form.
    """
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            if "\t" in line:
                src, dst = line.split("\t", 1)
                out[src.strip()] = dst.strip()
            else:
                out[line.strip()] = "_".join(line.split())
    return out


# --- corpus files ----------------------------------------------------------

def write_corpus_jsonl(docs: list[RawDocument], path) -> None:
    """One JSON object per line, the same shape load_corpus reads."""
    with open(path, "w", encoding="utf-8") as fh:
        for d in docs:
            fh.write(json.dumps({
                "doc_id": d.doc_id,
                "title": d.title,
                "abstract": d.abstract,
                "year": d.year,
                "source": d.source,
                "countries": d.countries,
                "orgs": d.orgs,
                "sponsors": d.sponsors,
            }) + "\n")


def write_tokenized(corpus: TokenizedCorpus, docs_path, vocab_path) -> None:
    """Write the doc file (doc_id + space-joined indices) and vocab table."""
    with open(docs_path, "w", encoding="utf-8") as fh:
        for doc_id, toks in corpus.docs:
            fh.write(doc_id + " " + " ".join(str(i) for i in toks) + "\n")
    with open(vocab_path, "w", encoding="utf-8") as fh:
        for i, (tok, c) in enumerate(zip(corpus.vocabulary, corpus.doc_freq)):
            fh.write(f"{i}\t{tok}\t{c}\n")


def read_tokenized(docs_path, vocab_path) -> TokenizedCorpus:
    vocabulary, doc_freq = [], []
    with open(vocab_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh):
            idx, tok, c = line.rstrip("\n").split("\t")
            if int(idx) != lineno:
                raise ValueError(f"{vocab_path}: index gap at line {lineno + 1}")
            vocabulary.append(tok)
            doc_freq.append(int(c))
    docs = []
    with open(docs_path, encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            docs.append((parts[0], [int(x) for x in parts[1:]]))
    cutoff = min(doc_freq) if doc_freq else 0
    return TokenizedCorpus(docs=docs, vocabulary=vocabulary, doc_freq=doc_freq, lower_cutoff=cutoff)
