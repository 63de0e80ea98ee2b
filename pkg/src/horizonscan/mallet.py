"""Interchange with MALLET-style sampler output.

Two artifact kinds: the gzipped assignment state (one token per line,
`doc source pos typeindex type topic`, with `#alpha`/`#beta` header
lines) and the diagnostics XML carrying per-topic quality scores. The
writer is canonical: fixed header order, repr() floats, zeroed gzip
mtime, so write(parse(f)) reproduces f byte for byte for files we wrote.
"""

from __future__ import annotations

import gzip
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass

import numpy as np

from .lda import GibbsState

STATE_HEADER = "#doc source pos typeindex type topic"


def parse_mallet_state(path) -> GibbsState:
    alpha = None
    beta = None
    vocab: dict[int, str] = {}
    per_doc: dict[int, list] = {}
    sources: dict[int, str] = {}
    with gzip.open(path, "rt", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#alpha"):
                _, _, rest = line.partition(":")
                alpha = np.array([float(v) for v in rest.split()])
                continue
            if line.startswith("#beta"):
                _, _, rest = line.partition(":")
                beta = float(rest.strip())
                continue
            if line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 6:
                raise ValueError(f"{path}:{lineno}: expected 6 fields, got {len(parts)}")
            doc, source, _pos, typeindex, word, topic = parts
            doc, typeindex, topic = int(doc), int(typeindex), int(topic)
            if typeindex in vocab and vocab[typeindex] != word:
                raise ValueError(
                    f"{path}:{lineno}: type index {typeindex} bound to both "
                    f"{vocab[typeindex]!r} and {word!r}")
            vocab[typeindex] = word
            if doc in sources and sources[doc] != source:
                raise ValueError(f"{path}:{lineno}: doc {doc} has two sources")
            sources[doc] = source
            per_doc.setdefault(doc, []).append((typeindex, topic))

    if alpha is None:
        raise ValueError(f"{path}: missing #alpha header line")
    if beta is None:
        raise ValueError(f"{path}: missing #beta header line")
    if not per_doc:
        raise ValueError(f"{path}: no token lines")
    doc_indices = sorted(per_doc)
    if doc_indices != list(range(len(doc_indices))):
        raise ValueError(f"{path}: doc indices are not contiguous from 0")
    if vocab:
        type_indices = sorted(vocab)
        if type_indices != list(range(len(type_indices))):
            raise ValueError(f"{path}: type indices are not contiguous from 0")
    max_topic = max(t for rows in per_doc.values() for _, t in rows)
    if max_topic >= len(alpha):
        raise ValueError(
            f"{path}: topic {max_topic} out of range for {len(alpha)} alpha values")

    tokens, z, offsets = [], [], [0]
    for d in doc_indices:
        for typeindex, topic in per_doc[d]:
            tokens.append(typeindex)
            z.append(topic)
        offsets.append(len(tokens))
    doc_ids = [sources[d] if sources[d] != "NA" else str(d) for d in doc_indices]
    vocabulary = [vocab[i] for i in range(len(vocab))]
    return GibbsState(
        doc_ids=doc_ids,
        vocabulary=vocabulary,
        tokens=np.array(tokens, dtype=np.int32),
        offsets=np.array(offsets, dtype=np.int64),
        z=np.array(z, dtype=np.int32),
        alpha=alpha,
        beta=beta,
    )


def write_mallet_state(state: GibbsState, path) -> None:
    for did in state.doc_ids:
        if any(c.isspace() for c in did):
            raise ValueError(f"doc id {did!r} contains whitespace")
    for word in state.vocabulary:
        if any(c.isspace() for c in word):
            raise ValueError(f"vocabulary term {word!r} contains whitespace")
    with open(path, "wb") as raw:
        # fixed mtime keeps the compressed bytes deterministic
        with gzip.GzipFile(fileobj=raw, mode="wb", filename="", mtime=0) as gz:
            lines = [STATE_HEADER,
                     "#alpha : " + " ".join(repr(float(a)) for a in state.alpha),
                     "#beta : " + repr(float(state.beta))]
            for d in range(len(state.doc_ids)):
                start, end = state.offsets[d], state.offsets[d + 1]
                for pos, flat in enumerate(range(start, end)):
                    w = int(state.tokens[flat])
                    lines.append(
                        f"{d} {state.doc_ids[d]} {pos} {w} "
                        f"{state.vocabulary[w]} {int(state.z[flat])}")
            gz.write(("\n".join(lines) + "\n").encode("utf-8"))


# --- diagnostics -------------------------------------------------------------

@dataclass
class TopicDiagnostics:
    topic_id: int
    coherence: float                    # NaN when the file omits it
    top_words: list                     # (word, weight) in file order

    @property
    def has_coherence(self) -> bool:
        return math.isfinite(self.coherence)


def parse_diagnostics_xml(path) -> dict:
    """Per-topic diagnostics keyed by topic id.

    Word weights come from a `weight` attribute, falling back to `prob`;
    a topic without a coherence attribute gets NaN so downstream screens
    can tell "unknown" from "bad".
    """
    root = ET.parse(path).getroot()
    out = {}
    for el in root.iter("topic"):
        if "id" not in el.attrib:
            raise ValueError(f"{path}: topic element without id")
        tid = int(el.attrib["id"])
        coh = float(el.attrib["coherence"]) if "coherence" in el.attrib else float("nan")
        words = []
        for w in el.iter("word"):
            weight = w.attrib.get("weight", w.attrib.get("prob"))
            words.append(((w.text or "").strip(), float(weight) if weight else 0.0))
        out[tid] = TopicDiagnostics(tid, coh, words)
    if not out:
        raise ValueError(f"{path}: no topic elements")
    return out


def write_diagnostics_xml(diags: dict, path) -> None:
    root = ET.Element("model")
    for tid in sorted(diags):
        d = diags[tid]
        attrs = {"id": str(tid)}
        if math.isfinite(d.coherence):
            attrs["coherence"] = repr(float(d.coherence))
        el = ET.SubElement(root, "topic", attrs)
        for rank, (word, weight) in enumerate(d.top_words, start=1):
            w = ET.SubElement(el, "word", {"rank": str(rank), "weight": repr(float(weight))})
            w.text = word
    ET.ElementTree(root).write(path, encoding="unicode")


def coherence_map(diags: dict) -> dict:
    return {tid: d.coherence for tid, d in diags.items()}
