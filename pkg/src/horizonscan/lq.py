"""Location Quotients with propagated errors.

The LQ of entity j in category i is the entity's share of its own
activity, divided by the category's share of everybody's activity: a
doubly normalized ratio that is 1 when the entity mirrors the global mix.
Errors treat each count as Poisson (delta n = sqrt(n)) and combine the
four factors' relative errors in quadrature, independence assumed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

QUADRANTS = ("I", "II", "III", "IV")


@dataclass
class ActivityMatrix:
    """Fractional activity counts, rows = entities, columns = categories."""

    entities: list[str]
    categories: list
    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=float)
        if self.counts.shape != (len(self.entities), len(self.categories)):
            raise ValueError("counts shape must be (entities, categories)")
        if len(set(self.entities)) != len(self.entities):
            raise ValueError("duplicate entity ids")
        if len(set(self.categories)) != len(self.categories):
            raise ValueError("duplicate category ids")
        if np.any(self.counts < 0):
            raise ValueError("activity counts must be non-negative")


@dataclass
class LqTable:
    entities: list[str]
    categories: list
    lq: np.ndarray            # NaN where undefined
    err: np.ndarray           # NaN where undefined
    entity_totals: np.ndarray
    category_totals: np.ndarray
    grand_total: float
    low_confidence: np.ndarray = field(default=None)  # rel. error > 1

    def cell(self, entity, category):
        i = self.entities.index(entity)
        j = self.categories.index(category)
        return self.lq[i, j], self.err[i, j]


def compute_lq(m: ActivityMatrix) -> LqTable:
    """LQ = (cell / entity total) / (category total / grand total).

    Cells whose entity total or category total is zero are undefined (NaN)
    rather than zero; a zero cell with nonzero totals is a legitimate 0.
    """
    if m.counts.size == 0:
        raise ValueError("empty activity matrix")
    entity_totals = m.counts.sum(axis=1)
    category_totals = m.counts.sum(axis=0)
    grand = float(m.counts.sum())
    if grand <= 0:
        raise ValueError("grand total must be positive")

    with np.errstate(divide="ignore", invalid="ignore"):
        share_own = m.counts / entity_totals[:, None]
        share_all = category_totals[None, :] / grand
        lq = share_own / share_all
    lq[np.broadcast_to(entity_totals[:, None] == 0, lq.shape)] = np.nan
    lq[np.broadcast_to(category_totals[None, :] == 0, lq.shape)] = np.nan

    err, low_conf = propagate_lq_error(m, lq=lq)
    return LqTable(
        entities=list(m.entities),
        categories=list(m.categories),
        lq=lq,
        err=err,
        entity_totals=entity_totals,
        category_totals=category_totals,
        grand_total=grand,
        low_confidence=low_conf,
    )


def propagate_lq_error(m: ActivityMatrix, lq: np.ndarray | None = None):
    """Standard errors for every LQ cell.

    Relative error = sqrt(1/n_cell + 1/entity_total + 1/category_total
    + 1/grand); undefined (NaN) for zero cells, where the Poisson relative
    error blows up. Cells with relative error above 1 are flagged low
    confidence.
    """
    if lq is None:
        lq = compute_lq(m).lq
    entity_totals = m.counts.sum(axis=1)
    category_totals = m.counts.sum(axis=0)
    grand = float(m.counts.sum())

    with np.errstate(divide="ignore", invalid="ignore"):
        rel2 = (1.0 / m.counts
                + 1.0 / entity_totals[:, None]
                + 1.0 / category_totals[None, :]
                + 1.0 / grand)
        rel = np.sqrt(rel2)
        err = rel * lq
    err[m.counts == 0] = np.nan
    low_conf = np.zeros(m.counts.shape, dtype=bool)
    finite = np.isfinite(rel)
    low_conf[finite] = rel[finite] > 1.0
    return err, low_conf


def quadrant_classify(lqs_a, lqs_b):
    """Two-entity quadrant chart classification per category.

    I: both above 1. II: only A above. IV: only B above. III: neither
    (exactly 1 counts as not above). Undefined LQ on either side leaves
    the category unclassified (None).
    """
    if set(lqs_a) != set(lqs_b):
        raise ValueError("entities must share the same category set")
    out = {}
    for cat, a in lqs_a.items():
        b = lqs_b[cat]
        if a is None or b is None or not (math.isfinite(a) and math.isfinite(b)):
            out[cat] = None
            continue
        above_a, above_b = a > 1.0, b > 1.0
        if above_a and above_b:
            out[cat] = "I"
        elif above_a:
            out[cat] = "II"
        elif above_b:
            out[cat] = "IV"
        else:
            out[cat] = "III"
    return out


def lq_by_source(source_sums) -> LqTable:
    """Per-topic LQ for each data source.

    `source_sums` maps source -> {topic_id: fractional count}; entities
    are the sources, categories the union of topics. Feeds the map
    recoloring view.
    """
    entities = sorted(source_sums)
    topics = sorted({t for per in source_sums.values() for t in per})
    counts = np.array([[source_sums[s].get(t, 0.0) for t in topics] for s in entities])
    return compute_lq(ActivityMatrix(entities=entities, categories=topics, counts=counts))


def aggregate_categories(m: ActivityMatrix, groups: dict) -> ActivityMatrix:
    """Sum member-category activity into named groups (e.g. supertopics).

    Grouped LQ must come from summed activity, not averaged member LQs,
    or the share-weighted mean identity breaks.
    """
    names = sorted(groups)
    cat_index = {c: j for j, c in enumerate(m.categories)}
    counts = np.zeros((len(m.entities), len(names)))
    for g, name in enumerate(names):
        members = [cat_index[c] for c in groups[name] if c in cat_index]
        if members:
            counts[:, g] = m.counts[:, members].sum(axis=1)
    return ActivityMatrix(entities=list(m.entities), categories=names, counts=counts)


# --- CSV interfaces --------------------------------------------------------

def read_activity(path):
    """CSV `entity_type,entity_id,category_id,count` -> {type: ActivityMatrix}."""
    acc: dict[str, dict[str, dict[str, float]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if [h.strip() for h in header[:4]] != ["entity_type", "entity_id", "category_id", "count"]:
            raise ValueError(f"{path}: expected header entity_type,entity_id,category_id,count")
        for row in reader:
            if not row:
                continue
            etype, eid, cid, count = row[0], row[1], row[2], float(row[3])
            acc.setdefault(etype, {}).setdefault(eid, {})[cid] = (
                acc.get(etype, {}).get(eid, {}).get(cid, 0.0) + count
            )
    out = {}
    for etype, per_entity in acc.items():
        entities = sorted(per_entity)
        categories = sorted({c for per in per_entity.values() for c in per})
        counts = np.array([[per_entity[e].get(c, 0.0) for c in categories] for e in entities])
        out[etype] = ActivityMatrix(entities=entities, categories=categories, counts=counts)
    return out


def write_activity(matrices: dict, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["entity_type", "entity_id", "category_id", "count"])
        for etype in sorted(matrices):
            m = matrices[etype]
            for i, e in enumerate(m.entities):
                for j, c in enumerate(m.categories):
                    if m.counts[i, j] != 0.0:
                        w.writerow([etype, e, c, repr(float(m.counts[i, j]))])


def write_lq(table: LqTable, path) -> None:
    """CSV `entity_id,category_id,lq,lq_err,flag`."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["entity_id", "category_id", "lq", "lq_err", "flag"])
        for i, e in enumerate(table.entities):
            for j, c in enumerate(table.categories):
                lq, err = table.lq[i, j], table.err[i, j]
                if not math.isfinite(lq):
                    flag = "undefined"
                elif not math.isfinite(err):
                    flag = "err_undefined"
                elif table.low_confidence[i, j]:
                    flag = "low_confidence"
                else:
                    flag = "ok"
                w.writerow([e, c, repr(float(lq)), repr(float(err)), flag])


def write_quadrants(categories, quads, path, entity_a: str, entity_b: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["category_id", "entity_a", "entity_b", "quadrant"])
        for c in categories:
            w.writerow([c, entity_a, entity_b, quads.get(c) or "unclassified"])
