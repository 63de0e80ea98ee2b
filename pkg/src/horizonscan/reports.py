"""Static report files: ranked-topic and supertopic tables, histogram
and scatter data. Everything is CSV; plotting stays external."""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from . import growth
from .snapshot import Snapshot

TOP_TERMS_IN_TABLE = 5


def table_top_topics(snap: Snapshot, path, top_n: int = 200,
                     coherence_floor: float = -1000.0) -> int:
    """Ranked emerging-topic table. Name columns stay empty until an
    analyst fills them in. Returns the row count."""
    labels = snap.labels.all_current()
    junk_ids = snap.labels.junk_topic_ids()
    rows = growth.rank_emerging(
        snap.fits, snap.topic_sizes(), top_n=top_n,
        coherence_floor=coherence_floor, coherences=snap.coherences,
        junk=lambda t: t in junk_ids)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["rank", "topic_id", "topic_name", "super_topic_name",
                    "size", "cagr", "err_cagr", "coherence", "top_terms"])
        for rank, (tid, cagr, err, size, coh) in enumerate(rows, start=1):
            rec = labels.get(tid)
            terms = " ".join(t for t, _ in snap.model.top_terms(tid, TOP_TERMS_IN_TABLE))
            w.writerow([
                rank, tid,
                rec.topic_name if rec else "",
                rec.super_topic_name if rec else "",
                repr(float(size)), repr(float(cagr)), repr(float(err)),
                "" if coh is None or not math.isfinite(coh) else repr(float(coh)),
                terms,
            ])
    return len(rows)


def table_supertopics(snap: Snapshot, path) -> int:
    """Aggregate fit per supertopic, descending by aggregate growth.

    Each supertopic's yearly series is the sum of its members' series,
    refit as one curve; averaging member growth rates would be wrong for
    unequal sizes."""
    scale = float(snap.calibration.get("scale", 1.0))
    year_range = tuple(snap.meta["year_range"])
    members = snap.supertopics.member_map(snap.labels.all_current())
    results = []
    for name in sorted(members):
        fit = growth.aggregate_supertopic_fit(members[name], snap.sums,
                                              scale=scale, year_range=year_range)
        size = sum(snap.topic_sizes().get(t, 0.0) for t in members[name])
        results.append((name, len(members[name]), size, fit))
    results.sort(key=lambda r: (-r[3].cagr, r[0]))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["rank", "super_topic_name", "n_members", "size",
                    "cagr", "err_cagr", "chi2_red"])
        for rank, (name, n, size, fit) in enumerate(results, start=1):
            w.writerow([rank, name, n, repr(float(size)), repr(fit.cagr),
                        repr(fit.err_cagr), repr(fit.chi2_red)])
    return len(results)


def cagr_histogram(snap: Snapshot, path) -> None:
    """Distribution of CAGR over fittable topics, outliers trimmed the
    same way the summary statistics trim them."""
    stats, (counts, edges) = growth.cagr_distribution_stats(snap.fits)
    growth.write_histogram(counts, edges, path)
    side = Path(path).with_suffix(".stats.json")
    side.write_text(
        '{"mean": %r, "std": %r, "mean_std_err": %r, "n_excluded": %d}'
        % (stats.mean, stats.std, stats.mean_std_err, stats.n_excluded),
        encoding="utf-8")


def coherence_histogram(snap: Snapshot, path, bins: int = 40) -> None:
    vals = [v for v in snap.coherences.values() if math.isfinite(v)]
    if not vals:
        raise ValueError("no finite coherence values to histogram")
    counts, edges = np.histogram(vals, bins=bins)
    growth.write_histogram(counts, edges, path)


def calibration_scatter(snap: Snapshot, path) -> int:
    """Per-topic fitted CAGR vs the two-point formula, one row per
    converged fit. Two-point is blank when its endpoints are unusable
    (zero start count)."""
    year_range = tuple(snap.meta["year_range"])
    y0, y1 = year_range
    n_rows = 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["topic_id", "cagr_fit", "err_cagr", "cagr_two_point"])
        for f in sorted(snap.fits, key=lambda f: f.topic_id):
            if not (f.fittable and f.converged):
                continue
            per_year = snap.sums.get(f.topic_id, {})
            first = per_year.get(y0, 0.0)
            last = per_year.get(y1, 0.0)
            try:
                two_point = repr(growth.cagr_two_point(first, last, y0, y1))
            except ValueError:
                two_point = ""
            w.writerow([f.topic_id, repr(f.cagr), repr(f.err_cagr), two_point])
            n_rows += 1
    return n_rows


def write_all(snap: Snapshot, out_dir, top_n: int = 200,
              coherence_floor: float = -1000.0) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = {}
    written["top_topics"] = table_top_topics(
        snap, out / "top_topics.csv", top_n=top_n, coherence_floor=coherence_floor)
    written["supertopics"] = table_supertopics(snap, out / "supertopics.csv")
    cagr_histogram(snap, out / "cagr_histogram.csv")
    try:
        coherence_histogram(snap, out / "coherence_histogram.csv")
        written["coherence_histogram"] = True
    except ValueError:
        written["coherence_histogram"] = False
    written["calibration_scatter"] = calibration_scatter(
        snap, out / "calibration_scatter.csv")
    return written
