"""HTTP API over a run snapshot plus the live label store.

Read endpoints are pure functions of (snapshot, label state); the only
writes are label puts and supertopic registration, serialized through
the stores' own locks. Every response body carries the run id so a
client can detect talking to the wrong run.
"""

from __future__ import annotations

import csv
import math
import os
import warnings
from pathlib import Path
from typing import Optional

from fastapi import Body, FastAPI, Header, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from . import growth
from .ingest import SOURCES
from .labels import JUNK_REASONS, TopicLabelRecord
from .lq import aggregate_categories, compute_lq, quadrant_classify
from .snapshot import Snapshot

COLOR_MODES = ("supertopic", "cagr", "field", "source_lq")
DEFAULT_PORT_ENV = "SCAN_PORT"
DEFAULT_PORT = 8350


def _clean(x):
    """NaN/inf have no JSON spelling; they become null."""
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def _fit_payload(f) -> dict:
    return {
        "n0": _clean(f.n0_hat),
        "k": _clean(f.k_hat),
        "err_k": _clean(f.err_k),
        "cagr": _clean(f.cagr),
        "err_cagr": _clean(f.err_cagr),
        "chi2_red": _clean(f.chi2_red),
        "dof": f.dof,
        "converged": f.converged,
    }


def _label_payload(rec: TopicLabelRecord | None):
    if rec is None:
        return None
    return {
        "topic_id": rec.topic_id,
        "topic_name": rec.topic_name,
        "super_topic_name": rec.super_topic_name,
        "junk": rec.junk,
        "junk_reason": rec.junk_reason,
        "updated_at": rec.updated_at,
        "author": rec.author,
    }


class ServiceState:
    """Snapshot plus caches that depend only on immutable artifacts."""

    def __init__(self, snap: Snapshot):
        self.snap = snap
        self.sizes = snap.topic_sizes()
        self._source_lq = None
        self._doc_rank = {}          # topic -> [(doc_id, fraction)] desc
        self.fields = self._load_fields(snap.root / "fields.csv")

    @staticmethod
    def _load_fields(path: Path) -> dict:
        # optional per-topic attribute table: `topic_id,field`
        if not path.exists():
            return {}
        out = {}
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            next(reader, None)
            for row in reader:
                if row:
                    out[row[0]] = row[1]
        return out

    def source_lq_table(self):
        if self._source_lq is None:
            m = self.snap.activity.get("source")
            if m is None:
                return None
            self._source_lq = compute_lq(m)
        return self._source_lq

    def doc_ranking(self, topic_id: int):
        if topic_id not in self._doc_rank:
            col = self.snap.model.doc_topic[:, topic_id]
            order = sorted(range(len(col)),
                           key=lambda i: (-col[i], self.snap.model.doc_ids[i]))
            self._doc_rank[topic_id] = [
                (self.snap.model.doc_ids[i], float(col[i])) for i in order]
        return self._doc_rank[topic_id]


def create_app(snapshot_dir, ui_dir=None) -> FastAPI:
    snap = Snapshot.load(snapshot_dir)
    state = ServiceState(snap)
    app = FastAPI(title="horizon scan service", docs_url=None, redoc_url=None)
    app.state.scan = state
    run_id = snap.run_id
    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    def err(status: int, message: str) -> JSONResponse:
        return JSONResponse(status_code=status,
                            content={"error": message, "run_id": run_id})

    def known_topic(topic_id: int) -> bool:
        return 0 <= topic_id < snap.model.n_topics

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "run_id": run_id,
                "n_topics": snap.model.n_topics, "n_docs": len(snap.docs)}

    @app.get("/map")
    def get_map(color_by: str = "supertopic", source: Optional[str] = None):
        if color_by not in COLOR_MODES:
            return err(400, f"color_by must be one of {list(COLOR_MODES)}")
        lq_table = None
        src_row = None
        if color_by == "source_lq":
            if source is None:
                return err(400, "color_by=source_lq requires a source parameter")
            if source not in SOURCES:
                return err(400, f"source must be one of {list(SOURCES)}")
            lq_table = state.source_lq_table()
            if lq_table is None or source not in lq_table.entities:
                return err(404, f"no activity recorded for source {source!r}")
            src_row = lq_table.entities.index(source)
        labels = snap.labels.all_current()
        coords = dict(zip(snap.map_layout.topic_ids, snap.map_layout.coords))
        topics = []
        for tid in range(snap.model.n_topics):
            rec = labels.get(tid)
            if color_by == "supertopic":
                color = (rec.super_topic_name or "unlabeled") if rec else "unlabeled"
            elif color_by == "cagr":
                f = snap.fit_for(tid)
                color = _clean(f.cagr) if f else None
            elif color_by == "field":
                color = state.fields.get(str(tid), "unknown")
            else:
                try:
                    j = lq_table.categories.index(str(tid))
                    color = _clean(float(lq_table.lq[src_row, j]))
                except ValueError:
                    color = None
            x, y = coords[tid]
            topics.append({
                "topic_id": tid,
                "x": float(x),
                "y": float(y),
                "size": state.sizes[tid],
                "label": (rec.topic_name if rec else ""),
                "supertopic": (rec.super_topic_name if rec else ""),
                "junk": bool(rec.junk) if rec else False,
                "color": color,
            })
        return {"run_id": run_id, "color_by": color_by, "source": source,
                "topics": topics}

    @app.get("/topics/{topic_id}")
    def get_topic(topic_id: int):
        if not known_topic(topic_id):
            return err(404, f"unknown topic {topic_id}")
        terms = [{"term": t, "weight": w}
                 for t, w in snap.model.top_terms(topic_id, 20)]
        f = snap.fit_for(topic_id)
        payload = {
            "run_id": run_id,
            "topic_id": topic_id,
            "terms": terms,
            "coherence": _clean(snap.coherences.get(topic_id, math.nan)),
            "size": state.sizes[topic_id],
            "fit": _fit_payload(f) if f else None,
            "fit_excluded_reason": None if f else snap.unfit_reason(topic_id),
            "label": _label_payload(snap.labels.get(topic_id)),
            "neighbors": [nid for nid, _ in snap.knn.get(topic_id, [])],
        }
        return payload

    @app.get("/topics/{topic_id}/documents")
    def get_topic_documents(topic_id: int, limit: int = 50):
        if not known_topic(topic_id):
            return err(404, f"unknown topic {topic_id}")
        if limit < 1:
            return err(400, "limit must be at least 1")
        rows = []
        for doc_id, fraction in state.doc_ranking(topic_id)[:limit]:
            meta = snap.docs[doc_id]
            rows.append({
                "doc_id": doc_id,
                "title": meta.get("title", ""),
                "year": meta.get("year"),
                "source": meta.get("source", ""),
                "fraction": fraction,
                "abstract": meta.get("abstract", ""),
            })
        return {"run_id": run_id, "topic_id": topic_id, "documents": rows}

    @app.put("/topics/{topic_id}/label")
    def put_label(topic_id: int, body: dict = Body(...),
                  x_analyst_id: Optional[str] = Header(default=None)):
        if not known_topic(topic_id):
            return err(404, f"unknown topic {topic_id}")
        name = str(body.get("super_topic_name", "") or "")
        if name and name not in snap.supertopics:
            return err(422, f"super topic {name!r} is not registered; "
                            f"POST /supertopics first")
        reason = str(body.get("junk_reason", "none") or "none")
        if reason not in JUNK_REASONS:
            return err(422, f"junk_reason must be one of {list(JUNK_REASONS)}")
        rec = TopicLabelRecord(
            topic_id=topic_id,
            topic_name=str(body.get("topic_name", "") or ""),
            super_topic_name=name,
            junk=bool(body.get("junk", False)),
            junk_reason=reason,
            author=str(body.get("author") or x_analyst_id or "anonymous"),
        )
        try:
            stored = snap.labels.put(rec)
        except ValueError as e:
            return err(422, str(e))
        return {"run_id": run_id, "label": _label_payload(stored)}

    @app.get("/supertopics")
    def get_supertopics():
        return {"run_id": run_id,
                "supertopics": snap.supertopics.names,
                "over_cap": snap.supertopics.over_cap()}

    @app.post("/supertopics")
    def post_supertopic(body: dict = Body(...)):
        name = str(body.get("name", "")).strip()
        if not name:
            return err(422, "name must be non-empty")
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            added = snap.supertopics.add(name)
        warning = str(caught[0].message) if caught else None
        return {"run_id": run_id, "added": added, "name": name,
                "supertopics": snap.supertopics.names, "warning": warning}

    @app.get("/screen")
    def get_screen(top_n: int = 200, coherence_floor: float = -1000.0):
        labels = snap.labels.all_current()
        junk_ids = snap.labels.junk_topic_ids()
        ranked = growth.rank_emerging(
            snap.fits, state.sizes, top_n=top_n,
            coherence_floor=coherence_floor, coherences=snap.coherences,
            junk=lambda t: t in junk_ids)
        rows = []
        for rank, (tid, cagr, errv, size, coh) in enumerate(ranked, start=1):
            rec = labels.get(tid)
            rows.append({
                "rank": rank,
                "topic_id": tid,
                "topic_name": rec.topic_name if rec else "",
                "super_topic_name": rec.super_topic_name if rec else "",
                "size": float(size),
                "cagr": _clean(float(cagr)),
                "err_cagr": _clean(float(errv)),
                "coherence": _clean(coh) if coh is not None else None,
                "top_terms": [t for t, _ in snap.model.top_terms(tid, 5)],
            })
        return {"run_id": run_id, "rows": rows}

    @app.get("/lq")
    def get_lq(request: Request, entity_type: str, level: str = "topic"):
        entities = request.query_params.getlist("entities")
        if not entities:
            return err(400, "at least one entities parameter required")
        if level not in ("topic", "supertopic"):
            return err(400, "level must be topic or supertopic")
        m = snap.activity.get(entity_type)
        if m is None:
            return err(404, f"no activity for entity_type {entity_type!r}; "
                            f"known: {sorted(snap.activity)}")
        unknown = [e for e in entities if e not in m.entities]
        if unknown:
            return err(404, f"unknown entities {unknown}; known: {m.entities}")
        if level == "supertopic":
            members = snap.supertopics.member_map(snap.labels.all_current())
            if not members:
                return err(400, "no supertopics assigned yet")
            groups = {name: [str(t) for t in tids] for name, tids in members.items()}
            m = aggregate_categories(m, groups)
        table = compute_lq(m)
        per_entity = {}
        for e in entities:
            i = table.entities.index(e)
            per_entity[e] = {
                str(c): {"lq": _clean(float(table.lq[i, j])),
                         "err": _clean(float(table.err[i, j]))}
                for j, c in enumerate(table.categories)
            }
        payload = {"run_id": run_id, "entity_type": entity_type,
                   "level": level, "entities": per_entity}
        if len(entities) == 2:
            a, b = entities
            ia, ib = table.entities.index(a), table.entities.index(b)
            quads = quadrant_classify(
                {c: float(table.lq[ia, j]) for j, c in enumerate(table.categories)},
                {c: float(table.lq[ib, j]) for j, c in enumerate(table.categories)})
            payload["quadrants"] = {str(c): quads[c] for c in table.categories}
        return payload

    return app


def run_server(snapshot_dir, host: str = "127.0.0.1", port: Optional[int] = None,
               ui_dir=None):
    import uvicorn
    if port is None:
        port = int(os.environ.get(DEFAULT_PORT_ENV, DEFAULT_PORT))
    uvicorn.run(create_app(snapshot_dir, ui_dir=ui_dir), host=host, port=port,
                log_level="warning")
