"""2-D topic map: PCA projection and nearest-neighbor graph.

Topics are points; their feature vectors are rows (typically term
weights). The projection is plain PCA, computed by power iteration so we
never materialize the types-by-types covariance. The neighbor graph uses
cosine distance, which ignores topic size.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

DEFAULT_NEIGHBORS = 15


@dataclass
class TopicMapLayout:
    topic_ids: list[int]
    coords: np.ndarray                 # (n_topics, 2)
    method: str = "pca"
    explained_variance: np.ndarray = field(default=None)

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=float)
        if self.coords.shape != (len(self.topic_ids), 2):
            raise ValueError("coords must be (n_topics, 2)")


def _power_iterate(x: np.ndarray, start: np.ndarray, tol: float = 1e-9,
                   max_iter: int = 1000):
    # leading eigenvector of x.T @ x without forming it; x is (n, d)
    v = start / np.linalg.norm(start)
    lam = 0.0
    for _ in range(max_iter):
        w = x.T @ (x @ v)
        lam = float(np.linalg.norm(w))
        if lam == 0.0:
            return v, 0.0
        w /= lam
        if np.linalg.norm(w - v) < tol or np.linalg.norm(w + v) < tol:
            v = w
            break
        v = w
    return v, lam


def pca_layout(topic_ids, features: np.ndarray, tol: float = 1e-9,
               max_iter: int = 1000) -> TopicMapLayout:
    """Project feature rows onto their top two principal axes.

    The start vector is drawn from a fixed generator seeded on the feature
    dimension only, so the result does not depend on topic order. Signs
    are normalized so each axis's largest-magnitude loading is positive.
    A rank-deficient input gets zeros on the missing axis plus a warning.
    """
    x = np.asarray(features, dtype=float)
    if x.ndim != 2 or x.shape[0] != len(topic_ids):
        raise ValueError("features must be (n_topics, n_features)")
    n, d = x.shape
    centered = x - x.mean(axis=0, keepdims=True)
    coords = np.zeros((n, 2))
    eigvals = np.zeros(2)
    if n < 2:
        warnings.warn("fewer than two topics, layout is degenerate")
        return TopicMapLayout(list(topic_ids), coords, "pca", eigvals)

    rng = np.random.default_rng(0)
    work = centered.copy()
    total_var = float(np.sum(centered * centered))
    for axis in range(2):
        if total_var <= 0:
            warnings.warn("zero variance input, layout axes are zero")
            break
        start = rng.standard_normal(d)
        v, lam = _power_iterate(work, start, tol=tol, max_iter=max_iter)
        if lam <= tol * total_var:
            warnings.warn(f"rank-deficient features, axis {axis} left at zero")
            break
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        proj = work @ v
        coords[:, axis] = proj
        eigvals[axis] = lam
        work = work - np.outer(proj, v)
    denom = total_var if total_var > 0 else 1.0
    return TopicMapLayout(list(topic_ids), coords, "pca", eigvals / denom)


def knn_graph(topic_ids, features: np.ndarray, k: int = DEFAULT_NEIGHBORS):
    """Exact k nearest neighbors per topic under cosine distance.

    Returns {topic_id: [(neighbor_id, distance), ...]} sorted nearest
    first; ties break toward the lower topic id. All-zero feature rows
    have no direction, get an empty list, and never appear as anyone's
    neighbor.
    """
    x = np.asarray(features, dtype=float)
    if x.ndim != 2 or x.shape[0] != len(topic_ids):
        raise ValueError("features must be (n_topics, n_features)")
    if k < 1:
        raise ValueError("k must be at least 1")
    ids = list(topic_ids)
    n = x.shape[0]
    norms = np.linalg.norm(x, axis=1)
    dead = norms == 0
    safe = np.where(dead, 1.0, norms)
    unit = x / safe[:, None]
    sim = unit @ unit.T
    dist = 1.0 - sim
    np.fill_diagonal(dist, np.inf)
    dist[dead, :] = np.inf
    dist[:, dead] = np.inf

    out = {}
    for i in range(n):
        if dead[i]:
            out[ids[i]] = []
            continue
        order = sorted(range(n), key=lambda j: (dist[i, j], ids[j]))
        pairs = [(ids[j], float(dist[i, j])) for j in order[:k]
                 if np.isfinite(dist[i, j])]
        out[ids[i]] = pairs
    return out


# --- CSV interfaces --------------------------------------------------------

def write_coords(layout: TopicMapLayout, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["topic_id", "x", "y"])
        for tid, (cx, cy) in zip(layout.topic_ids, layout.coords):
            w.writerow([tid, repr(float(cx)), repr(float(cy))])


def read_coords(path, method: str = "imported") -> TopicMapLayout:
    ids, rows = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if [h.strip() for h in header[:3]] != ["topic_id", "x", "y"]:
            raise ValueError(f"{path}: expected header topic_id,x,y")
        for row in reader:
            if not row:
                continue
            ids.append(int(row[0]))
            rows.append([float(row[1]), float(row[2])])
    if len(set(ids)) != len(ids):
        raise ValueError(f"{path}: duplicate topic ids")
    return TopicMapLayout(ids, np.array(rows).reshape(len(ids), 2), method)


def import_coordinates(path) -> TopicMapLayout:
    """Adopt an externally computed 2-D embedding instead of the PCA one."""
    return read_coords(path, method="imported")


def write_knn(graph: dict, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["topic_id", "rank", "neighbor_id", "distance"])
        for tid in sorted(graph):
            for rank, (nid, d) in enumerate(graph[tid], start=1):
                w.writerow([tid, rank, nid, repr(float(d))])


def read_knn(path) -> dict:
    out: dict[int, list] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if [h.strip() for h in header[:4]] != ["topic_id", "rank", "neighbor_id", "distance"]:
            raise ValueError(f"{path}: expected header topic_id,rank,neighbor_id,distance")
        for row in reader:
            if not row:
                continue
            out.setdefault(int(row[0]), []).append((int(row[2]), float(row[3])))
    return out
