"""Graphs, Delaunay-based synthetic keypoint pairs, and dataset files."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from scipy.spatial import Delaunay, QhullError

from .errors import CollinearInput, SchemaError, TooFewPoints

DATASET_VERSION = "gcgm-dataset/1"
MAX_DRAW_ATTEMPTS = 20


@dataclass
class Graph:
    node_features: np.ndarray
    adjacency: np.ndarray
    coords: np.ndarray | None = None
    graph_id: str = ""
    class_id: int = 0

    def __post_init__(self):
        self.node_features = np.atleast_2d(np.asarray(self.node_features, dtype=np.float64))
        self.adjacency = np.asarray(self.adjacency, dtype=np.int8)
        if self.coords is not None:
            self.coords = np.asarray(self.coords, dtype=np.float64).reshape(-1, 2)
        self.validate()

    @property
    def num_nodes(self) -> int:
        return self.node_features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.node_features.shape[1]

    def validate(self) -> None:
        n, f = self.node_features.shape
        if n < 1 or f < 1:
            raise ValueError(f"graph needs N>=1 and F>=1, got {n}x{f}")
        a = self.adjacency
        if a.shape != (n, n):
            raise ValueError(f"adjacency {a.shape} does not match {n} nodes")
        if not np.array_equal(a, a.T):
            raise ValueError("adjacency must be symmetric")
        if np.any(np.diag(a) != 0):
            raise ValueError("adjacency must have a zero diagonal")
        if not np.all((a == 0) | (a == 1)):
            raise ValueError("adjacency must be binary")
        if self.coords is not None and self.coords.shape[0] != n:
            raise ValueError("coords row count differs from node count")

    def edges(self) -> list[tuple[int, int]]:
        """Sorted undirected edge list with i < j."""
        i, j = np.nonzero(np.triu(self.adjacency, 1))
        return [(int(a), int(b)) for a, b in zip(i, j)]

    @property
    def num_edges(self) -> int:
        return int(np.triu(self.adjacency, 1).sum())

    def subgraph(self, nodes: Sequence[int], retriangulate: bool = False) -> "Graph":
        """Keep ``nodes`` in the given order with induced edges.

        With ``retriangulate`` and coordinates present, edges are rebuilt
        by Delaunay over the kept points when that is possible.
        """
        idx = np.asarray(nodes, dtype=int)
        coords = None if self.coords is None else self.coords[idx]
        adj = self.adjacency[np.ix_(idx, idx)]
        if retriangulate and coords is not None and len(idx) >= 3:
            try:
                adj = delaunay_triangulate(coords)
            except CollinearInput:
                pass
        return Graph(self.node_features[idx], adj, coords, self.graph_id, self.class_id)

    def equals(self, other: "Graph") -> bool:
        same_coords = (self.coords is None and other.coords is None) or (
            self.coords is not None and other.coords is not None
            and np.array_equal(self.coords, other.coords))
        return (np.array_equal(self.node_features, other.node_features)
                and np.array_equal(self.adjacency, other.adjacency)
                and same_coords and self.graph_id == other.graph_id
                and self.class_id == other.class_id)


def adjacency_from_edges(n: int, edges) -> np.ndarray:
    a = np.zeros((n, n), dtype=np.int8)
    for i, j in edges:
        if i != j:
            a[i, j] = a[j, i] = 1
    return a


@dataclass
class GraphPair:
    source: Graph
    target: Graph
    gt_matching: list[tuple[int, int]] = field(default_factory=list)

    def __post_init__(self):
        self.gt_matching = sorted((int(i), int(j)) for i, j in self.gt_matching)
        src = [i for i, _ in self.gt_matching]
        tgt = [j for _, j in self.gt_matching]
        if len(set(src)) != len(src) or len(set(tgt)) != len(tgt):
            raise ValueError("gt_matching must be a partial injection")
        for i, j in self.gt_matching:
            if not (0 <= i < self.source.num_nodes and 0 <= j < self.target.num_nodes):
                raise ValueError(f"gt pair {(i, j)} out of bounds")


@dataclass
class SyntheticConfig:
    n_inliers: int = 10
    n_outliers_source: int = 3
    n_outliers_target: int = 3
    feature_dim: int = 16
    coord_noise_sigma: float = 0.05
    feature_noise_sigma: float = 1.0
    n_classes: int = 20
    pairs_per_class: int = 25
    seed: int = 0
    coords_in_features: bool = False
    shuffle: bool = True

    def validate(self) -> None:
        if self.n_inliers < 3:
            raise ValueError("n_inliers must be >= 3 for Delaunay")
        if self.coord_noise_sigma < 0 or self.feature_noise_sigma < 0:
            raise ValueError("noise sigmas must be >= 0")
        if min(self.n_outliers_source, self.n_outliers_target) < 0:
            raise ValueError("outlier counts must be >= 0")
        if self.feature_dim < 1 or self.n_classes < 0 or self.pairs_per_class < 0:
            raise ValueError("feature_dim >= 1, n_classes >= 0, pairs_per_class >= 0")

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SyntheticConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown synthetic config fields: {sorted(unknown)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg


# ---------------------------------------------------------------------------
# Delaunay


def delaunay_triangulate(points) -> np.ndarray:
    """Adjacency matrix of the Delaunay triangulation of 2-D ``points``.

    Raises:
        TooFewPoints: fewer than three points.
        CollinearInput: all points on one line.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    n = len(pts)
    if n < 3:
        raise TooFewPoints(f"Delaunay needs >= 3 points, got {n}")
    d = pts[1:] - pts[0]
    cross = d[:, 0, None] * d[None, :, 1] - d[:, 1, None] * d[None, :, 0]
    scale = max(float(np.abs(d).max()), 1e-300) ** 2
    if np.all(np.abs(cross) <= 1e-12 * scale):
        raise CollinearInput("all points are collinear")
    try:
        tri = Delaunay(pts)
    except QhullError as exc:  # near-degenerate inputs the cheap test missed
        raise CollinearInput(str(exc).splitlines()[0]) from exc
    adj = np.zeros((n, n), dtype=np.int8)
    for a, b, c in tri.simplices:
        adj[a, b] = adj[b, a] = adj[b, c] = adj[c, b] = adj[a, c] = adj[c, a] = 1
    return adj


# ---------------------------------------------------------------------------
# synthetic generation


@dataclass
class ClassTemplate:
    coords: np.ndarray
    features: np.ndarray


def make_template(cfg: SyntheticConfig, rng: np.random.Generator) -> ClassTemplate:
    for _ in range(MAX_DRAW_ATTEMPTS):
        coords = rng.uniform(0.0, 1.0, size=(cfg.n_inliers, 2))
        try:
            delaunay_triangulate(coords)
        except CollinearInput:
            continue
        features = rng.standard_normal((cfg.n_inliers, cfg.feature_dim))
        return ClassTemplate(coords, features)
    raise CollinearInput("could not draw a non-degenerate class template")


def _build_graph(coords, feats, cfg, graph_id, class_id) -> Graph:
    adj = delaunay_triangulate(coords)
    if cfg.coords_in_features:
        feats = np.hstack([feats, coords])
    return Graph(feats, adj, coords, graph_id, class_id)


def gen_synthetic_pair(cfg: SyntheticConfig, template: ClassTemplate,
                       rng: np.random.Generator, class_id: int = 0,
                       pair_id: str = "") -> GraphPair:
    """Draw one (source, target) pair from a class template.

    The source holds the template's inliers verbatim plus fresh outliers;
    the target jitters inlier positions and features. Node order is
    shuffled in both graphs when ``cfg.shuffle`` is set.
    """
    n = cfg.n_inliers
    last: Exception | None = None
    for _ in range(MAX_DRAW_ATTEMPTS):
        src_xy = np.vstack([template.coords,
                            rng.uniform(0, 1, (cfg.n_outliers_source, 2))])
        src_x = np.vstack([template.features,
                           rng.standard_normal((cfg.n_outliers_source, cfg.feature_dim))])
        tgt_in = np.clip(template.coords + cfg.coord_noise_sigma * rng.standard_normal((n, 2)),
                         0.0, 1.0)
        tgt_xy = np.vstack([tgt_in, rng.uniform(0, 1, (cfg.n_outliers_target, 2))])
        tgt_x = np.vstack([
            template.features + cfg.feature_noise_sigma * rng.standard_normal(template.features.shape),
            rng.standard_normal((cfg.n_outliers_target, cfg.feature_dim)),
        ])
        if cfg.shuffle:
            ps = rng.permutation(len(src_xy))
            pt = rng.permutation(len(tgt_xy))
        else:
            ps = np.arange(len(src_xy))
            pt = np.arange(len(tgt_xy))
        try:
            source = _build_graph(src_xy[ps], src_x[ps], cfg, f"{pair_id}s", class_id)
            target = _build_graph(tgt_xy[pt], tgt_x[pt], cfg, f"{pair_id}t", class_id)
        except (CollinearInput, TooFewPoints) as exc:
            last = exc
            continue
        # ps[new] = old, so invert to locate template node k
        src_pos = np.argsort(ps)
        tgt_pos = np.argsort(pt)
        gt = [(int(src_pos[k]), int(tgt_pos[k])) for k in range(n)]
        return GraphPair(source, target, gt)
    raise CollinearInput(f"gave up after {MAX_DRAW_ATTEMPTS} draws: {last}")


@dataclass
class ClassData:
    class_id: int
    template: ClassTemplate
    pairs: list[GraphPair]


@dataclass
class SyntheticDataset:
    config: SyntheticConfig
    classes: list[ClassData] = field(default_factory=list)

    def all_pairs(self) -> list[GraphPair]:
        return [p for c in self.classes for p in c.pairs]

    def split(self, val_fraction: float = 0.2) -> tuple[list[GraphPair], list[GraphPair]]:
        """Per-class head/tail split into (train pairs, validation pairs)."""
        train, val = [], []
        for c in self.classes:
            k = int(round(len(c.pairs) * (1.0 - val_fraction)))
            if len(c.pairs) > 1:
                k = min(max(k, 1), len(c.pairs) - 1)
            train.extend(c.pairs[:k])
            val.extend(c.pairs[k:])
        return train, val


def _rng(seed: int, *path: int) -> np.random.Generator:
    return np.random.default_rng([seed, *path])


def generate_dataset(cfg: SyntheticConfig) -> SyntheticDataset:
    cfg.validate()
    ds = SyntheticDataset(cfg)
    for c in range(cfg.n_classes):
        template = make_template(cfg, _rng(cfg.seed, c, 0))
        pairs = [gen_synthetic_pair(cfg, template, _rng(cfg.seed, c, 1, k), c, f"c{c}p{k}")
                 for k in range(cfg.pairs_per_class)]
        ds.classes.append(ClassData(c, template, pairs))
    return ds


def training_graphs(pairs: Sequence[GraphPair]) -> list[Graph]:
    """Flatten pairs into unlabeled graphs; correspondences are discarded."""
    out = []
    for p in pairs:
        out.append(p.source)
        out.append(p.target)
    return out


# ---------------------------------------------------------------------------
# persistence


def graph_to_dict(g: Graph) -> dict:
    return {
        "graph_id": g.graph_id,
        "class_id": int(g.class_id),
        "num_nodes": g.num_nodes,
        "features": g.node_features.tolist(),
        "edges": [list(e) for e in g.edges()],
        "coords": None if g.coords is None else g.coords.tolist(),
    }


def graph_from_dict(d: dict) -> Graph:
    n = int(d["num_nodes"])
    feats = np.asarray(d["features"], dtype=np.float64).reshape(n, -1)
    coords = None if d.get("coords") is None else np.asarray(d["coords"], dtype=np.float64)
    return Graph(feats, adjacency_from_edges(n, d["edges"]), coords,
                 str(d["graph_id"]), int(d["class_id"]))


def dataset_to_dict(ds: SyntheticDataset) -> dict:
    return {
        "version": DATASET_VERSION,
        "config": dataclasses.asdict(ds.config),
        "classes": [
            {
                "class_id": c.class_id,
                "template": {"coords": c.template.coords.tolist(),
                             "features": c.template.features.tolist()},
                "pairs": [{"source": graph_to_dict(p.source),
                           "target": graph_to_dict(p.target),
                           "gt": [list(m) for m in p.gt_matching]} for p in c.pairs],
            }
            for c in ds.classes
        ],
    }


def dataset_from_dict(d: Any) -> SyntheticDataset:
    if not isinstance(d, dict) or d.get("version") != DATASET_VERSION:
        found = d.get("version") if isinstance(d, dict) else type(d).__name__
        raise SchemaError(f"expected dataset version {DATASET_VERSION!r}, found {found!r}")
    try:
        cfg = SyntheticConfig(**d["config"])
        ds = SyntheticDataset(cfg)
        for c in d["classes"]:
            t = c["template"]
            template = ClassTemplate(np.asarray(t["coords"], dtype=np.float64).reshape(-1, 2),
                                     np.asarray(t["features"], dtype=np.float64))
            pairs = [GraphPair(graph_from_dict(p["source"]), graph_from_dict(p["target"]),
                               [tuple(m) for m in p["gt"]]) for p in c["pairs"]]
            ds.classes.append(ClassData(int(c["class_id"]), template, pairs))
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed dataset: {exc}") from exc
    return ds


def save_dataset(ds: SyntheticDataset, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(dataset_to_dict(ds), fh, indent=1)
        fh.write("\n")


def load_dataset(path: str | os.PathLike) -> SyntheticDataset:
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: not a dataset file ({exc})") from exc
    return dataset_from_dict(raw)
