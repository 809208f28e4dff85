"""Graph augmentations that remember where every view node came from.

Each augmentation returns an :class:`AugmentedView`: the transformed graph
plus ``origin_of``, mapping view nodes back to original node indices
(``None`` for inserted dummy nodes). Two views of the same graph therefore
yield a ground-truth correspondence for free, see :func:`self_ground_truth`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import EmptyView, InvalidSpec
from .graph import Graph


class AugKind(str, enum.Enum):
    IDENTITY = "Identity"
    NODE_INSERTION = "NodeInsertion"
    NODE_REPLACEMENT = "NodeReplacement"
    EDGE_REMOVAL = "EdgeRemoval"
    FEATURE_SCALE_UNI = "FeatureScaleUnivariate"
    FEATURE_SCALE_MULTI = "FeatureScaleMultivariate"
    NODE_DROPPING = "NodeDropping"
    FEATURE_MASKING = "FeatureMasking"
    MIXUP = "Mixup"


ALL_KINDS = tuple(AugKind)

# Sampling ranges for the pool. Where a parameter is only bounded below,
# the upper end is a local choice.
K_RANGE = (2, 5)
E_RANGE = (1, 3)
PROB_RANGE = (0.1, 0.9)
FS_LOW_RANGE = (0.2, 0.8)
FS_HIGH_RANGE = (1.2, 1.8)


@dataclass(frozen=True)
class AugSpec:
    kind: AugKind
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind.value, "params": dict(self.params)}

    @classmethod
    def from_dict(cls, d: dict) -> "AugSpec":
        spec = cls(AugKind(d["kind"]), dict(d.get("params", {})))
        spec.validate()
        return spec

    def validate(self) -> None:
        p = self.params

        def need(name):
            if name not in p:
                raise InvalidSpec(f"{self.kind.value} needs parameter {name!r}")
            return p[name]

        def in_range(name, lo, hi):
            v = need(name)
            if not lo <= v <= hi:
                raise InvalidSpec(f"{self.kind.value}.{name}={v} outside [{lo}, {hi}]")

        k = self.kind
        if k in (AugKind.NODE_INSERTION, AugKind.NODE_REPLACEMENT):
            in_range("p", *PROB_RANGE)
            if int(need("k")) < 2:
                raise InvalidSpec(f"{k.value}.k must be >= 2")
            if need("aggr") not in ("mean", "max"):
                raise InvalidSpec(f"{k.value}.aggr must be 'mean' or 'max'")
            if int(need("e")) < 1:
                raise InvalidSpec(f"{k.value}.e must be >= 1")
        elif k in (AugKind.EDGE_REMOVAL, AugKind.NODE_DROPPING, AugKind.FEATURE_MASKING):
            in_range("p", *PROB_RANGE)
        elif k in (AugKind.FEATURE_SCALE_UNI, AugKind.FEATURE_SCALE_MULTI):
            in_range("low", *FS_LOW_RANGE)
            in_range("high", *FS_HIGH_RANGE)
        elif k is AugKind.MIXUP:
            in_range("mu", *PROB_RANGE)

    def label(self) -> str:
        if not self.params:
            return self.kind.value
        inner = ",".join(f"{k}={_fmt(v)}" for k, v in sorted(self.params.items()))
        return f"{self.kind.value}({inner})"


def _fmt(v) -> str:
    return f"{v:.3g}" if isinstance(v, float) else str(v)


def sample_spec(kind: AugKind, rng: np.random.Generator) -> AugSpec:
    """Draw a spec of ``kind`` with parameters uniform over their ranges."""
    if kind in (AugKind.NODE_INSERTION, AugKind.NODE_REPLACEMENT):
        params = {
            "p": float(rng.uniform(*PROB_RANGE)),
            "k": int(rng.integers(K_RANGE[0], K_RANGE[1] + 1)),
            "aggr": str(rng.choice(["mean", "max"])),
            "e": int(rng.integers(E_RANGE[0], E_RANGE[1] + 1)),
        }
    elif kind in (AugKind.EDGE_REMOVAL, AugKind.NODE_DROPPING, AugKind.FEATURE_MASKING):
        params = {"p": float(rng.uniform(*PROB_RANGE))}
    elif kind in (AugKind.FEATURE_SCALE_UNI, AugKind.FEATURE_SCALE_MULTI):
        params = {"low": float(rng.uniform(*FS_LOW_RANGE)),
                  "high": float(rng.uniform(*FS_HIGH_RANGE))}
    elif kind is AugKind.MIXUP:
        params = {"mu": float(rng.uniform(*PROB_RANGE))}
    else:
        params = {}
    return AugSpec(kind, params)


@dataclass
class AugmentedView:
    graph: Graph
    origin_of: list[int | None]
    # kept: original indices of the leading view nodes, in view order;
    # n_dummies: count of inserted nodes appended after them
    trace: dict = field(default_factory=dict)


def _fraction_count(p: float, n: int) -> int:
    return int(math.ceil(p * n - 1e-12))


def _insert_dummies(x: np.ndarray, adj: np.ndarray, count: int, k: int, aggr: str,
                    e: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    n = x.shape[0]
    feats, links = [], []
    for _ in range(count):
        subset = rng.choice(n, size=min(k, n), replace=False)
        block = x[subset]
        feats.append(block.mean(axis=0) if aggr == "mean" else block.max(axis=0))
        outside = np.setdiff1d(np.arange(n), subset)
        m = min(e, len(outside))
        links.append(rng.choice(outside, size=m, replace=False) if m else np.array([], int))
    total = n + count
    new_adj = np.zeros((total, total), dtype=np.int8)
    new_adj[:n, :n] = adj
    for d, ends in enumerate(links):
        new_adj[n + d, ends] = 1
        new_adj[ends, n + d] = 1
    return np.vstack([x] + [f[None, :] for f in feats]), new_adj


def apply(spec: AugSpec, g: Graph, rng: np.random.Generator) -> AugmentedView:
    """Apply ``spec`` to ``g`` using randomness from ``rng`` only."""
    spec.validate()
    n = g.num_nodes
    x, adj, coords = g.node_features, g.adjacency, g.coords
    kind, p = spec.kind, spec.params
    kept = list(range(n))
    n_dummies = 0

    if kind is AugKind.IDENTITY:
        x, adj = x.copy(), adj.copy()
    elif kind is AugKind.NODE_INSERTION:
        n_dummies = _fraction_count(p["p"], n)
        x, adj = _insert_dummies(x, adj, n_dummies, int(p["k"]), p["aggr"], int(p["e"]), rng)
        coords = None
    elif kind is AugKind.NODE_REPLACEMENT:
        # at least one survivor is needed to build dummies from
        n_dummies = min(_fraction_count(p["p"], n), n - 1)
        removed = rng.choice(n, size=n_dummies, replace=False)
        kept = sorted(set(range(n)) - set(int(r) for r in removed))
        sub = np.asarray(kept, dtype=int)
        x, adj = _insert_dummies(x[sub], adj[np.ix_(sub, sub)], n_dummies,
                                 int(p["k"]), p["aggr"], int(p["e"]), rng)
        coords = None
    elif kind is AugKind.EDGE_REMOVAL:
        adj = adj.copy()
        for i, j in g.edges():
            if rng.random() < p["p"]:
                adj[i, j] = adj[j, i] = 0
    elif kind is AugKind.FEATURE_SCALE_UNI:
        s = rng.uniform(p["low"], p["high"], size=(n, 1))
        x = x * s
    elif kind is AugKind.FEATURE_SCALE_MULTI:
        s = rng.uniform(p["low"], p["high"], size=x.shape)
        x = x * s
    elif kind is AugKind.NODE_DROPPING:
        keep = rng.random(n) >= p["p"]
        if not keep.any():
            keep[rng.integers(n)] = True
        kept = [int(i) for i in np.nonzero(keep)[0]]
        sub = np.asarray(kept, dtype=int)
        x, adj = x[sub], adj[np.ix_(sub, sub)]
        coords = None if coords is None else coords[sub]
    elif kind is AugKind.FEATURE_MASKING:
        masked = rng.random(g.feature_dim) < p["p"]
        x = x.copy()
        x[:, masked] = 0.0
    elif kind is AugKind.MIXUP:
        mu = p["mu"]
        x = (1.0 - mu) * x + mu * x.mean(axis=0, keepdims=True)
    else:  # pragma: no cover - enum is closed
        raise InvalidSpec(f"unknown kind {kind}")

    if x.shape[0] == 0:
        raise EmptyView(f"{kind.value} produced an empty view")
    view = Graph(x, adj, coords, g.graph_id, g.class_id)
    origin: list[int | None] = list(kept) + [None] * n_dummies
    return AugmentedView(view, origin, {"kind": kind.value, "kept": list(kept),
                                        "n_dummies": n_dummies})


def self_ground_truth(a: AugmentedView, b: AugmentedView) -> np.ndarray:
    """Binary N_A x N_B matrix linking view nodes that share an original node."""
    gt = np.zeros((a.graph.num_nodes, b.graph.num_nodes))
    where_b = {o: j for j, o in enumerate(b.origin_of) if o is not None}
    for i, o in enumerate(a.origin_of):
        if o is not None and o in where_b:
            gt[i, where_b[o]] = 1.0
    return gt
