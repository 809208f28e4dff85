"""Two-layer mean-aggregation GraphSAGE encoder with additive skips.

Layer rule, rows are nodes::

    out = relu(H @ W_self + mean_nbr(H) @ W_neigh + b) + H @ W_skip

``W_skip`` exists only when the layer changes width; otherwise the skip is
the identity. The graph embedding is the mean over node rows. A two-layer
MLP projection head maps node embeddings into the contrastive space.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ShapeMismatch
from .graph import Graph


@dataclass
class EncoderParams:
    in_dim: int
    hidden_dim: int = 64
    proj_dim: int = 32
    tensors: dict[str, Tensor] = field(default_factory=dict)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def parameters(self) -> list[Tensor]:
        return list(self.tensors.values())


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_params(seed: int, in_dim: int, hidden_dim: int = 64, proj_dim: int = 32) -> EncoderParams:
    rng = np.random.default_rng(seed)
    t: dict[str, Tensor] = {}
    d_in = in_dim
    for layer in (1, 2):
        t[f"l{layer}.self"] = _glorot(rng, d_in, hidden_dim)
        t[f"l{layer}.neigh"] = _glorot(rng, d_in, hidden_dim)
        t[f"l{layer}.bias"] = np.zeros((1, hidden_dim))
        if d_in != hidden_dim:
            t[f"l{layer}.skip"] = _glorot(rng, d_in, hidden_dim)
        d_in = hidden_dim
    t["proj.w1"] = _glorot(rng, hidden_dim, hidden_dim)
    t["proj.b1"] = np.zeros((1, hidden_dim))
    t["proj.w2"] = _glorot(rng, hidden_dim, proj_dim)
    t["proj.b2"] = np.zeros((1, proj_dim))
    tensors = {k: Tensor(v, requires_grad=True, name=k) for k, v in t.items()}
    return EncoderParams(in_dim, hidden_dim, proj_dim, tensors)


def neighbor_mean_operator(adjacency: np.ndarray) -> np.ndarray:
    """Row-normalized adjacency; isolated nodes get an all-zero row."""
    a = adjacency.astype(np.float64)
    deg = a.sum(axis=1, keepdims=True)
    return np.divide(a, deg, out=np.zeros_like(a), where=deg > 0)


def encode(g: Graph, p: EncoderParams) -> tuple[Tensor, Tensor]:
    """Node embeddings (N x hidden) and the mean-pooled graph embedding (1 x hidden)."""
    if g.feature_dim != p.in_dim:
        raise ShapeMismatch(f"graph has {g.feature_dim} features, encoder expects {p.in_dim}")
    agg = Tensor(neighbor_mean_operator(g.adjacency))
    h = Tensor(g.node_features)
    for layer in (1, 2):
        pre = h @ p[f"l{layer}.self"] + (agg @ h) @ p[f"l{layer}.neigh"] + p[f"l{layer}.bias"]
        skip_key = f"l{layer}.skip"
        skip = h @ p[skip_key] if skip_key in p.tensors else h
        h = ad.relu(pre) + skip
    return h, ad.row_mean(h)


def project(h: Tensor, p: EncoderParams) -> Tensor:
    return ad.relu(h @ p["proj.w1"] + p["proj.b1"]) @ p["proj.w2"] + p["proj.b2"]
