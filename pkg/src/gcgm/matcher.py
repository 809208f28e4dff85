"""Affinity, Sinkhorn normalization, Hungarian discretization, and inference."""

from __future__ import annotations

import enum
import json
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import autodiff as ad
from .autodiff import Tensor
from .encoder import EncoderParams, encode, init_params, project
from .errors import ConfigError, EmptyIntersection, NonFiniteAffinity, SchemaError
from .graph import Graph, GraphPair

CHECKPOINT_VERSION = "gcgm-model/1"


class Setting(str, enum.Enum):
    INTERSECTION = "intsec"
    UNFILTERED = "unfilt"


@dataclass
class ModelConfig:
    hidden_dim: int = 64
    proj_dim: int = 32
    sinkhorn_tau: float = 0.05
    sinkhorn_iters: int = 100
    sinkhorn_eps: float = 1e-6

    def validate(self) -> None:
        if self.hidden_dim < 1 or self.proj_dim < 1:
            raise ConfigError("model dims must be >= 1")
        if not self.sinkhorn_tau > 0:
            raise ConfigError(f"model.sinkhorn_tau must be > 0, got {self.sinkhorn_tau}")
        if self.sinkhorn_iters < 1:
            raise ConfigError("model.sinkhorn_iters must be >= 1")
        if self.sinkhorn_eps < 0:
            raise ConfigError("model.sinkhorn_eps must be >= 0")


@dataclass
class Model:
    encoder: EncoderParams
    w_aff: Tensor
    config: ModelConfig = field(default_factory=ModelConfig)
    seed: int = 0

    def parameters(self) -> dict[str, Tensor]:
        out = dict(self.encoder.tensors)
        out["aff.w"] = self.w_aff
        return out

    def copy(self) -> "Model":
        enc = EncoderParams(self.encoder.in_dim, self.encoder.hidden_dim, self.encoder.proj_dim,
                            {k: Tensor(v.value.copy(), requires_grad=True, name=k)
                             for k, v in self.encoder.tensors.items()})
        return Model(enc, Tensor(self.w_aff.value.copy(), requires_grad=True, name="aff.w"),
                     self.config, self.seed)

    def to_dict(self) -> dict:
        return {
            "version": CHECKPOINT_VERSION,
            "seed": self.seed,
            "in_dim": self.encoder.in_dim,
            "config": self.config.__dict__.copy(),
            "params": {k: v.value.tolist() for k, v in self.parameters().items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Model":
        if not isinstance(d, dict) or d.get("version") != CHECKPOINT_VERSION:
            raise SchemaError("not a gcgm model checkpoint")
        cfg = ModelConfig(**d["config"])
        params = {k: Tensor(np.asarray(v, dtype=np.float64), requires_grad=True, name=k)
                  for k, v in d["params"].items()}
        w_aff = params.pop("aff.w")
        enc = EncoderParams(int(d["in_dim"]), cfg.hidden_dim, cfg.proj_dim, params)
        return cls(enc, w_aff, cfg, int(d["seed"]))


def init_model(seed: int, in_dim: int, config: ModelConfig | None = None) -> Model:
    config = config or ModelConfig()
    config.validate()
    enc = init_params(seed, in_dim, config.hidden_dim, config.proj_dim)
    rng = np.random.default_rng([seed, 1])
    bound = np.sqrt(6.0 / (2 * config.hidden_dim))
    w = rng.uniform(-bound, bound, size=(config.hidden_dim, config.hidden_dim))
    return Model(enc, Tensor(w, requires_grad=True, name="aff.w"), config, seed)


def save_model(model: Model, path: str | os.PathLike, extra: dict | None = None) -> None:
    payload = model.to_dict()
    if extra:
        payload.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def load_model(path: str | os.PathLike) -> tuple[Model, dict]:
    """Model plus the raw checkpoint dict, which may carry extra sections."""
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: not a model checkpoint ({exc})") from exc
    return Model.from_dict(raw), raw


# ---------------------------------------------------------------------------


def affinity(ha: Tensor, hb: Tensor, w_aff: Tensor) -> Tensor:
    """Bilinear scores ``M[i, j] = h_i^A . W . h_j^B``."""
    return ha @ w_aff @ hb.T


def sinkhorn(m: Tensor, tau: float = 0.05, iters: int = 100, eps: float = 1e-6,
             return_padded: bool = False) -> Tensor:
    """Differentiable Sinkhorn in the log domain.

    Rectangular inputs are padded to square with dummy rows or columns of
    logit 0. Rows then columns are normalized until the padded matrix's row
    sums are within ``eps`` of 1 or ``iters`` rounds have run.
    """
    m = ad.as_tensor(m)
    if not np.all(np.isfinite(m.value)):
        raise NonFiniteAffinity("affinity matrix has non-finite entries")
    na, nb = m.shape
    logits = ad.scale(m, 1.0 / tau)
    if na < nb:
        logits = ad.concat_rows([logits, Tensor(np.zeros((nb - na, nb)))])
    elif nb < na:
        logits = ad.concat_cols([logits, Tensor(np.zeros((na, na - nb)))])
    logits, _ = ad.log_sinkhorn(logits, iters, eps)
    s = ad.exp(logits)
    if return_padded or na == nb:
        return s
    return ad.slice_cols(ad.slice_rows(s, 0, na), 0, nb)


def hungarian(s) -> list[tuple[int, int]]:
    """Maximum-total-score partial injection of size min(N_A, N_B)."""
    s = np.asarray(s.value if isinstance(s, Tensor) else s, dtype=np.float64)
    if s.size == 0:
        return []
    rows, cols = linear_sum_assignment(s.max() - s)
    return sorted((int(i), int(j)) for i, j in zip(rows, cols))


@dataclass
class MatchResult:
    soft: np.ndarray
    assignment: list[tuple[int, int]]
    score: float
    f1: float | None = None
    source_nodes: list[int] | None = None
    target_nodes: list[int] | None = None

    def to_dict(self) -> dict:
        return {"soft": self.soft.tolist(), "assignment": [list(a) for a in self.assignment],
                "score": self.score, "f1": self.f1}


@dataclass
class PairForward:
    h_a: Tensor
    h_b: Tensor
    g_a: Tensor
    g_b: Tensor
    m: Tensor
    soft: Tensor


def forward_pair(model: Model, ga: Graph, gb: Graph) -> PairForward:
    ha, hga = encode(ga, model.encoder)
    hb, hgb = encode(gb, model.encoder)
    m = affinity(ha, hb, model.w_aff)
    cfg = model.config
    soft = sinkhorn(m, cfg.sinkhorn_tau, cfg.sinkhorn_iters, cfg.sinkhorn_eps)
    return PairForward(ha, hb, hga, hgb, m, soft)


def restrict_to_intersection(pair: GraphPair) -> tuple[GraphPair, list[int], list[int]]:
    """Keep only gt-matched nodes in both graphs, in ascending original order."""
    if len(pair.gt_matching) < 1:
        raise EmptyIntersection("pair has no ground-truth correspondences")
    src_nodes = sorted(i for i, _ in pair.gt_matching)
    tgt_nodes = sorted(j for _, j in pair.gt_matching)
    src_pos = {o: k for k, o in enumerate(src_nodes)}
    tgt_pos = {o: k for k, o in enumerate(tgt_nodes)}
    gt = [(src_pos[i], tgt_pos[j]) for i, j in pair.gt_matching]
    sub = GraphPair(pair.source.subgraph(src_nodes, retriangulate=True),
                    pair.target.subgraph(tgt_nodes, retriangulate=True), gt)
    return sub, src_nodes, tgt_nodes


def prepare_pair(pair: GraphPair, setting: Setting | str) -> GraphPair:
    if Setting(setting) is Setting.INTERSECTION:
        return restrict_to_intersection(pair)[0]
    return pair


def predict(pair: GraphPair, model: Model, setting: Setting | str = Setting.INTERSECTION) -> MatchResult:
    from .evaluation import f1_score

    setting = Setting(setting)
    src_nodes = tgt_nodes = None
    if setting is Setting.INTERSECTION:
        pair, src_nodes, tgt_nodes = restrict_to_intersection(pair)
    out = forward_pair(model, pair.source, pair.target)
    soft = out.soft.value
    assign = hungarian(soft)
    score = float(sum(soft[i, j] for i, j in assign))
    return MatchResult(soft, assign, score, f1_score(assign, pair.gt_matching),
                       src_nodes, tgt_nodes)
