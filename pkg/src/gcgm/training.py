"""Self-supervised pre-training loop.

For each graph of a mini-batch a pool entry is drawn, both augmentations
are applied, and the two views are pushed through encoder, projection,
affinity and Sinkhorn. The loss is the contrastive node loss plus the
matching loss against the views' self-labeled correspondence. The
Hungarian F1 of each view pair is fed back to the pool after the batch.
No cross-graph labels enter this path: ``train`` only receives graphs.
"""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .augment import apply, self_ground_truth
from .errors import ConfigError, NonFiniteValue, NoPositives
from .evaluation import evaluate, f1_score
from .graph import Graph, GraphPair
from .losses import LossConfig, matching_loss, node_contrastive_loss
from .matcher import Model, ModelConfig, Setting, forward_pair, hungarian, init_model
from .encoder import project
from .pool import (AugPairEntry, BiasConfig, build_pool, end_batch_update, pool_entropy,
                   record_score, sample_pair, sampling_probabilities)

log = logging.getLogger(__name__)

LOG_COLUMNS = ("epoch", "loss", "l_node", "l_match", "train_f1", "val_f1")


@dataclass
class TrainConfig:
    bias: BiasConfig = field(default_factory=BiasConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    learning_rate: float = 5e-3
    batch_size: int = 16
    max_epochs: int = 200
    early_stop_eps: float = 1e-3
    patience: int = 10
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps_opt: float = 1e-8

    def validate(self) -> None:
        self.bias.validate()
        self.loss.validate()
        self.model.validate()
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be > 0")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ConfigError("batch_size, max_epochs and patience must be >= 1")
        if self.early_stop_eps < 0:
            raise ConfigError("early_stop_eps must be >= 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.eps_opt > 0):
            raise ConfigError("need 0 <= beta1, beta2 < 1 and eps_opt > 0")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["bias"]["sampler"] = self.bias.sampler.value
        d["loss"]["matching_loss_kind"] = self.loss.matching_loss_kind.value
        return d


class Adam:
    """Adaptive moment estimation with bias correction."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, ad.Tensor], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name, p in params.items():
            g = grads[name]
            m = self.m.get(name, np.zeros_like(g))
            v = self.v.get(name, np.zeros_like(g))
            m = self.beta1 * m + (1.0 - self.beta1) * g
            v = self.beta2 * v + (1.0 - self.beta2) * g * g
            self.m[name], self.v[name] = m, v
            p.value = p.value - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def optimizer_step(params: dict[str, ad.Tensor], grads: dict[str, np.ndarray],
                   state: Adam) -> None:
    state.step(params, grads)


@dataclass
class TrainLog:
    rows: list[dict] = field(default_factory=list)
    entropy: list[float] = field(default_factory=list)
    best_epoch: int = 0
    best_val_f1: float = -math.inf
    skipped_batches: int = 0

    def write_csv(self, path: str | os.PathLike) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(LOG_COLUMNS)
            for r in self.rows:
                w.writerow([r["epoch"]] + [repr(float(r[c])) for c in LOG_COLUMNS[1:]])


@dataclass
class StepStats:
    loss: float
    l_node: float
    l_match: float
    f1: float


def pair_step(model: Model, view_a, view_b, loss_cfg: LossConfig,
              need_grad: bool = True) -> StepStats:
    """Forward (and backward, accumulating into parameter grads) for one view pair."""
    g_self = self_ground_truth(view_a, view_b)
    out = forward_pair(model, view_a.graph, view_b.graph)
    za = project(out.h_a, model.encoder)
    zb = project(out.h_b, model.encoder)
    try:
        l_node = node_contrastive_loss(za, zb, g_self, loss_cfg.temperature)
    except NoPositives:
        l_node = ad.Tensor(0.0)
    l_match = matching_loss(out.soft, g_self, loss_cfg.matching_loss_kind, loss_cfg.balanced)
    loss = l_node + l_match
    if need_grad:
        ad.backward(loss)
    gt_pairs = list(zip(*np.nonzero(g_self)))
    f1 = f1_score(hungarian(out.soft.value), [(int(i), int(j)) for i, j in gt_pairs])
    return StepStats(loss.item(), l_node.item(), l_match.item(), f1)


def _streams(seed: int):
    ss = np.random.SeedSequence(seed)
    pool_ss, order_ss, aug_ss = ss.spawn(3)
    return (np.random.default_rng(pool_ss), np.random.default_rng(order_ss),
            np.random.default_rng(aug_ss))


def train(graphs: Sequence[Graph], val_pairs: Sequence[GraphPair], cfg: TrainConfig,
          pool: list[AugPairEntry] | None = None, model: Model | None = None,
          ) -> tuple[Model, TrainLog, list[AugPairEntry]]:
    """Pre-train a model; returns (best checkpoint, log, final pool)."""
    if not graphs:
        raise ValueError("train needs at least one graph")
    cfg.validate()
    pool_rng, order_rng, aug_rng = _streams(cfg.seed)
    if pool is None:
        pool = build_pool(cfg.bias, pool_rng)
    if model is None:
        model = init_model(cfg.seed, graphs[0].feature_dim, cfg.model)
    params = model.parameters()
    opt = Adam(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps_opt)
    tlog = TrainLog()
    best = model.copy()
    stale = 0

    for epoch in range(1, cfg.max_epochs + 1):
        order = order_rng.permutation(len(graphs))
        sums = np.zeros(4)
        seen = 0
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            probs = sampling_probabilities(pool, cfg.bias.sampler)
            ad.zero_grads(params.values())
            stats: list[tuple[int, StepStats]] = []
            try:
                for gi in batch:
                    idx = sample_pair(pool, aug_rng, cfg.bias.sampler, probs)
                    entry = pool[idx]
                    va = apply(entry.first, graphs[gi], aug_rng)
                    vb = apply(entry.second, graphs[gi], aug_rng)
                    stats.append((idx, pair_step(model, va, vb, cfg.loss)))
            except NonFiniteValue as exc:
                log.warning("epoch %d: skipping batch at %d (%s)", epoch, start, exc)
                tlog.skipped_batches += 1
                ad.zero_grads(params.values())
                continue
            grads = {k: p.grad / len(batch) for k, p in params.items()}
            opt.step(params, grads)
            for idx, s in stats:
                record_score(pool, idx, s.f1)
                sums += (s.loss, s.l_node, s.l_match, s.f1)
                seen += 1
            end_batch_update(pool, cfg.bias)
        ad.zero_grads(params.values())

        means = sums / max(seen, 1)
        val_f1 = evaluate(model, val_pairs, Setting.INTERSECTION).mean if val_pairs else float("nan")
        tlog.rows.append({"epoch": epoch, "loss": means[0], "l_node": means[1],
                          "l_match": means[2], "train_f1": means[3], "val_f1": val_f1})
        tlog.entropy.append(pool_entropy(pool, cfg.bias.sampler))
        log.info("epoch %d loss %.4f train_f1 %.3f val_f1 %.3f", epoch, means[0], means[3], val_f1)

        if not val_pairs:
            best, tlog.best_epoch = model.copy(), epoch
            continue
        improved = val_f1 > tlog.best_val_f1 + cfg.early_stop_eps
        if val_f1 > tlog.best_val_f1:
            tlog.best_val_f1, tlog.best_epoch, best = val_f1, epoch, model.copy()
        stale = 0 if improved else stale + 1
        if stale >= cfg.patience:
            break
    return best, tlog, pool
