"""Pool of augmentation pairs and the boosting-style adaptive sampler.

Every pool entry starts at weight ``e**alpha`` (a uniform distribution).
At each mini-batch boundary, entries that have been applied at least once
move toward ``e**(alpha * (1 - phi))`` with momentum ``lam``, where ``phi``
is the entry's running mean matching F1. Hard pairs (low F1) keep high
weight and get drawn more often; easy pairs decay toward weight 1.
"""

from __future__ import annotations

import enum
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .augment import ALL_KINDS, AugKind, AugSpec, sample_spec
from .errors import ConfigError, ScoreOutOfRange

EXCLUDED_KIND_PAIRS = frozenset({
    (AugKind.IDENTITY, AugKind.IDENTITY),
    (AugKind.MIXUP, AugKind.MIXUP),
})

ALLOWED_KIND_PAIRS = tuple(
    (a, b) for a in ALL_KINDS for b in ALL_KINDS if (a, b) not in EXCLUDED_KIND_PAIRS
)


class Sampler(str, enum.Enum):
    UNIFORM = "uniform"
    BIAS = "bias"


@dataclass
class BiasConfig:
    lam: float = 0.8
    alpha: float = 3.0
    pool_size: int = 512
    sampler: Sampler = Sampler.BIAS

    def __post_init__(self):
        self.sampler = Sampler(self.sampler)

    def validate(self) -> None:
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError(f"bias.lam must lie in [0, 1], got {self.lam}")
        if self.alpha < 1.0:
            raise ConfigError(f"bias.alpha must be >= 1, got {self.alpha}")
        if self.pool_size < 1:
            raise ConfigError(f"bias.pool_size must be >= 1, got {self.pool_size}")


@dataclass
class AugPairEntry:
    first: AugSpec
    second: AugSpec
    weight: float
    perf_sum: float = 0.0
    perf_count: int = 0
    batch_scores: list[float] = field(default_factory=list)

    @property
    def phi(self) -> float | None:
        return self.perf_sum / self.perf_count if self.perf_count else None

    def to_dict(self) -> dict:
        return {"first": self.first.to_dict(), "second": self.second.to_dict(),
                "weight": self.weight, "perf_sum": self.perf_sum,
                "perf_count": self.perf_count}

    @classmethod
    def from_dict(cls, d: dict) -> "AugPairEntry":
        return cls(AugSpec.from_dict(d["first"]), AugSpec.from_dict(d["second"]),
                   float(d["weight"]), float(d["perf_sum"]), int(d["perf_count"]))


def build_pool(cfg: BiasConfig, rng: np.random.Generator) -> list[AugPairEntry]:
    """Draw ``pool_size`` ordered augmentation pairs.

    The kind pair is uniform over the allowed ordered pairs, then each
    side's parameters are drawn independently. Duplicates are allowed.
    """
    cfg.validate()
    w0 = math.exp(cfg.alpha)
    pool = []
    for _ in range(cfg.pool_size):
        a, b = ALLOWED_KIND_PAIRS[rng.integers(len(ALLOWED_KIND_PAIRS))]
        pool.append(AugPairEntry(sample_spec(a, rng), sample_spec(b, rng), w0))
    return pool


def sampling_probabilities(pool: list[AugPairEntry], sampler: Sampler = Sampler.BIAS) -> np.ndarray:
    if sampler is Sampler.UNIFORM:
        return np.full(len(pool), 1.0 / len(pool))
    w = np.array([e.weight for e in pool])
    return w / w.sum()


def sample_pair(pool: list[AugPairEntry], rng: np.random.Generator,
                sampler: Sampler = Sampler.BIAS, probs: np.ndarray | None = None) -> int:
    """Index of one entry; pass a frozen ``probs`` snapshot to reuse it within a batch."""
    if len(pool) == 1:
        return 0
    if probs is None:
        probs = sampling_probabilities(pool, sampler)
    return int(rng.choice(len(pool), p=probs))


def record_score(pool: list[AugPairEntry], idx: int, score: float) -> None:
    if not 0.0 <= score <= 1.0 or math.isnan(score):
        raise ScoreOutOfRange(f"score {score} outside [0, 1]")
    pool[idx].batch_scores.append(float(score))


def bias_update(weight: float, phi: float, lam: float, alpha: float) -> float:
    """One momentum step toward ``exp(alpha * (1 - phi))``.

    Written as ``w + (1 - lam) * (target - w)``, which equals
    ``lam * w + (1 - lam) * target`` but leaves ``w`` bit-exact when it
    already sits at the target or when ``lam == 1``.
    """
    target = math.exp(alpha * (1.0 - phi))
    return weight + (1.0 - lam) * (target - weight)


def end_batch_update(pool: list[AugPairEntry], cfg: BiasConfig) -> None:
    """Fold this batch's scores into the running means and reweight.

    Entries never applied keep their initial weight. Under the uniform
    sampler the statistics still accumulate but weights stay fixed.
    """
    for e in pool:
        if e.batch_scores:
            e.perf_sum += sum(e.batch_scores)
            e.perf_count += len(e.batch_scores)
            e.batch_scores = []
        if cfg.sampler is Sampler.UNIFORM or e.perf_count == 0:
            continue
        e.weight = bias_update(e.weight, e.perf_sum / e.perf_count, cfg.lam, cfg.alpha)


def pool_entropy(pool: list[AugPairEntry], sampler: Sampler = Sampler.BIAS) -> float:
    p = sampling_probabilities(pool, sampler)
    return float(-(p * np.log(p)).sum())


def pool_snapshot(pool: list[AugPairEntry]) -> list[dict]:
    """Entries sorted by descending weight, with their mean score and count."""
    rows = []
    for i, e in enumerate(pool):
        rows.append({"index": i, "first": e.first.to_dict(), "second": e.second.to_dict(),
                     "label": f"{e.first.label()} | {e.second.label()}",
                     "weight": e.weight, "phi": e.phi, "count": e.perf_count})
    rows.sort(key=lambda r: (-r["weight"], r["index"]))
    return rows


def write_pool_snapshot(pool: list[AugPairEntry], path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"entries": pool_snapshot(pool)}, fh, indent=1)
        fh.write("\n")
