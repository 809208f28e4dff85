import math

import numpy as np
import pytest

from gcgm.augment import AugKind, AugSpec
from gcgm.errors import ConfigError, ScoreOutOfRange
from gcgm.pool import (ALLOWED_KIND_PAIRS, AugPairEntry, BiasConfig, Sampler, bias_update,
                       build_pool, end_batch_update, pool_entropy, pool_snapshot, record_score,
                       sample_pair, sampling_probabilities)

E3 = math.exp(3.0)


def _entry(w):
    return AugPairEntry(AugSpec(AugKind.IDENTITY), AugSpec(AugKind.MIXUP, {"mu": 0.5}), w)


def test_build_pool_defaults():
    pool = build_pool(BiasConfig(), np.random.default_rng(0))
    assert len(pool) == 512
    assert all(e.weight == E3 for e in pool)
    np.testing.assert_allclose(sampling_probabilities(pool), 1 / 512)


def test_excluded_kind_pairs_never_drawn():
    assert len(ALLOWED_KIND_PAIRS) == 9 * 9 - 2
    rng = np.random.default_rng(0)
    for _ in range(200):
        for e in build_pool(BiasConfig(pool_size=64), rng):
            assert (e.first.kind, e.second.kind) not in {
                (AugKind.IDENTITY, AugKind.IDENTITY), (AugKind.MIXUP, AugKind.MIXUP)}


def test_config_validation():
    for bad in (BiasConfig(lam=1.2), BiasConfig(alpha=0.5), BiasConfig(pool_size=0)):
        with pytest.raises(ConfigError):
            bad.validate()


def test_uniform_weights_sample_uniformly():
    pool = [_entry(E3) for _ in range(8)]
    rng = np.random.default_rng(0)
    n = 100_000
    counts = np.bincount([sample_pair(pool, rng) for _ in range(n)], minlength=8)
    sigma = math.sqrt(n * (1 / 8) * (7 / 8))
    assert np.all(np.abs(counts - n / 8) < 3 * sigma)


def test_two_entry_probability():
    pool = [_entry(E3), _entry(1.0)]
    p = sampling_probabilities(pool)
    assert p[0] == pytest.approx(0.9526, abs=1e-4)
    rng = np.random.default_rng(1)
    n = 100_000
    freq = np.mean([sample_pair(pool, rng) == 0 for _ in range(n)])
    assert abs(freq - p[0]) < 3 * math.sqrt(p[0] * (1 - p[0]) / n)


def test_single_entry_pool():
    assert all(sample_pair([_entry(2.0)], np.random.default_rng(s)) == 0 for s in range(20))


def test_uniform_sampler_ignores_weights():
    pool = [_entry(E3), _entry(1.0)]
    np.testing.assert_array_equal(sampling_probabilities(pool, Sampler.UNIFORM), [0.5, 0.5])


def test_record_score_range():
    pool = [_entry(E3)]
    with pytest.raises(ScoreOutOfRange):
        record_score(pool, 0, 1.5)
    with pytest.raises(ScoreOutOfRange):
        record_score(pool, 0, float("nan"))


def test_update_examples():
    assert bias_update(E3, 0.0, 0.8, 3.0) == E3
    assert bias_update(E3, 1.0, 0.8, 3.0) == pytest.approx(0.8 * E3 + 0.2, abs=1e-12)
    assert bias_update(E3, 1.0, 0.8, 3.0) == pytest.approx(16.2684, abs=1e-4)
    assert bias_update(7.3, 0.4, 1.0, 3.0) == 7.3
    assert bias_update(E3, 0.5, 0.0, 3.0) == pytest.approx(math.exp(1.5), rel=1e-15)


def test_fixed_point_over_many_steps():
    w = E3
    for _ in range(10_000):
        w = bias_update(w, 0.0, 0.8, 3.0)
    assert w == E3


def test_end_batch_update_folds_scores_and_skips_unsampled():
    cfg = BiasConfig(pool_size=3)
    pool = [_entry(E3) for _ in range(3)]
    record_score(pool, 0, 1.0)
    record_score(pool, 0, 0.5)
    end_batch_update(pool, cfg)
    assert pool[0].phi == 0.75 and pool[0].perf_count == 2
    assert pool[0].weight == pytest.approx(0.8 * E3 + 0.2 * math.exp(3 * 0.25))
    assert pool[1].weight == E3 and pool[1].phi is None


def test_uniform_sampler_keeps_weights():
    cfg = BiasConfig(pool_size=2, sampler=Sampler.UNIFORM)
    pool = [_entry(E3), _entry(E3)]
    record_score(pool, 0, 1.0)
    end_batch_update(pool, cfg)
    assert pool[0].weight == E3 and pool[0].perf_count == 1


def test_harder_pairs_get_heavier():
    cfg = BiasConfig(pool_size=2)
    pool = [_entry(E3), _entry(E3)]
    for _ in range(30):
        record_score(pool, 0, 0.9)
        record_score(pool, 1, 0.2)
        end_batch_update(pool, cfg)
    assert pool[1].weight > pool[0].weight
    assert pool_entropy(pool) < math.log(2)
    assert pool_snapshot(pool)[0]["index"] == 1


def test_entropy_of_uniform_pool():
    pool = [_entry(1.0) for _ in range(16)]
    assert pool_entropy(pool) == pytest.approx(math.log(16))


def test_entry_round_trip():
    e = _entry(3.5)
    e.perf_sum, e.perf_count = 1.25, 3
    back = AugPairEntry.from_dict(e.to_dict())
    assert back.weight == 3.5 and back.phi == e.phi and back.first == e.first
