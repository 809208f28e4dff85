import math

import numpy as np
import pytest

from gcgm import autodiff as ad
from gcgm.augment import AugKind, AugSpec, apply
from gcgm.errors import ConfigError
from gcgm.evaluation import evaluate
from gcgm.graph import SyntheticConfig, generate_dataset, training_graphs
from gcgm.losses import LossConfig
from gcgm.matcher import ModelConfig, init_model
from gcgm.pool import AugPairEntry, BiasConfig, Sampler
from gcgm.training import Adam, TrainConfig, pair_step, train

SMALL = ModelConfig(hidden_dim=16, proj_dim=8)


def _cfg(**kw):
    base = dict(model=SMALL, bias=BiasConfig(pool_size=32), batch_size=4, max_epochs=2, seed=0)
    base.update(kw)
    return TrainConfig(**base)


def _data(n_classes=2, pairs=3, seed=0):
    ds = generate_dataset(SyntheticConfig(n_classes=n_classes, pairs_per_class=pairs, seed=seed))
    return ds.split(0.34)


def test_adam_zero_gradient_leaves_params():
    p = {"x": ad.Tensor(np.array([[1.0, -2.0]]), requires_grad=True)}
    Adam(0.1).step(p, {"x": np.zeros((1, 2))})
    np.testing.assert_array_equal(p["x"].value, [[1.0, -2.0]])


def test_adam_first_step_is_lr_sign():
    p = {"x": ad.Tensor(np.array([[1.0, 1.0, 1.0]]), requires_grad=True)}
    Adam(0.01).step(p, {"x": np.array([[3.0, -0.2, 50.0]])})
    np.testing.assert_allclose(p["x"].value, [[0.99, 1.01, 0.99]], atol=1e-8)


def test_adam_quadratic_bowl():
    x = ad.Tensor(np.array([[1.5, -0.7, 0.3]]), requires_grad=True)
    opt = Adam(1e-2)
    for _ in range(2000):
        x.zero_grad()
        ad.backward(ad.total(ad.mul(x, x)))
        opt.step({"x": x}, {"x": x.grad})
    assert float((x.value ** 2).sum()) < 1e-6


def test_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(learning_rate=0).validate()
    with pytest.raises(ConfigError):
        TrainConfig(batch_size=0).validate()


def test_pair_step_identity_views(rng):
    g = training_graphs(_data()[0])[0]
    model = init_model(0, g.feature_dim, SMALL)
    v = apply(AugSpec(AugKind.IDENTITY), g, rng)
    s = pair_step(model, v, v, LossConfig())
    assert math.isfinite(s.loss) and 0 <= s.f1 <= 1
    assert s.loss == pytest.approx(s.l_node + s.l_match)
    assert np.any(model.w_aff.grad != 0)


def test_single_graph_identity_pool_smoke():
    tr, _ = _data()
    g = training_graphs(tr)[:1]
    pool = [AugPairEntry(AugSpec(AugKind.IDENTITY), AugSpec(AugKind.IDENTITY), math.exp(3))]
    model, tlog, pool = train(g, [], _cfg(max_epochs=1), pool=pool)
    assert len(tlog.rows) == 1
    assert math.isfinite(tlog.rows[0]["loss"])
    assert pool[0].perf_count == 1


def test_momentum_one_freezes_weights():
    tr, va = _data()
    _, _, pool = train(training_graphs(tr), va, _cfg(bias=BiasConfig(pool_size=32, lam=1.0)))
    assert all(e.weight == math.exp(3) for e in pool)
    assert sum(e.perf_count for e in pool) > 0


def test_bias_sampler_moves_weights_uniform_does_not():
    tr, va = _data()
    _, _, pb = train(training_graphs(tr), va, _cfg())
    _, _, pu = train(training_graphs(tr), va,
                     _cfg(bias=BiasConfig(pool_size=32, sampler=Sampler.UNIFORM)))
    assert any(e.weight != math.exp(3) for e in pb)
    assert all(e.weight == math.exp(3) for e in pu)


def test_training_is_deterministic(tmp_path):
    tr, va = _data()
    runs = [train(training_graphs(tr), va, _cfg()) for _ in range(2)]
    (m1, l1, p1), (m2, l2, p2) = runs
    assert [r["loss"] for r in l1.rows] == [r["loss"] for r in l2.rows]
    assert all(np.array_equal(a.value, b.value)
               for a, b in zip(m1.parameters().values(), m2.parameters().values()))
    l1.write_csv(tmp_path / "a.csv")
    l2.write_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert [e.weight for e in p1] == [e.weight for e in p2]


def test_log_and_early_stopping():
    tr, va = _data()
    _, tlog, _ = train(training_graphs(tr), va, _cfg(max_epochs=30, patience=2, learning_rate=1e-9))
    # a frozen model cannot improve, so training stops after patience stale epochs
    assert len(tlog.rows) == 3
    assert tlog.best_epoch == 1
    assert len(tlog.entropy) == 3
    for r in tlog.rows:
        assert 0 <= r["train_f1"] <= 1 and 0 <= r["val_f1"] <= 1


def test_training_improves_on_a_small_set():
    tr, va = _data(n_classes=4, pairs=6)
    _, tlog, _ = train(training_graphs(tr), va,
                       _cfg(max_epochs=6, patience=6, bias=BiasConfig(pool_size=64)))
    untrained = evaluate(init_model(0, 16, SMALL), va).mean
    assert tlog.best_val_f1 > untrained + 0.15
