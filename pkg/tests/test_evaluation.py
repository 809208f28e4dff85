import math

import numpy as np
import pytest

from gcgm.evaluation import (EvalReport, evaluate, f1_score, greedy_discretize, power_iteration,
                             random_assignment, spectral_match)
from gcgm.graph import Graph, GraphPair, SyntheticConfig, generate_dataset
from gcgm.matcher import ModelConfig, Setting, init_model


def test_f1_examples():
    gt = [(i, i) for i in range(4)]
    assert f1_score(gt, gt) == 1.0
    assert f1_score([(0, 1), (1, 0)], gt) == 0.0
    assert f1_score([], []) == 1.0
    assert f1_score([], gt) == 0.0
    gt10 = [(i, i) for i in range(10)]
    pred = [(i, i) for i in range(6)] + [(i, i + 1) for i in range(10, 16)]
    assert f1_score(pred, gt10) == pytest.approx(2 * 0.5 * 0.6 / 1.1)
    assert f1_score(pred, gt10) == pytest.approx(0.54545, abs=1e-5)


def test_f1_transpose_symmetry(rng):
    for _ in range(50):
        pred = {(int(a), int(b)) for a, b in rng.integers(0, 6, (5, 2))}
        gt = {(int(a), int(b)) for a, b in rng.integers(0, 6, (5, 2))}
        t = lambda s: [(j, i) for i, j in s]
        v = f1_score(pred, gt)
        assert 0 <= v <= 1 and v == f1_score(t(pred), t(gt))


def test_power_iteration_closed_form():
    k = np.array([[2.0, 1, 0], [1, 2, 1], [0, 1, 2]])
    v, lam = power_iteration(k, iters=1000, tol=1e-14)
    expected = np.array([1.0, math.sqrt(2), 1.0]) / 2
    assert np.abs(v - expected).max() < 1e-6
    assert lam == pytest.approx(2 + math.sqrt(2), abs=1e-9)
    w, _ = power_iteration(lambda x: k @ x, n=3, iters=1000, tol=1e-14)
    np.testing.assert_allclose(w, v)


def test_greedy_discretize():
    x = np.array([[0.1, 0.9, 0.2], [0.8, 0.95, 0.0]])
    assert greedy_discretize(x) == [(0, 2), (1, 1)]


def _zero_noise_self_pairs(n):
    cfg = SyntheticConfig(n_outliers_source=0, n_outliers_target=0, coord_noise_sigma=0.0,
                          feature_noise_sigma=0.0, n_classes=n, pairs_per_class=1)
    return generate_dataset(cfg).all_pairs()


def test_spectral_match_is_exact_on_zero_noise_pairs():
    for pair in _zero_noise_self_pairs(10):
        assert spectral_match(pair).f1 == 1.0


def test_spectral_match_without_signal_is_near_random():
    rng = np.random.default_rng(0)
    f1 = []
    for _ in range(300):
        g1 = Graph(rng.standard_normal((8, 4)), np.zeros((8, 8)))
        g2 = Graph(rng.standard_normal((8, 4)), np.zeros((8, 8)))
        f1.append(spectral_match(GraphPair(g1, g2, [(i, i) for i in range(8)])).f1)
    assert abs(np.mean(f1) - 1 / 8) < 0.05


def test_random_assignment_floor():
    pairs = generate_dataset(SyntheticConfig(n_classes=10, pairs_per_class=10)).all_pairs()
    rep = evaluate(random_assignment(0), pairs, Setting.INTERSECTION, method="random")
    assert abs(rep.mean - 0.1) < 0.03


def test_evaluate_report_and_determinism(tmp_path):
    pairs = generate_dataset(SyntheticConfig(n_classes=2, pairs_per_class=2)).all_pairs()
    model = init_model(0, 16, ModelConfig(hidden_dim=8, proj_dim=4))
    a = evaluate(model, pairs, "intsec")
    b = evaluate(model, pairs, "intsec")
    c = evaluate(model, pairs, "intsec", threads=2)
    assert a.f1 == b.f1 == c.f1
    assert len(a.f1) == 4 and a.class_ids == [0, 0, 1, 1]
    assert set(a.per_class()) == {0, 1}
    a.write_csv(tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "pair_id,class_id,setting,method,f1" and len(lines) == 5
    one = evaluate(model, pairs[:1], "intsec")
    assert len(one.f1) == 1


def test_report_statistics():
    r = EvalReport("intsec", "x", [0.5, 1.0], ["a", "b"], [0, 0])
    assert r.mean == 0.75 and r.std == 0.25
    assert EvalReport("intsec", "x").mean == 0.0
