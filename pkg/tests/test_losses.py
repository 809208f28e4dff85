import math
import warnings

import numpy as np
import pytest

from gcgm import autodiff as ad
from gcgm.autodiff import Tensor
from gcgm.errors import NoPositives
from gcgm.losses import (EmptyCorrespondenceWarning, MatchingLossKind, inter_term, intra_term,
                         matching_loss, node_contrastive_loss, total_loss)

from gradcheck import max_rel_error, numeric_grad


def reference_contrastive(za, zb, corr, t):
    """Anchor-by-anchor loss in plain Python."""
    def cos(u, v):
        return float(u @ v / (np.linalg.norm(u) * np.linalg.norm(v)))

    total = 0.0
    for x, y, g in ((za, zb, corr), (zb, za, corr.T)):
        for i in range(len(x)):
            pos = [j for j in range(len(y)) if g[i, j]]
            if not pos:
                continue
            intra = sum(math.exp(cos(x[i], x[k]) / t) for k in range(len(x)) if k != i)
            inter = sum(math.exp(cos(x[i], y[k]) / t) for k in range(len(y)))
            total += -math.log(math.exp(cos(x[i], y[pos[0]]) / t) / (intra + inter))
    return total / (len(za) + len(zb))


def test_intra_term_examples():
    assert intra_term(np.array([[1.0, 0.0]]), 0, 1.0) == 0.0
    assert intra_term(np.array([[1.0, 2.0], [1.0, 2.0]]), 0, 1.0) == pytest.approx(math.e)
    assert intra_term(np.eye(2), 0, 0.5) == pytest.approx(1.0)


def test_inter_term_examples():
    z = np.array([[0.6, 0.8]])
    assert inter_term(z, z, 0, 1.0) == pytest.approx(math.e)
    assert inter_term(np.eye(2), np.eye(2), 0, 1.0) == pytest.approx(3.71828, abs=1e-5)
    assert inter_term(z, -z, 0, 1.0) == pytest.approx(0.36788, abs=1e-5)


def test_lone_positive_has_zero_loss():
    z = Tensor([[0.3, 0.4]])
    assert node_contrastive_loss(z, z, np.ones((1, 1)), 0.5).item() == pytest.approx(0.0, abs=1e-15)


def test_identity_pair_example():
    z = Tensor(np.eye(2))
    loss = node_contrastive_loss(z, z, np.eye(2), 1.0).item()
    assert loss == pytest.approx(-math.log(math.e / (math.e + 2)), abs=1e-12)
    assert loss == pytest.approx(0.55145, abs=1e-5)


@pytest.mark.parametrize("seed", range(10))
def test_matches_reference_and_is_symmetric(seed):
    rng = np.random.default_rng(seed)
    na, nb = rng.integers(2, 7, size=2)
    za, zb = rng.standard_normal((na, 4)), rng.standard_normal((nb, 4))
    corr = np.zeros((na, nb))
    k = min(na, nb) - 1
    corr[rng.permutation(na)[:k], rng.permutation(nb)[:k]] = 1
    ab = node_contrastive_loss(Tensor(za), Tensor(zb), corr, 0.5).item()
    ba = node_contrastive_loss(Tensor(zb), Tensor(za), corr.T, 0.5).item()
    assert ab == pytest.approx(reference_contrastive(za, zb, corr, 0.5), rel=1e-12)
    assert abs(ab - ba) < 1e-12
    assert ab >= 0


def test_no_positive_raises():
    with pytest.raises(NoPositives):
        node_contrastive_loss(Tensor(np.eye(2)), Tensor(np.eye(2)), np.zeros((2, 2)))


def test_contrastive_gradient():
    rng = np.random.default_rng(0)
    za = Tensor(rng.standard_normal((4, 3)), requires_grad=True)
    zb = Tensor(rng.standard_normal((5, 3)), requires_grad=True)
    corr = np.zeros((4, 5))
    corr[[0, 1, 3], [2, 0, 4]] = 1
    ad.backward(node_contrastive_loss(za, zb, corr, 0.5))
    num = numeric_grad(lambda: node_contrastive_loss(Tensor(za.value), Tensor(zb.value), corr).item(),
                       [za.value, zb.value])
    assert max_rel_error([za.grad, zb.grad], num) < 1e-4


def test_perfect_prediction():
    g = np.eye(3)
    assert matching_loss(Tensor(g), g, MatchingLossKind.PERMUTATION).item() == pytest.approx(0.0, abs=1e-12)
    assert matching_loss(Tensor(g), g, MatchingLossKind.HAMMING).item() == 0.0


def test_hamming_uniform_prediction():
    for n in (2, 3, 5):
        got = matching_loss(Tensor(np.full((n, n), 1 / n)), np.eye(n), MatchingLossKind.HAMMING).item()
        assert got == pytest.approx(2 * (n - 1) / n**2)


def test_balanced_permutation_loss_by_hand():
    p = np.array([[0.7, 0.3], [0.2, 0.8]])
    g = np.eye(2)
    pos = -(math.log(0.7) + math.log(0.8)) / 2
    neg = -(math.log(0.7) + math.log(0.8)) / 2
    assert matching_loss(Tensor(p), g).item() == pytest.approx(pos + neg)
    assert matching_loss(Tensor(p), g, balanced=False).item() == pytest.approx(pos + neg)
    # rows without a positive are ignored
    p3 = np.vstack([p, [[0.9, 0.9]]])
    g3 = np.vstack([g, [[0, 0]]])
    assert matching_loss(Tensor(p3), g3).item() == pytest.approx(pos + neg)


def test_losses_nonnegative(rng):
    for _ in range(20):
        p = rng.uniform(0.01, 0.99, (4, 4))
        g = np.eye(4)[rng.permutation(4)]
        for kind in MatchingLossKind:
            assert matching_loss(Tensor(p), g, kind).item() >= 0


def test_empty_ground_truth_warns():
    with pytest.warns(EmptyCorrespondenceWarning):
        v = matching_loss(Tensor(np.full((2, 2), 0.5)), np.zeros((2, 2)))
    assert v.item() == 0.0


def test_matching_loss_gradient(rng):
    p = Tensor(rng.uniform(0.05, 0.95, (3, 4)), requires_grad=True)
    g = np.zeros((3, 4))
    g[0, 1] = g[2, 3] = 1
    for kind in MatchingLossKind:
        p.zero_grad()
        ad.backward(matching_loss(p, g, kind))
        num = numeric_grad(lambda: matching_loss(Tensor(p.value), g, kind).item(), [p.value])
        assert max_rel_error([p.grad], num) < 1e-4


def test_total_loss():
    assert total_loss(Tensor(0.0), Tensor(0.0)).item() == 0.0
    assert total_loss(Tensor(0.5), Tensor(0.25)).item() == 0.75
    x = Tensor([[1.0, 2.0]], requires_grad=True)
    ad.backward(total_loss(ad.total(x * x), ad.total(ad.scale(x, 3.0))))
    np.testing.assert_array_equal(x.grad, 2 * x.value + 3)
