"""Contrastive node loss and self-supervised matching losses."""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, NoPositives, ShapeMismatch


class MatchingLossKind(str, enum.Enum):
    PERMUTATION = "permutation"
    HAMMING = "hamming"


@dataclass
class LossConfig:
    temperature: float = 0.5
    matching_loss_kind: MatchingLossKind = MatchingLossKind.PERMUTATION
    balanced: bool = True

    def __post_init__(self):
        self.matching_loss_kind = MatchingLossKind(self.matching_loss_kind)

    def validate(self) -> None:
        if not self.temperature > 0:
            raise ConfigError(f"loss.temperature must be > 0, got {self.temperature}")


class EmptyCorrespondenceWarning(UserWarning):
    pass


def cosine_matrix(za: Tensor, zb: Tensor) -> Tensor:
    return ad.row_l2_normalize(za) @ ad.row_l2_normalize(zb).T


def _cos_np(za: np.ndarray, zb: np.ndarray) -> np.ndarray:
    return cosine_matrix(Tensor(za), Tensor(zb)).value


def intra_term(za, i: int, temperature: float) -> float:
    """Sum over other nodes j of the same view of exp(cos(z_i, z_j) / T)."""
    c = _cos_np(np.atleast_2d(za), np.atleast_2d(za))[i]
    return float(np.exp(np.delete(c, i) / temperature).sum())


def inter_term(za, zb, i: int, temperature: float) -> float:
    """Sum over every node j of the other view, positive included."""
    c = _cos_np(np.atleast_2d(za), np.atleast_2d(zb))[i]
    return float(np.exp(c / temperature).sum())


def _anchor_losses(s_same: Tensor, s_cross: Tensor, pos_mask: np.ndarray, t: float) -> Tensor:
    n = s_same.shape[0]
    off_diag = Tensor(1.0 - np.eye(n))
    intra = ad.sum_axis(ad.mul(ad.exp(ad.scale(s_same, 1.0 / t)), off_diag), 1)
    inter = ad.sum_axis(ad.exp(ad.scale(s_cross, 1.0 / t)), 1)
    pos = ad.sum_axis(ad.mul(s_cross, Tensor(pos_mask)), 1)
    per_anchor = ad.log(intra + inter) - ad.scale(pos, 1.0 / t)
    has_pos = Tensor(pos_mask.sum(axis=1, keepdims=True))
    return ad.total(ad.mul(per_anchor, has_pos))


def node_contrastive_loss(za: Tensor, zb: Tensor, correspondence: np.ndarray,
                          temperature: float = 0.5) -> Tensor:
    """Symmetric intra+inter view NT-Xent loss over anchors that have a positive.

    ``correspondence`` is the binary N_A x N_B self-labeled matrix. The sum
    is divided by N_A + N_B even when some anchors lack a positive.
    """
    g = np.asarray(correspondence, dtype=np.float64)
    if g.shape != (za.shape[0], zb.shape[0]):
        raise ShapeMismatch(f"correspondence {g.shape} vs views {za.shape[0]}x{zb.shape[0]}")
    if not g.any():
        raise NoPositives("no corresponding nodes between the two views")
    na = ad.row_l2_normalize(za)
    nb = ad.row_l2_normalize(zb)
    s_ab = na @ nb.T
    s_ba = ad.transpose(s_ab)
    loss_a = _anchor_losses(na @ na.T, s_ab, g, temperature)
    loss_b = _anchor_losses(nb @ nb.T, s_ba, g.T, temperature)
    return ad.scale(loss_a + loss_b, 1.0 / (g.shape[0] + g.shape[1]))


def matching_loss(g_hat: Tensor, g_self: np.ndarray,
                  kind: MatchingLossKind = MatchingLossKind.PERMUTATION,
                  balanced: bool = True) -> Tensor:
    """Loss between the soft prediction and the self-labeled 0/1 matrix.

    Permutation loss is a binary cross-entropy restricted to rows that own a
    ground-truth match; ``balanced`` averages positives and negatives
    separately. Hamming loss is the mean absolute difference.
    """
    kind = MatchingLossKind(kind)
    gt = np.asarray(g_self, dtype=np.float64)
    if gt.shape != g_hat.shape:
        raise ShapeMismatch(f"matching_loss: {g_hat.shape} vs {gt.shape}")
    if kind is MatchingLossKind.HAMMING:
        return ad.scale(ad.total(ad.absolute(g_hat - Tensor(gt))), 1.0 / gt.size)
    rows = gt.sum(axis=1, keepdims=True) > 0
    n_pos = int(gt.sum())
    if n_pos == 0:
        warnings.warn("matching loss on views with no shared nodes", EmptyCorrespondenceWarning,
                      stacklevel=2)
        return Tensor(0.0)
    neg = np.broadcast_to(rows, gt.shape) * (1.0 - gt)
    log_p = ad.log(g_hat)
    log_q = ad.log(1.0 - g_hat)
    pos_term = ad.scale(ad.total(ad.mul(log_p, Tensor(gt))), -1.0 / n_pos)
    neg_sum = ad.total(ad.mul(log_q, Tensor(neg)))
    if not balanced:
        return pos_term + ad.scale(neg_sum, -1.0 / n_pos)
    n_neg = int(neg.sum())
    if n_neg == 0:
        return pos_term
    return pos_term + ad.scale(neg_sum, -1.0 / n_neg)


def total_loss(l_node: Tensor, l_match: Tensor) -> Tensor:
    return l_node + l_match
