"""The three-term training objective: cross-entropy, real-centered hinge
loss, and the batch-level separation hinge, combined as a weighted sum.

Both geometric terms consume the per-sample distances to the learnable real
center.  Empty real/fake partitions degrade gracefully: the affected term
contributes exactly zero and is flagged on the breakdown.
"""

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, add, mul, relu, sub, square, take_rows, tmean, tsum
from .errors import DimensionError
from .nn import softmax_cross_entropy


@dataclass
class BatchPartition:
    """Index sets of real and fake samples within one batch."""

    real_idx: np.ndarray
    fake_idx: np.ndarray

    @classmethod
    def from_labels(cls, labels):
        lab = np.asarray(labels)
        return cls(real_idx=np.flatnonzero(lab == 0), fake_idx=np.flatnonzero(lab == 1))

    @property
    def size(self):
        return len(self.real_idx) + len(self.fake_idx)


@dataclass
class LossBreakdown:
    l_cls: Tensor
    l_center: Tensor
    l_sep: Tensor
    total: Tensor
    center_skipped: bool
    sep_skipped: bool


def _zero():
    return Tensor(0.0)


def center_loss(distances, partition, m):
    """Mean squared distance of reals plus mean hinge(m - d) of fakes.

    Returns (loss, skipped): skipped is True when either partition is empty,
    in which case the missing term contributed zero.
    """
    skipped = False
    terms = []
    if len(partition.real_idx):
        d_r = take_rows(distances, partition.real_idx)
        terms.append(tmean(square(d_r)))
    else:
        skipped = True
    if len(partition.fake_idx):
        d_f = take_rows(distances, partition.fake_idx)
        terms.append(tmean(relu(sub(Tensor(float(m)), d_f))))
    else:
        skipped = True
    loss = _zero()
    for t in terms:
        loss = add(loss, t)
    return loss, skipped


def separation_loss(distances, partition, m):
    """hinge(mean real distance - mean fake distance + m) over the batch.

    Returns (loss, skipped) with loss 0 and skipped True if either set is empty.
    """
    if not len(partition.real_idx) or not len(partition.fake_idx):
        return _zero(), True
    d_bar_real = tmean(take_rows(distances, partition.real_idx))
    d_bar_fake = tmean(take_rows(distances, partition.fake_idx))
    gap = add(sub(d_bar_real, d_bar_fake), Tensor(float(m)))
    return relu(gap), False


def total_loss(logits, labels, distances, partition, lambda_c, lambda_s, m):
    """All three terms on one tape: total = cls + lambda_c*center + lambda_s*sep."""
    n = logits.data.shape[0]
    lab = np.asarray(labels)
    if lab.shape[0] != n or distances.data.shape[0] != n or partition.size != n:
        raise DimensionError(
            f"batch axis mismatch: logits {n}, labels {lab.shape[0]}, "
            f"distances {distances.data.shape[0]}, partition {partition.size}")
    l_cls = softmax_cross_entropy(logits, lab)
    l_center, center_skipped = center_loss(distances, partition, m)
    l_sep, sep_skipped = separation_loss(distances, partition, m)
    total = add(l_cls, add(mul(Tensor(float(lambda_c)), l_center),
                           mul(Tensor(float(lambda_s)), l_sep)))
    return LossBreakdown(l_cls=l_cls, l_center=l_center, l_sep=l_sep, total=total,
                         center_skipped=center_skipped, sep_skipped=sep_skipped)
