"""Joint training objective.

Cross-entropy on the classifier logits, an N-pair metric loss over
feature-to-anchor cosine similarities, and a hinge penalty on the mean
pairwise anchor cosine, combined as l_ce + lambda * (l_npair + l_penalty).
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .errors import ShapeError
from .nncore import Tensor, cosine_matrix


@dataclass
class LossBreakdown:
    l_ce: Tensor
    l_npair: Tensor
    l_penalty: Tensor
    l_total: Tensor
    lam: float

    def as_floats(self) -> dict[str, float]:
        return {
            "l_ce": float(self.l_ce.detach()),
            "l_npair": float(self.l_npair.detach()),
            "l_p": float(self.l_penalty.detach()),
            "l_total": float(self.l_total.detach()),
        }


def _check_labels(labels: Tensor, n: int, m: int) -> Tensor:
    labels = torch.as_tensor(labels, dtype=torch.long)
    if labels.shape != (n,):
        raise ShapeError(f"labels shape {tuple(labels.shape)} != ({n},)")
    if labels.numel() and (labels.min() < 0 or labels.max() >= m):
        raise ValueError(f"labels must lie in [0, {m}), got range "
                         f"[{int(labels.min())}, {int(labels.max())}]")
    return labels


def npair_loss(x: Tensor, x_s: Tensor, labels: Tensor) -> Tensor:
    """Cross-entropy over the softmax of each sample's anchor cosines.

    Pulls every feature toward its class anchor and away from the other
    M-1 anchors; cosine makes the pull amplitude-invariant.
    """
    labels = _check_labels(labels, x.shape[0], x_s.shape[0])
    cos = cosine_matrix(x, x_s)
    logp = torch.log_softmax(cos, dim=1)
    return -logp[torch.arange(x.shape[0]), labels].mean()


def anchor_penalty(x_s: Tensor) -> Tensor:
    """Hinge on the mean pairwise anchor cosine (each unordered pair once)."""
    m = x_s.shape[0]
    if m < 2:
        raise ShapeError(f"anchor_penalty needs >= 2 anchors, got {m}")
    cos = cosine_matrix(x_s, x_s)
    mean_off_diag = (cos.sum() - cos.diagonal().sum()) / (m * (m - 1))
    return torch.clamp(mean_off_diag, min=0.0)


def ce_loss(logits: Tensor, labels: Tensor) -> Tensor:
    """Mean negative log softmax probability of the true class."""
    labels = _check_labels(labels, logits.shape[0], logits.shape[1])
    logp = torch.log_softmax(logits, dim=1)
    return -logp[torch.arange(logits.shape[0]), labels].mean()


def joint_loss(
    x: Tensor, x_s: Tensor, logits: Tensor, labels: Tensor, lam: float
) -> LossBreakdown:
    """Weighted sum of the three terms; gradients reach both networks.

    Scalars are accumulated in float64 so the reported breakdown satisfies
    l_total = l_ce + lam*(l_npair + l_penalty) to well below 1e-9.
    """
    l_ce = ce_loss(logits, labels).double()
    l_np = npair_loss(x, x_s, labels).double()
    l_p = anchor_penalty(x_s).double()
    l_total = l_ce + lam * (l_np + l_p)
    return LossBreakdown(l_ce=l_ce, l_npair=l_np, l_penalty=l_p, l_total=l_total, lam=lam)
