"""Multi-view NT-Xent and label-smoothed cross-entropy."""
from __future__ import annotations

from itertools import combinations

import torch
import torch.nn.functional as F


def _unit_rows(z: torch.Tensor) -> torch.Tensor:
    norms = z.norm(dim=-1, keepdim=True)
    if (norms == 0).any():
        raise ValueError("zero-norm projection")
    return z / norms


def ntxent_pair(views, i: int, j: int, tau: float = 0.1) -> torch.Tensor:
    """Per-sample loss of view ``i`` against view ``j``.

    The softmax for sample ``k`` runs over the ``N`` entries of view ``j``
    (positive included); same-view entries never enter the denominator.

    Args:
        views: tensor ``(M, N, P)`` or a sequence of ``(N, P)`` tensors.
    """
    if i == j:
        raise ValueError("i and j must differ")
    if tau <= 0:
        raise ValueError("tau must be positive")
    zi = _unit_rows(views[i])
    zj = _unit_rows(views[j])
    sim = zi @ zj.T / tau
    return torch.logsumexp(sim, dim=1) - sim.diagonal()


def contrastive_loss(views, tau: float = 0.1) -> torch.Tensor:
    """Average symmetric NT-Xent over all unordered view pairs."""
    m = len(views)
    if m < 2:
        raise ValueError("need at least two views")
    total = 0.0
    for i, j in combinations(range(m), 2):
        total = total + (ntxent_pair(views, i, j, tau) + ntxent_pair(views, j, i, tau)).mean()
    return total * (2.0 / (m * (m - 1)))


def smoothed_targets(targets: torch.Tensor, n_classes: int, eps: float) -> torch.Tensor:
    """``1 - eps`` on the true class, ``eps / (K - 1)`` on each of the others."""
    if not 0 <= eps < 1:
        raise ValueError("eps must lie in [0, 1)")
    if n_classes < 2:
        raise ValueError("need at least two classes")
    dist = torch.full((targets.shape[0], n_classes), eps / (n_classes - 1), dtype=torch.float64)
    dist.scatter_(1, targets.long().view(-1, 1), 1.0 - eps)
    return dist


def smoothed_ce(logits: torch.Tensor, targets: torch.Tensor, eps: float = 0.1) -> torch.Tensor:
    dist = smoothed_targets(targets, logits.shape[-1], eps).to(logits.dtype)
    return -(dist * F.log_softmax(logits, dim=-1)).sum(-1).mean()
