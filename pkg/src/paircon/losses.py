"""Contrastive (SimCLR, SupCon) and cross-entropy losses.

Contrastive losses are batch sums over anchors, matching their textbook
definitions; pass ``reduction="mean"`` for the per-anchor mean. Similarities
are cosine, so inputs need not be normalized.
"""
from __future__ import annotations

import math
from typing import Sequence

import torch

DEFAULT_TEMPERATURE = 0.1


def _as_tensor(z) -> torch.Tensor:
    if isinstance(z, torch.Tensor):
        return z
    return torch.as_tensor(z, dtype=torch.float64)


def _check_temperature(tau: float) -> None:
    if not (tau > 0.0 and math.isfinite(tau)):
        raise ValueError(f"temperature must be positive, got {tau}")


def cosine_similarity_matrix(z: torch.Tensor) -> torch.Tensor:
    norms = z.norm(dim=1, keepdim=True).clamp_min(torch.finfo(z.dtype).tiny)
    u = z / norms
    return u @ u.T


def _log_softmax_excluding_self(z: torch.Tensor, tau: float) -> torch.Tensor:
    """``log(exp(s_ij / tau) / sum_{q != i} exp(s_iq / tau))``; diagonal is -inf."""
    logits = cosine_similarity_matrix(z) / tau
    b = logits.shape[0]
    eye = torch.eye(b, dtype=torch.bool, device=z.device)
    logits = logits.masked_fill(eye, float("-inf"))
    return logits - torch.logsumexp(logits, dim=1, keepdim=True)


def _reduce(per_anchor: torch.Tensor, reduction: str, count: int) -> torch.Tensor:
    if reduction == "sum":
        return per_anchor.sum()
    if reduction == "mean":
        return per_anchor.sum() / count
    raise ValueError(f"unknown reduction {reduction!r}")


def simclr_loss(z, pairing: Sequence[int], tau: float = DEFAULT_TEMPERATURE, reduction: str = "sum") -> torch.Tensor:
    """NT-Xent over a batch of ``b`` latents with view pairing ``o``."""
    z = _as_tensor(z)
    _check_temperature(tau)
    b = z.shape[0]
    if b < 2:
        raise ValueError("batch needs at least two entries")
    if len(pairing) != b:
        raise ValueError("pairing must cover every index")
    for i, j in enumerate(pairing):
        if j is None or not 0 <= j < b or j == i or pairing[j] != i:
            raise ValueError(f"index {i} is not properly paired")
    log_prob = _log_softmax_excluding_self(z, tau)
    idx = torch.arange(b, device=z.device)
    other = torch.as_tensor(list(pairing), device=z.device)
    return _reduce(-log_prob[idx, other], reduction, b)


def supcon_loss(z, labels, tau: float = DEFAULT_TEMPERATURE, reduction: str = "sum") -> torch.Tensor:
    """Supervised contrastive loss; anchors without positives contribute 0.

    With ``reduction="mean"`` the sum is divided by the number of anchors that
    have at least one positive.
    """
    z = _as_tensor(z)
    _check_temperature(tau)
    b = z.shape[0]
    if b < 2:
        raise ValueError("batch needs at least two entries")
    labels = torch.as_tensor(labels, device=z.device).reshape(-1)
    if labels.shape[0] != b:
        raise ValueError("labels length differs from batch size")
    eye = torch.eye(b, dtype=torch.bool, device=z.device)
    positive = (labels[:, None] == labels[None, :]) & ~eye
    n_pos = positive.sum(dim=1)
    has_pos = n_pos > 0
    if not bool(has_pos.any()):
        raise ValueError("no positives in batch")
    log_prob = _log_softmax_excluding_self(z, tau)
    # where() keeps -inf on the diagonal out of the sum and its gradient
    pos_log_prob = torch.where(positive, log_prob, torch.zeros_like(log_prob)).sum(dim=1)
    per_anchor = torch.where(has_pos, -pos_log_prob / n_pos.clamp_min(1), torch.zeros_like(pos_log_prob))
    return _reduce(per_anchor, reduction, int(has_pos.sum()))


def cross_entropy(logits, labels, reduction: str = "mean", num_classes: int | None = None) -> torch.Tensor:
    """``-log softmax(logits)[label]`` for a single vector or a batch of rows."""
    logits = _as_tensor(logits)
    single = logits.dim() == 1
    if single:
        logits = logits[None, :]
    labels = torch.as_tensor(labels, device=logits.device).reshape(-1).long()
    k = logits.shape[1] if num_classes is None else num_classes
    if labels.numel() != logits.shape[0]:
        raise ValueError("labels length differs from number of logit rows")
    if bool(((labels < 0) | (labels >= k)).any()):
        raise ValueError(f"label out of range 0..{k - 1}")
    nll = torch.logsumexp(logits, dim=1) - logits.gather(1, labels[:, None]).squeeze(1)
    if single or reduction == "none":
        return nll[0] if single else nll
    return _reduce(nll, reduction, nll.shape[0])
