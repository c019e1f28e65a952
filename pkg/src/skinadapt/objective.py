"""Torch versions of the training objectives.

The Dice loss backward pass uses the closed-form gradient (the same formula
as :func:`skinadapt.metrics.dice_loss_grad`) instead of autograd tracing.
"""
from __future__ import annotations

import torch
import torch.nn.functional as F

from .metrics import LossConfig


class _PerSampleDiceLoss(torch.autograd.Function):
    @staticmethod
    def forward(ctx, p, g, s):
        # p, g: N x I
        den = s + p.sum(dim=1) + g.sum(dim=1)
        num = s + 2.0 * (p * g).sum(dim=1)
        ctx.save_for_backward(g, num, den)
        return 1.0 - num / den

    @staticmethod
    def backward(ctx, grad_out):
        g, num, den = ctx.saved_tensors
        grad = -(2.0 * g * den[:, None] - num[:, None]) / (den * den)[:, None]
        return grad * grad_out[:, None], None, None


def dice_loss_per_sample(p: torch.Tensor, g: torch.Tensor, cfg: LossConfig = LossConfig()) -> torch.Tensor:
    """One loss value per sample; inputs are flattened from dim 1 on."""
    n = p.shape[0]
    return _PerSampleDiceLoss.apply(p.reshape(n, -1), g.reshape(n, -1).to(p.dtype), cfg.smoothness)


def bce_per_sample(p: torch.Tensor, g: torch.Tensor) -> torch.Tensor:
    n = p.shape[0]
    return F.binary_cross_entropy(p.reshape(n, -1), g.reshape(n, -1).to(p.dtype), reduction="none").mean(dim=1)


def weighted_batch_loss(per_sample: torch.Tensor, is_pseudo: torch.Tensor, alpha: float) -> torch.Tensor:
    """L_true + alpha * L_pseudo, each term the mean over its own items (0 if absent)."""
    is_pseudo = is_pseudo.to(torch.bool)
    loss = per_sample.new_zeros(())
    if (~is_pseudo).any():
        loss = loss + per_sample[~is_pseudo].mean()
    if is_pseudo.any():
        loss = loss + alpha * per_sample[is_pseudo].mean()
    return loss
