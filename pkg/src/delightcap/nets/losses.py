"""Masked L1 plus a gradient-pyramid perceptual substitute."""
from __future__ import annotations

import torch
import torch.nn.functional as F

_BINOMIAL = torch.tensor([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0


def _mask4(mask, like):
    if mask.dim() == 3:
        mask = mask[:, None]
    return mask.to(like.dtype)


def masked_l1(pred, target, mask):
    """Mean absolute error over masked pixels and all channels."""
    m = _mask4(mask, pred)
    denom = m.sum() * pred.shape[1]
    if denom <= 0:
        raise ValueError("empty mask")
    return (m * (pred - target).abs()).sum() / denom


def _blur_down(x):
    k = _BINOMIAL.to(x.dtype)
    c = x.shape[1]
    x = F.pad(x, (2, 2, 2, 2), mode="replicate")
    x = F.conv2d(x, k.view(1, 1, 1, 5).repeat(c, 1, 1, 1), groups=c)
    x = F.conv2d(x, k.view(1, 1, 5, 1).repeat(c, 1, 1, 1), groups=c)
    return x[..., ::2, ::2]


def _grads(x):
    return x[..., :, 1:] - x[..., :, :-1], x[..., 1:, :] - x[..., :-1, :]


def gradient_pyramid_loss(pred, target, scales=3):
    """Mean L1 between image gradients at ``scales`` Gaussian-pyramid levels."""
    total = pred.new_zeros(())
    for s in range(scales):
        if s:
            pred, target = _blur_down(pred), _blur_down(target)
        gpx, gpy = _grads(pred)
        gtx, gty = _grads(target)
        total = total + (gpx - gtx).abs().mean() + (gpy - gty).abs().mean()
    return total / scales


class DelightLoss:
    """``l1_weight * masked L1 + perc_weight * perceptual(pred*M, target*M)``.

    ``perceptual`` may be any differentiable callable ``(pred, target) -> scalar``
    (for instance a learned metric); the default is :func:`gradient_pyramid_loss`.
    """

    def __init__(self, l1_weight=1.0, perc_weight=0.5, perceptual=None, scales=3):
        self.l1_weight = l1_weight
        self.perc_weight = perc_weight
        self.scales = scales
        self.perceptual = perceptual

    def __call__(self, pred, target, mask):
        m = _mask4(mask, pred)
        l1 = masked_l1(pred, target, m)
        if self.perc_weight:
            if self.perceptual is None:
                perc = gradient_pyramid_loss(pred * m, target * m, self.scales)
            else:
                perc = self.perceptual(pred * m, target * m)
        else:
            perc = pred.new_zeros(())
        total = self.l1_weight * l1 + self.perc_weight * perc
        return total, l1, perc
