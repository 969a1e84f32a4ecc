"""Training objectives for the generator and the discriminator.

All reductions default to per-element means so the loss weights do not depend
on resolution; ``reduction="sum"`` gives the literal summed form.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import torch

from .errors import ConfigError, NumericError, ShapeError

LOG_EPS = 1e-7


@dataclass
class LossWeights:
    adversarial: float = 0.25  # lambda_G
    appearance: float = 1.0  # lambda_a
    flow: float = 2.0  # lambda_f

    def __post_init__(self):
        for name in ("adversarial", "appearance", "flow"):
            if getattr(self, name) < 0:
                raise ConfigError(f"loss weight {name} must be >= 0")


def _reduce(x, reduction):
    if reduction == "mean":
        return x.mean()
    if reduction == "sum":
        return x.sum()
    raise ConfigError(f"reduction must be 'mean' or 'sum', got {reduction!r}")


def _same_shape(a, b):
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")


def _neg_log(p):
    return -torch.log(p.clamp(LOG_EPS, 1.0 - LOG_EPS))


def intensity_loss(target, pred, reduction="mean"):
    _same_shape(target, pred)
    return _reduce((target - pred) ** 2, reduction)


def image_gradients(x):
    """Forward differences along x (last axis) and y (second to last), unpadded."""
    return x[..., :, 1:] - x[..., :, :-1], x[..., 1:, :] - x[..., :-1, :]


def gradient_loss(target, pred, reduction="mean"):
    """Sum over both axes of the reduced | |g(target)| - |g(pred)| |.

    Tensors are ``... x H x W``; both spatial sizes must be at least 2.
    """
    _same_shape(target, pred)
    if target.ndim < 2 or min(target.shape[-2:]) < 2:
        raise ShapeError(f"gradient loss needs H, W >= 2, got {tuple(target.shape)}")
    total = 0.0
    for g_t, g_p in zip(image_gradients(target), image_gradients(pred)):
        total = total + _reduce((g_t.abs() - g_p.abs()).abs(), reduction)
    return total


def appearance_loss(target, pred, reduction="mean"):
    return intensity_loss(target, pred, reduction) + gradient_loss(target, pred, reduction)


def flow_loss(target, pred, reduction="mean"):
    _same_shape(target, pred)
    return _reduce((target - pred).abs(), reduction)


def discriminator_loss(d_real, d_fake, reduction="mean"):
    """0.5 * -log D(I, F) + 0.5 * -log(1 - D(I, F_hat)), each reduced."""
    loss = 0.5 * _reduce(_neg_log(d_real), reduction) + 0.5 * _reduce(_neg_log(1.0 - d_fake), reduction)
    if not torch.isfinite(loss):
        raise NumericError("discriminator loss is not finite after clamping")
    return loss


def adversarial_loss(d_fake, reduction="mean"):
    return _reduce(_neg_log(d_fake), reduction)


class GeneratorLoss(NamedTuple):
    total: torch.Tensor
    adv: torch.Tensor
    appe: torch.Tensor
    flow: torch.Tensor


def generator_loss(frame, frame_hat, flow, flow_hat, d_fake, weights: LossWeights | None = None, reduction="mean"):
    w = weights or LossWeights()
    adv = adversarial_loss(d_fake, reduction)
    appe = appearance_loss(frame, frame_hat, reduction)
    fl = flow_loss(flow, flow_hat, reduction)
    total = w.adversarial * adv + w.appearance * appe + w.flow * fl
    return GeneratorLoss(total, adv, appe, fl)
