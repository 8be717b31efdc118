"""Segmentation losses, all differentiable through the tape.

Probabilities are clamped to [1e-7, 1 - 1e-7] before any logarithm so the
loss and its gradients stay finite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import NumericalError, ShapeError
from .tensor import Tensor

PROB_CLAMP = 1e-7


@dataclass
class PredictionPair:
    """Post-sigmoid probabilities and a binary target of identical shape."""

    probs: Tensor
    target: Tensor

    @classmethod
    def from_probs(cls, probs, target):
        probs = probs if isinstance(probs, Tensor) else Tensor(probs)
        target = target if isinstance(target, Tensor) else Tensor(target, dtype=probs.dtype)
        if probs.shape != target.shape:
            raise ShapeError(f"probs {probs.shape} vs target {target.shape}")
        tv = target.data
        if not np.all((tv == 0) | (tv == 1)):
            raise ShapeError("target mask must contain only {0, 1}")
        return cls(probs, target)

    @classmethod
    def from_logits(cls, logits, target):
        logits = logits if isinstance(logits, Tensor) else Tensor(logits)
        return cls.from_probs(T.sigmoid(logits), target)


def bce_loss(pair: PredictionPair) -> Tensor:
    p = T.clamp(pair.probs, PROB_CLAMP, 1.0 - PROB_CLAMP)
    g = pair.target
    ll = g * T.log(p) + (1.0 - g) * T.log(1.0 - p)
    return T.neg(T.tmean(ll))


def dice_loss(pair: PredictionPair, eps=1e-6) -> Tensor:
    p = pair.probs
    g = pair.target
    inter = T.tsum(p * g)
    denom = T.tsum(p * p) + T.tsum(g * g)
    return 1.0 - (2.0 * inter + eps) / (denom + eps)


def bce_dice_loss(pair: PredictionPair, dice_weight=1.0) -> Tensor:
    return bce_loss(pair) + dice_weight * dice_loss(pair)


def ce_multiclass(probs: Tensor, target_onehot: Tensor) -> Tensor:
    """Multi-class cross entropy over batch x classes x H x W maps.

    probs must sum to 1 over the class axis per pixel (within 1e-5).
    """
    probs = probs if isinstance(probs, Tensor) else Tensor(probs)
    target_onehot = (
        target_onehot
        if isinstance(target_onehot, Tensor)
        else Tensor(target_onehot, dtype=probs.dtype)
    )
    if probs.shape != target_onehot.shape:
        raise ShapeError(f"probs {probs.shape} vs target {target_onehot.shape}")
    if probs.ndim != 4:
        raise ShapeError("ce_multiclass expects batch x classes x H x W")
    sums = probs.data.sum(axis=1)
    if np.abs(sums - 1.0).max() > 1e-5:
        raise NumericalError(
            f"class probabilities not normalized (max deviation {np.abs(sums - 1.0).max():.2e})",
            op="ce_multiclass",
        )
    p = T.clamp(probs, PROB_CLAMP, 1.0 - PROB_CLAMP)
    n_pixels = probs.data.size // probs.shape[1]
    return T.neg(T.tsum(target_onehot * T.log(p)) / float(n_pixels))


LOSSES = {
    "bce": bce_loss,
    "dice": dice_loss,
    "bce_dice": bce_dice_loss,
}
