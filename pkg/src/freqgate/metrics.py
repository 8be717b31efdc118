"""Overlap metrics on binary masks (plain numpy, no tape)."""

import numpy as np


def binarize(probs, threshold=0.5):
    return (np.asarray(probs) > threshold).astype(np.uint8)


def dice_coeff(pred, target):
    """2|P & G| / (|P| + |G|); 1.0 when both masks are empty."""
    p = np.asarray(pred).astype(bool)
    g = np.asarray(target).astype(bool)
    denom = p.sum() + g.sum()
    if denom == 0:
        return 1.0
    return float(2.0 * np.logical_and(p, g).sum() / denom)


def iou(pred, target):
    """|P & G| / |P | G|; 1.0 when both masks are empty."""
    p = np.asarray(pred).astype(bool)
    g = np.asarray(target).astype(bool)
    union = np.logical_or(p, g).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(p, g).sum() / union)
