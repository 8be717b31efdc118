"""Diagnostic emitters: spectral histograms and gradient saliency maps."""

from __future__ import annotations

import numpy as np

from .errors import ShapeError
from .models import Model
from .tensor import Tape, Tensor, record_op

HISTOGRAM_BINS = 64
HISTOGRAM_RANGE = (-4.0, 4.0)


def spectrum_histogram(data):
    """Z-normalized histogram of rfft2 magnitudes over [-4, 4], 64 bins.

    Accepts a 2D image or a batch x channel x H x W array; returns
    (edges, counts, degenerate). Constant input is flagged with empty counts.
    """
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None, None]
    if arr.ndim != 4:
        raise ShapeError(f"expected 2D or 4D input, got shape {arr.shape}")
    edges = np.linspace(*HISTOGRAM_RANGE, HISTOGRAM_BINS + 1)
    if arr.std() < 1e-12:  # constant input is degenerate by definition
        return edges, np.zeros(HISTOGRAM_BINS, dtype=np.int64), True
    mags = np.abs(np.fft.rfft2(arr, axes=(-2, -1), norm="ortho")).ravel()
    std = mags.std()
    if std < 1e-12:
        return edges, np.zeros(HISTOGRAM_BINS, dtype=np.int64), True
    z = (mags - mags.mean()) / std
    counts, _ = np.histogram(z, bins=edges)
    return edges, counts.astype(np.int64), False


def histogram_csv(edges, counts, degenerate):
    lines = ["bin_lo,bin_hi,count"]
    if not degenerate:
        for lo, hi, c in zip(edges[:-1], edges[1:], counts):
            lines.append(f"{lo:.6g},{hi:.6g},{c}")
    else:
        lines.append("# degenerate constant input; histogram empty")
    return "\n".join(lines) + "\n"


def saliency(model: Model, image) -> np.ndarray:
    """|d(sum of predicted-foreground logits)/d(input)|, normalized to [0, 1].

    Foreground is the thresholded prediction (logit > 0); if the model
    predicts no foreground, all logits are summed instead.
    """
    img = np.asarray(image, dtype=model.dtype)
    if img.ndim != 2:
        raise ShapeError(f"saliency expects a 2D slice, got shape {img.shape}")
    x = Tensor(img[None, None], requires_grad=True, dtype=model.dtype)
    with Tape() as tape:
        logits = model.forward(x, training=False)
        fg = (logits.data > 0.0).astype(model.dtype)
        if fg.sum() == 0:
            fg = np.ones_like(fg)

        def vjp(g):
            return (g * fg,)

        target = record_op(
            "saliency_target", np.asarray(np.sum(logits.data * fg)), (logits,), vjp
        )
    tape.backward(target)
    heat = np.abs(x.grad[0, 0])
    peak = heat.max()
    if peak > 0:
        heat = heat / peak
    return heat.astype(np.float64)


def write_pgm(path, image01):
    """8-bit binary PGM from a [0, 1] float image."""
    arr = np.clip(np.asarray(image01), 0.0, 1.0)
    pix = np.round(arr * 255).astype(np.uint8)
    h, w = pix.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pix.tobytes())


def heatmap_csv(heat):
    lines = []
    for row in np.asarray(heat):
        lines.append(",".join(f"{v:.6g}" for v in row))
    return "\n".join(lines) + "\n"
