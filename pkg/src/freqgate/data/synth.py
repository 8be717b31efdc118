"""Synthetic ellipsoid dataset for desk-scale verification.

Each volume carries one smooth bright ellipsoid (the segmentation target)
over low-frequency background texture plus pixel noise; the mask is the
exact ellipsoid indicator. Everything derives from the seed.
"""

from __future__ import annotations

import numpy as np

from .container import VolumeRecord
from .pipeline import _gaussian_smooth2d


def synth_volume(vol_id, seed, depth_range=(10, 14), height=96, width=96,
                 frac_range=(0.02, 0.12), contrast=1.5, noise_std=0.15) -> VolumeRecord:
    rng = np.random.default_rng(seed)
    d = int(rng.integers(depth_range[0], depth_range[1] + 1))
    h, w = height, width

    # ellipsoid semiaxes from a target volume fraction, with bounded aspect
    frac = rng.uniform(*frac_range)
    abc = frac * d * h * w * 3.0 / (4.0 * np.pi)
    ratios = rng.uniform(0.7, 1.4, size=3)
    ratios /= ratios.prod() ** (1.0 / 3.0)
    base = abc ** (1.0 / 3.0)
    a = np.clip(base * ratios[0] * (d / ((d * h * w) ** (1 / 3))), 2.0, 0.42 * d)
    b = np.clip(base * ratios[1] * (h / ((d * h * w) ** (1 / 3))), 3.0, 0.42 * h)
    c = np.clip(base * ratios[2] * (w / ((d * h * w) ** (1 / 3))), 3.0, 0.42 * w)

    cz = rng.uniform(0.4, 0.6) * d
    cy = rng.uniform(0.35, 0.65) * h
    cx = rng.uniform(0.35, 0.65) * w

    zz, yy, xx = np.meshgrid(
        np.arange(d, dtype=np.float64),
        np.arange(h, dtype=np.float64),
        np.arange(w, dtype=np.float64),
        indexing="ij",
    )
    field = ((zz - cz) / a) ** 2 + ((yy - cy) / b) ** 2 + ((xx - cx) / c) ** 2
    mask = (field <= 1.0).astype(np.uint8)

    image = np.empty((d, h, w), dtype=np.float32)
    for k in range(d):
        texture = _gaussian_smooth2d(rng.standard_normal((h, w)), sigma=8.0)
        tstd = texture.std()
        if tstd > 0:
            texture = texture / tstd * 0.4
        image[k] = texture
    image += contrast * mask
    image += rng.standard_normal((d, h, w)) * noise_std

    return VolumeRecord(
        image=image.astype(np.float32), mask=mask, spacing=(1.0, 1.0, 1.0), id=vol_id
    ).validate()


def synth_dataset(n_volumes, seed) -> list[VolumeRecord]:
    """n_volumes reproducible ellipsoid volumes; per-volume seeds derive from seed."""
    root = np.random.SeedSequence(seed)
    children = root.spawn(n_volumes)
    return [
        synth_volume(f"synth{idx:04d}", child) for idx, child in enumerate(children)
    ]
