"""Slice extraction, preprocessing, and augmentation.

Every geometric or intensity transform appends a parameter record to the
sample's transform_log; apply_log() replays a log onto the raw slice and
reproduces the sample bit-exactly. Augmentation randomness is reduced to
logged parameters (angles, scales, a field seed), so replay needs no RNG.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .. import kernels
from ..errors import DataError
from .container import VolumeRecord

log = logging.getLogger(__name__)


@dataclass
class SliceSample:
    image: np.ndarray  # (H, W) f32
    mask: np.ndarray  # (H, W) u8
    volume_id: str
    slice_index: int
    transform_log: list = field(default_factory=list)
    constant_input: bool = False

    def clone(self):
        return replace(
            self,
            image=self.image.copy(),
            mask=self.mask.copy(),
            transform_log=list(self.transform_log),
        )


@dataclass
class AugmentConfig:
    rotation_deg_range: float = 15.0
    scale_range: tuple = (0.9, 1.1)
    elastic_alpha: float = 10.0
    elastic_sigma: float = 4.0
    p_rotate: float = 0.5
    p_scale: float = 0.5
    p_elastic: float = 0.5
    seed: int = 0

    def validate(self):
        if self.scale_range[0] > self.scale_range[1]:
            raise DataError(f"scale_range not ordered: {self.scale_range}")
        for p in (self.p_rotate, self.p_scale, self.p_elastic):
            if not 0.0 <= p <= 1.0:
                raise DataError(f"transform probability {p} outside [0, 1]")
        return self


def extract_label_slices(vol: VolumeRecord, empty_ratio=0.2):
    """Axial slices whose mask has foreground, plus nearby empty slices.

    Appends floor(empty_ratio * n_labeled) empty slices, chosen closest to
    the labeled block (ties to the lower index); output ordered by index.
    """
    vol.validate()
    labeled = [i for i in range(vol.mask.shape[0]) if vol.mask[i].any()]
    if not labeled:
        log.warning("volume %s has an empty mask; no slices extracted", vol.id)
        return []
    n_empty = int(empty_ratio * len(labeled))
    empties = []
    if n_empty > 0:
        candidates = [i for i in range(vol.mask.shape[0]) if i not in set(labeled)]
        candidates.sort(key=lambda i: (min(abs(i - j) for j in labeled), i))
        empties = candidates[:n_empty]
    picked = sorted(labeled + empties)
    return [
        SliceSample(
            image=vol.image[i].astype(np.float32),
            mask=vol.mask[i].astype(np.uint8),
            volume_id=vol.id,
            slice_index=i,
        )
        for i in picked
    ]


def union_mask_box(mask_volume, margin=16):
    """Tight bounding box of the volume's union mask, dilated by margin.

    Returns (r0, r1, c0, c1) with exclusive stops, clamped to the frame.
    """
    union = np.asarray(mask_volume).any(axis=0)
    if not union.any():
        raise DataError("cannot derive an ROI box from an empty mask volume")
    rows = np.where(union.any(axis=1))[0]
    cols = np.where(union.any(axis=0))[0]
    h, w = union.shape
    r0, r1 = int(rows[0]) - margin, int(rows[-1]) + 1 + margin
    c0, c1 = int(cols[0]) - margin, int(cols[-1]) + 1 + margin
    clamped = r0 < 0 or c0 < 0 or r1 > h or c1 > w
    box = (max(r0, 0), min(r1, h), max(c0, 0), min(c1, w))
    if clamped:
        log.info("ROI margin %d exceeded the frame; box clamped to %s", margin, box)
    return box


def crop_roi(s: SliceSample, box) -> SliceSample:
    r0, r1, c0, c1 = (int(v) for v in box)
    h, w = s.image.shape
    if not (0 <= r0 < r1 <= h and 0 <= c0 < c1 <= w):
        raise DataError(f"crop box {box} out of bounds for {h}x{w} slice")
    out = s.clone()
    out.image = np.ascontiguousarray(out.image[r0:r1, c0:c1])
    out.mask = np.ascontiguousarray(out.mask[r0:r1, c0:c1])
    out.transform_log.append({"op": "crop", "box": [r0, r1, c0, c1]})
    return out


def _resize_grid(src_h, src_w, dst_h, dst_w):
    # half-pixel centers: dst pixel i samples src at (i + 0.5) * scale - 0.5
    ys = (np.arange(dst_h, dtype=np.float64) + 0.5) * (src_h / dst_h) - 0.5
    xs = (np.arange(dst_w, dtype=np.float64) + 0.5) * (src_w / dst_w) - 0.5
    return np.meshgrid(ys, xs, indexing="ij")


def resize(s: SliceSample, target: int) -> SliceSample:
    """Bilinear for the image, nearest for the mask (labels stay binary)."""
    if target < 1:
        raise DataError(f"resize target must be >= 1, got {target}")
    h, w = s.image.shape
    ys, xs = _resize_grid(h, w, target, target)
    out = s.clone()
    out.image = kernels.warp_bilinear(np.ascontiguousarray(s.image, dtype=np.float32), ys, xs)
    out.mask = kernels.warp_nearest(np.ascontiguousarray(s.mask), ys, xs)
    out.transform_log.append({"op": "resize", "target": int(target)})
    return out


def znormalize(s: SliceSample) -> SliceSample:
    out = s.clone()
    mu = float(s.image.mean())
    sigma = float(s.image.std())
    if sigma < 1e-8:
        out.image = np.zeros_like(s.image)
        out.constant_input = True
    else:
        out.image = ((s.image - mu) / sigma).astype(np.float32)
    out.transform_log.append(
        {"op": "znormalize", "mean": mu, "std": sigma, "constant": out.constant_input}
    )
    return out


def _gaussian_kernel1d(sigma):
    radius = max(1, int(4.0 * sigma + 0.5))
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (t / sigma) ** 2)
    return k / k.sum()


def _gaussian_smooth2d(a, sigma):
    k = _gaussian_kernel1d(sigma)
    pad = len(k) // 2
    ap = np.pad(a, pad, mode="reflect")
    ap = np.apply_along_axis(np.convolve, 0, ap, k, mode="same")
    ap = np.apply_along_axis(np.convolve, 1, ap, k, mode="same")
    return ap[pad:-pad, pad:-pad]


def _elastic_field(shape, alpha, sigma, seed):
    rng = np.random.default_rng(seed)
    dy = _gaussian_smooth2d(rng.uniform(-1.0, 1.0, shape), sigma) * alpha
    dx = _gaussian_smooth2d(rng.uniform(-1.0, 1.0, shape), sigma) * alpha
    return dy, dx


def _apply_warp(s: SliceSample, rotation_deg, scale, elastic):
    """One combined resampling: inverse affine about the center + elastic."""
    h, w = s.image.shape
    gy, gx = np.meshgrid(
        np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij"
    )
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    theta = np.deg2rad(rotation_deg)
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    # inverse map: rotate by -theta and divide by scale, about the center
    oy, ox = gy - cy, gx - cx
    ys = (cos_t * oy + sin_t * ox) / scale + cy
    xs = (-sin_t * oy + cos_t * ox) / scale + cx
    if elastic is not None:
        dy, dx = _elastic_field((h, w), elastic["alpha"], elastic["sigma"], elastic["seed"])
        ys = ys + dy
        xs = xs + dx
    out = s.clone()
    out.image = kernels.warp_bilinear(np.ascontiguousarray(s.image, dtype=np.float32), ys, xs)
    out.mask = kernels.warp_nearest(np.ascontiguousarray(s.mask), ys, xs)
    return out


def augment(s: SliceSample, cfg: AugmentConfig, rng) -> SliceSample:
    """Sample rotation/scale/elastic transforms and warp image+mask together."""
    cfg.validate()
    rotation = 0.0
    scale = 1.0
    elastic = None
    if rng.random() < cfg.p_rotate:
        rotation = float(rng.uniform(-cfg.rotation_deg_range, cfg.rotation_deg_range))
    if rng.random() < cfg.p_scale:
        scale = float(rng.uniform(cfg.scale_range[0], cfg.scale_range[1]))
    if rng.random() < cfg.p_elastic:
        elastic = {
            "alpha": float(cfg.elastic_alpha),
            "sigma": float(cfg.elastic_sigma),
            "seed": int(rng.integers(2**31 - 1)),
        }
    if rotation == 0.0 and scale == 1.0 and elastic is None:
        out = s.clone()
        out.transform_log.append({"op": "augment", "identity": True})
        return out
    out = _apply_warp(s, rotation, scale, elastic)
    out.transform_log.append(
        {"op": "augment", "rotation_deg": rotation, "scale": scale, "elastic": elastic}
    )
    return out


def apply_log(base: SliceSample, transform_log) -> SliceSample:
    """Replay a transform log on a raw slice; bit-exact reproduction."""
    s = base.clone()
    for entry in transform_log:
        op = entry["op"]
        if op == "crop":
            s = crop_roi(s, entry["box"])
        elif op == "resize":
            s = resize(s, entry["target"])
        elif op == "znormalize":
            s = znormalize(s)
        elif op == "augment":
            if entry.get("identity"):
                s = s.clone()
                s.transform_log.append({"op": "augment", "identity": True})
            else:
                out = _apply_warp(
                    s, entry["rotation_deg"], entry["scale"], entry["elastic"]
                )
                out.transform_log.append(dict(entry))
                s = out
        else:
            raise DataError(f"unknown transform log op {op!r}")
    return s


def preprocess_volume(vol: VolumeRecord, target_size=64, empty_ratio=0.2, margin=16):
    """Extract labeled slices, ROI-crop, resize, and z-normalize."""
    samples = extract_label_slices(vol, empty_ratio)
    if not samples:
        return []
    box = union_mask_box(vol.mask, margin=margin)
    return [znormalize(resize(crop_roi(s, box), target_size)) for s in samples]
