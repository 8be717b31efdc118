"""Checkpoint container: JSON manifest + named little-endian f32 arrays.

Layout:
    magic "FGCKPT01"
    u32 LE manifest length, manifest JSON (compact, sorted keys)
    per array, in manifest order:
        u16 LE name length, name utf-8
        u8 rank, rank x u32 LE extents
        raw f32 LE payload

Load followed by save reproduces the file byte for byte.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataError

MAGIC = b"FGCKPT01"


@dataclass
class Checkpoint:
    manifest: dict
    arrays: dict  # name -> f32 ndarray


def _encode_manifest(manifest):
    return json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")


def save_checkpoint(path, model_spec_dict, arrays, seed, step, epoch, metrics=None):
    """arrays: ordered mapping name -> ndarray (cast to f32)."""
    names = list(arrays.keys())
    manifest = {
        "format": "freqgate-checkpoint",
        "version": 1,
        "model_spec": model_spec_dict,
        "seed": int(seed),
        "step": int(step),
        "epoch": int(epoch),
        "metrics": metrics or {},
        "arrays": names,
    }
    blob = _encode_manifest(manifest)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for name in names:
            arr = np.ascontiguousarray(arrays[name], dtype="<f4")
            enc = name.encode("utf-8")
            fh.write(struct.pack("<H", len(enc)))
            fh.write(enc)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_checkpoint(path) -> Checkpoint:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as e:
        raise DataError(f"cannot read checkpoint {path}: {e}") from e
    if raw[: len(MAGIC)] != MAGIC:
        raise DataError(f"{path}: not a freqgate checkpoint (bad magic)")
    off = len(MAGIC)
    (mlen,) = struct.unpack_from("<I", raw, off)
    off += 4
    try:
        manifest = json.loads(raw[off : off + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise DataError(f"{path}: corrupt manifest: {e}") from e
    off += mlen
    arrays = {}
    for expected in manifest.get("arrays", []):
        if off + 2 > len(raw):
            raise DataError(f"{path}: truncated before array {expected!r}")
        (nlen,) = struct.unpack_from("<H", raw, off)
        off += 2
        name = raw[off : off + nlen].decode("utf-8")
        off += nlen
        if name != expected:
            raise DataError(f"{path}: array order mismatch: {name!r} != {expected!r}")
        (rank,) = struct.unpack_from("<B", raw, off)
        off += 1
        shape = struct.unpack_from(f"<{rank}I", raw, off)
        off += 4 * rank
        nbytes = int(np.prod(shape, dtype=np.int64)) * 4 if rank else 4
        if off + nbytes > len(raw):
            raise DataError(
                f"{path}: truncated payload for {name!r}: expected {nbytes} bytes, "
                f"have {len(raw) - off}"
            )
        arrays[name] = np.frombuffer(raw[off : off + nbytes], dtype="<f4").reshape(shape).copy()
        off += nbytes
    if off != len(raw):
        raise DataError(f"{path}: {len(raw) - off} trailing bytes after last array")
    return Checkpoint(manifest=manifest, arrays=arrays)


def model_arrays(model):
    """Registry tensors as plain arrays, ready for save_checkpoint."""
    return {name: p.data for name, p in model.registry.items()}


def restore_model(model, ckpt: Checkpoint, prefix=""):
    """Copy checkpoint arrays into a built model's registry in place."""
    for name, p in model.registry.items():
        key = prefix + name
        if key not in ckpt.arrays:
            raise DataError(f"checkpoint missing array {key!r}")
        arr = ckpt.arrays[key]
        if tuple(arr.shape) != tuple(p.shape):
            raise DataError(
                f"checkpoint array {key!r} has shape {arr.shape}, model expects {p.shape}"
            )
        p.data = arr.astype(model.dtype, copy=True)
