"""Volume I/O: the canonical on-disk container and NIfTI-1 import.

Canonical container per volume id:
    <id>.json     sidecar: dims, dtypes, spacing, byte order
    <id>.img.raw  image payload, little-endian f32, C order (D, H, W)
    <id>.msk.raw  mask payload, u8, values in {0, 1}
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import DataError


@dataclass
class VolumeRecord:
    image: np.ndarray  # (D, H, W) f32
    mask: np.ndarray  # (D, H, W) u8
    spacing: tuple = (1.0, 1.0, 1.0)
    id: str = "volume"

    def validate(self):
        if self.image.shape != self.mask.shape:
            raise DataError(
                f"{self.id}: image shape {self.image.shape} != mask shape {self.mask.shape}"
            )
        if self.image.ndim != 3:
            raise DataError(f"{self.id}: volumes must be 3D, got shape {self.image.shape}")
        bad = np.setdiff1d(np.unique(self.mask), [0, 1])
        if bad.size:
            raise DataError(f"{self.id}: mask values outside {{0,1}}: {bad.tolist()}")
        return self


def save_volume(directory, record: VolumeRecord):
    record.validate()
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    sidecar = {
        "id": record.id,
        "dims": list(record.image.shape),
        "dtype": "f32",
        "mask_dtype": "u8",
        "spacing": [float(s) for s in record.spacing],
        "byte_order": "little",
    }
    (directory / f"{record.id}.json").write_text(
        json.dumps(sidecar, indent=2, sort_keys=True) + "\n"
    )
    record.image.astype("<f4").tofile(directory / f"{record.id}.img.raw")
    record.mask.astype(np.uint8).tofile(directory / f"{record.id}.msk.raw")
    return directory / f"{record.id}.json"


def load_volume(path) -> VolumeRecord:
    """Load from the sidecar path (or its basename without .json)."""
    path = Path(path)
    if path.suffix != ".json":
        path = path.with_suffix(".json")
    if not path.exists():
        raise DataError(f"no sidecar at {path}")
    try:
        sidecar = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise DataError(f"{path}: invalid sidecar JSON: {e}") from e
    for key in ("id", "dims", "dtype"):
        if key not in sidecar:
            raise DataError(f"{path}: sidecar missing {key!r}")
    if sidecar["dtype"] != "f32":
        raise DataError(f"{path}: unsupported image dtype {sidecar['dtype']!r}")
    if sidecar.get("byte_order", "little") != "little":
        raise DataError(f"{path}: unsupported byte order {sidecar['byte_order']!r}")
    dims = tuple(int(d) for d in sidecar["dims"])
    n = int(np.prod(dims))

    img_path = path.parent / f"{path.stem}.img.raw"
    msk_path = path.parent / f"{path.stem}.msk.raw"
    for p in (img_path, msk_path):
        if not p.exists():
            raise DataError(f"missing payload file {p}")
    img_bytes = img_path.read_bytes()
    if len(img_bytes) != 4 * n:
        raise DataError(
            f"{img_path}: payload size mismatch: expected {4 * n} bytes, got {len(img_bytes)}"
        )
    msk_bytes = msk_path.read_bytes()
    if len(msk_bytes) != n:
        raise DataError(
            f"{msk_path}: payload size mismatch: expected {n} bytes, got {len(msk_bytes)}"
        )
    image = np.frombuffer(img_bytes, dtype="<f4").reshape(dims).copy()
    mask = np.frombuffer(msk_bytes, dtype=np.uint8).reshape(dims).copy()
    rec = VolumeRecord(
        image=image,
        mask=mask,
        spacing=tuple(sidecar.get("spacing", (1.0, 1.0, 1.0))),
        id=sidecar["id"],
    )
    return rec.validate()


# NIfTI-1 datatype codes -> numpy dtypes (uncompressed single-file .nii only)
_NIFTI_DTYPES = {
    2: np.uint8,
    4: np.int16,
    8: np.int32,
    16: np.float32,
    64: np.float64,
    256: np.int8,
    512: np.uint16,
}


def read_nifti(path) -> tuple[np.ndarray, tuple]:
    """Read an uncompressed NIfTI-1 file; returns (volume (D,H,W) f32, spacing)."""
    path = Path(path)
    raw = path.read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raise DataError(f"{path}: gzip-compressed NIfTI is not supported")
    if len(raw) < 348:
        raise DataError(f"{path}: file shorter than the 348-byte NIfTI-1 header")
    (sizeof_hdr,) = struct.unpack_from("<i", raw, 0)
    endian = "<"
    if sizeof_hdr != 348:
        (sizeof_hdr,) = struct.unpack_from(">i", raw, 0)
        if sizeof_hdr != 348:
            raise DataError(f"{path}: not a NIfTI-1 file (bad sizeof_hdr)")
        endian = ">"
    magic = raw[344:348]
    if magic not in (b"n+1\x00", b"ni1\x00"):
        raise DataError(f"{path}: bad NIfTI-1 magic {magic!r}")
    dim = struct.unpack_from(f"{endian}8h", raw, 40)
    ndim = dim[0]
    if not 2 <= ndim <= 3:
        raise DataError(f"{path}: expected 2D or 3D volume, header says {ndim}D")
    nx, ny = dim[1], dim[2]
    nz = dim[3] if ndim == 3 else 1
    (datatype,) = struct.unpack_from(f"{endian}h", raw, 70)
    if datatype not in _NIFTI_DTYPES:
        raise DataError(f"{path}: unsupported NIfTI datatype code {datatype}")
    pixdim = struct.unpack_from(f"{endian}8f", raw, 76)
    (vox_offset,) = struct.unpack_from(f"{endian}f", raw, 108)
    scl_slope, scl_inter = struct.unpack_from(f"{endian}2f", raw, 112)
    offset = int(vox_offset) if vox_offset else 352
    dtype = np.dtype(_NIFTI_DTYPES[datatype]).newbyteorder(endian)
    count = nx * ny * nz
    data = np.frombuffer(raw, dtype=dtype, count=count, offset=offset)
    if data.size != count:
        raise DataError(
            f"{path}: payload size mismatch: expected {count} voxels, got {data.size}"
        )
    # NIfTI stores x fastest; reshape to (z, y, x) = (D, H, W)
    vol = data.reshape((nz, ny, nx)).astype(np.float32)
    if scl_slope not in (0.0, 1.0) or scl_inter != 0.0:
        slope = scl_slope if scl_slope != 0.0 else 1.0
        vol = vol * slope + scl_inter
    spacing = (float(pixdim[3]) or 1.0, float(pixdim[2]) or 1.0, float(pixdim[1]) or 1.0)
    return vol, spacing


def import_nifti(image_path, mask_path, vol_id, binarize=False) -> VolumeRecord:
    """Convert a NIfTI-1 image/mask pair into a canonical VolumeRecord."""
    image, spacing = read_nifti(image_path)
    mask_f, _ = read_nifti(mask_path)
    if binarize:
        mask = (mask_f != 0).astype(np.uint8)
    else:
        mask = mask_f.astype(np.uint8)
        if not np.array_equal(mask.astype(np.float32), mask_f):
            raise DataError(
                f"{mask_path}: mask has non-integer or non-binary labels; "
                "pass binarize=True to threshold at zero"
            )
    rec = VolumeRecord(image=image, mask=mask, spacing=spacing, id=vol_id)
    return rec.validate()


@dataclass
class DatasetManifest:
    train: list = field(default_factory=list)
    val: list = field(default_factory=list)
    test: list = field(default_factory=list)
    split_seed: int = 0

    def to_json(self, path):
        Path(path).write_text(
            json.dumps(
                {
                    "train": self.train,
                    "val": self.val,
                    "test": self.test,
                    "split_seed": self.split_seed,
                },
                indent=2,
                sort_keys=True,
            )
            + "\n"
        )

    @classmethod
    def from_json(cls, path):
        try:
            d = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise DataError(f"cannot read manifest {path}: {e}") from e
        return cls(
            train=list(d.get("train", [])),
            val=list(d.get("val", [])),
            test=list(d.get("test", [])),
            split_seed=int(d.get("split_seed", 0)),
        )


def split_ids(ids, n_val, n_test, seed):
    """Deterministic shuffle-split of volume ids."""
    rng = np.random.default_rng(seed)
    order = list(np.array(sorted(ids))[rng.permutation(len(ids))])
    n_hold = n_val + n_test
    if n_hold >= len(ids):
        raise DataError(f"cannot hold out {n_hold} of {len(ids)} volumes")
    return DatasetManifest(
        train=[str(s) for s in order[n_hold:]],
        val=[str(s) for s in order[:n_val]],
        test=[str(s) for s in order[n_val:n_hold]],
        split_seed=seed,
    )
