from .container import (
    DatasetManifest,
    VolumeRecord,
    import_nifti,
    load_volume,
    read_nifti,
    save_volume,
    split_ids,
)
from .pipeline import (
    AugmentConfig,
    SliceSample,
    apply_log,
    augment,
    crop_roi,
    extract_label_slices,
    preprocess_volume,
    resize,
    union_mask_box,
    znormalize,
)
from .synth import synth_dataset, synth_volume

__all__ = [
    "AugmentConfig",
    "DatasetManifest",
    "SliceSample",
    "VolumeRecord",
    "apply_log",
    "augment",
    "crop_roi",
    "extract_label_slices",
    "import_nifti",
    "load_volume",
    "preprocess_volume",
    "read_nifti",
    "resize",
    "save_volume",
    "split_ids",
    "synth_dataset",
    "synth_volume",
    "union_mask_box",
    "znormalize",
]
