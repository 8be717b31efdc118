"""Run configuration: the JSON schema and its validation.

A config file is a single JSON object:

{
  "model": {                  // ModelSpec fields
    "kind": "unet" | "attention_unet" | "gfnet",
    "in_channels": 1, "num_classes": 1,
    "base_filters": 8, "depth": 3, "image_size": 64,
    "dropout_decoder": true, "dropout_p": 0.5,
    "seed": 0,
    "gate_score": "sigmoid_complex" | "softmax",
    "attention_internal": 0        // 0 = half the skip channels
  },
  "train": {
    "lr": 0.001, "weight_decay": 0.01, "momentum": 0.9,
    "optimizer": "sgd" | "adam",
    "epochs": 20, "batch_size": 4,
    "loss": "bce" | "dice" | "bce_dice",
    "seed": 0, "eval_every": 1,
    "early_stop_dice": null | 0.95,
    "threshold": 0.5
  },
  "data": {
    "dir": "path/to/volumes",      // canonical container volumes
    "manifest": "manifest.json",   // train/val/test volume ids
    "empty_slice_ratio": 0.2,
    "augment": null | {
      "rotation_deg_range": 15.0, "scale_range": [0.9, 1.1],
      "elastic_alpha": 10.0, "elastic_sigma": 4.0,
      "p_rotate": 0.5, "p_scale": 0.5, "p_elastic": 0.5
    }
  },
  "out_dir": "runs/exp1"
}
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .data.pipeline import AugmentConfig
from .errors import ConfigError
from .models import ModelSpec

LOSS_NAMES = ("bce", "dice", "bce_dice")
OPTIMIZERS = ("sgd", "adam")


@dataclass
class TrainConfig:
    model: ModelSpec = field(default_factory=ModelSpec)
    lr: float = 0.001
    weight_decay: float = 0.01
    momentum: float = 0.9
    optimizer: str = "sgd"
    epochs: int = 20
    batch_size: int = 4
    loss: str = "bce_dice"
    dice_weight: float = 1.0  # BCE-Dice mixing weight on the Dice term
    seed: int = 0
    eval_every: int = 1
    early_stop_dice: float | None = None
    threshold: float = 0.5
    data_dir: str = ""
    manifest: str = ""
    empty_slice_ratio: float = 0.2
    augment: AugmentConfig | None = None
    out_dir: str = "runs/default"

    def validate(self):
        self.model.validate()
        # lr == 0 is allowed so a no-op training step stays testable
        if self.lr < 0:
            raise ConfigError(f"lr must be >= 0, got {self.lr}")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be >= 0")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.loss not in LOSS_NAMES:
            raise ConfigError(f"loss must be one of {LOSS_NAMES}, got {self.loss!r}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer must be one of {OPTIMIZERS}")
        if self.eval_every < 1:
            raise ConfigError("eval_every must be >= 1")
        if not 0.0 < self.threshold < 1.0:
            raise ConfigError("threshold must be in (0, 1)")
        if self.augment is not None:
            self.augment.validate()
        return self


def _take(d, section, known):
    extra = set(d) - set(known)
    if extra:
        raise ConfigError(f"unknown keys in {section!r}: {sorted(extra)}")
    return d


def load_train_config(path) -> TrainConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    return parse_train_config(raw)


def parse_train_config(raw: dict) -> TrainConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    _take(raw, "<root>", {"model", "train", "data", "out_dir"})
    model = ModelSpec.from_dict(raw.get("model", {}))

    train = raw.get("train", {})
    _take(
        train,
        "train",
        {
            "lr",
            "weight_decay",
            "momentum",
            "optimizer",
            "epochs",
            "batch_size",
            "loss",
            "dice_weight",
            "seed",
            "eval_every",
            "early_stop_dice",
            "threshold",
        },
    )
    data = raw.get("data", {})
    _take(data, "data", {"dir", "manifest", "empty_slice_ratio", "augment"})
    aug = data.get("augment")
    augment = None
    if aug:
        _take(
            aug,
            "data.augment",
            {
                "rotation_deg_range",
                "scale_range",
                "elastic_alpha",
                "elastic_sigma",
                "p_rotate",
                "p_scale",
                "p_elastic",
                "seed",
            },
        )
        if "scale_range" in aug:
            aug = dict(aug, scale_range=tuple(aug["scale_range"]))
        augment = AugmentConfig(**aug)

    cfg = TrainConfig(
        model=model,
        lr=float(train.get("lr", 0.001)),
        weight_decay=float(train.get("weight_decay", 0.01)),
        momentum=float(train.get("momentum", 0.9)),
        optimizer=train.get("optimizer", "sgd"),
        epochs=int(train.get("epochs", 20)),
        batch_size=int(train.get("batch_size", 4)),
        loss=train.get("loss", "bce_dice"),
        dice_weight=float(train.get("dice_weight", 1.0)),
        seed=int(train.get("seed", 0)),
        eval_every=int(train.get("eval_every", 1)),
        early_stop_dice=(
            None
            if train.get("early_stop_dice") is None
            else float(train["early_stop_dice"])
        ),
        threshold=float(train.get("threshold", 0.5)),
        data_dir=data.get("dir", ""),
        manifest=data.get("manifest", ""),
        empty_slice_ratio=float(data.get("empty_slice_ratio", 0.2)),
        augment=augment,
        out_dir=raw.get("out_dir", "runs/default"),
    )
    return cfg.validate()
