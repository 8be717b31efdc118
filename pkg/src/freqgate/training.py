"""Training loop, evaluation, and metric reporting.

All stochasticity derives from counters: sample order from (seed, epoch),
dropout from (seed, step), augmentation from (seed, epoch, sample index).
Resuming from a checkpoint therefore continues the exact run, and two
identical seeded single-threaded runs emit byte-identical artifacts.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import metrics as M
from .checkpoint import load_checkpoint, model_arrays, restore_model, save_checkpoint
from .config import TrainConfig
from .data import DatasetManifest, augment, load_volume, preprocess_volume
from .errors import DataError, NumericalError
from .losses import LOSSES, PredictionPair
from .models import Model, build
from .optim import make_optimizer
from .tensor import Tape, Tensor

METRICS_CSV_VERSION = 1

# distinct fixed salts keep the derived RNG streams independent
_SALT_ORDER = 7919
_SALT_DROPOUT = 104729
_SALT_AUGMENT = 15485863


@dataclass
class MetricReport:
    rows: list = field(default_factory=list)  # (volume_id, slice_index, dice, iou)
    per_volume: dict = field(default_factory=dict)  # id -> {"dice","iou","n_slices"}
    volume_weighted: dict = field(default_factory=dict)
    slice_weighted: dict = field(default_factory=dict)
    loss_curve: list = field(default_factory=list)  # (step, epoch, loss)
    epoch_seconds: list = field(default_factory=list)

    def metrics_csv(self) -> str:
        lines = ["version,volume_id,slice_index,dice,iou"]
        for vid, idx, d, i in self.rows:
            lines.append(f"{METRICS_CSV_VERSION},{vid},{idx},{d:.10g},{i:.10g}")
        return "\n".join(lines) + "\n"

    def loss_csv(self) -> str:
        lines = ["version,step,epoch,loss"]
        for step, epoch, loss in self.loss_curve:
            lines.append(f"{METRICS_CSV_VERSION},{step},{epoch},{loss:.10g}")
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        return {
            "schema": f"freqgate-metrics-v{METRICS_CSV_VERSION}",
            "volume_weighted": self.volume_weighted,
            "slice_weighted": self.slice_weighted,
            "per_volume": self.per_volume,
            "n_slices": len(self.rows),
            "epoch_seconds": self.epoch_seconds,
        }


def compute_metric_report(rows) -> MetricReport:
    report = MetricReport(rows=list(rows))
    by_volume = {}
    for vid, _idx, d, i in rows:
        by_volume.setdefault(vid, []).append((d, i))
    for vid, pairs in by_volume.items():
        ds = [p[0] for p in pairs]
        ios = [p[1] for p in pairs]
        report.per_volume[vid] = {
            "dice": float(np.mean(ds)),
            "iou": float(np.mean(ios)),
            "n_slices": len(pairs),
        }
    if by_volume:
        report.volume_weighted = {
            "dice": float(np.mean([v["dice"] for v in report.per_volume.values()])),
            "iou": float(np.mean([v["iou"] for v in report.per_volume.values()])),
        }
        report.slice_weighted = {
            "dice": float(np.mean([r[2] for r in rows])),
            "iou": float(np.mean([r[3] for r in rows])),
        }
    return report


def _stack_batch(samples, dtype=np.float32):
    imgs = np.stack([s.image for s in samples]).astype(dtype)[:, None]
    masks = np.stack([s.mask for s in samples]).astype(dtype)[:, None]
    return Tensor(imgs), Tensor(masks)


def forward_probs(model: Model, samples, batch_size=8):
    """Eval-mode forward over samples; returns per-slice probability maps."""
    probs = []
    for off in range(0, len(samples), batch_size):
        chunk = samples[off : off + batch_size]
        x, _ = _stack_batch(chunk, dtype=model.dtype)
        logits = model.forward(x, training=False)
        with np.errstate(over="ignore"):
            probs.extend(1.0 / (1.0 + np.exp(-logits.data[:, 0])))
    return probs


def evaluate_model(model: Model, samples, threshold=0.5, batch_size=8) -> MetricReport:
    rows = []
    probs = forward_probs(model, samples, batch_size)
    for s, p in zip(samples, probs):
        pred = M.binarize(p, threshold)
        rows.append(
            (s.volume_id, s.slice_index, M.dice_coeff(pred, s.mask), M.iou(pred, s.mask))
        )
    return compute_metric_report(rows)


def load_split_samples(cfg: TrainConfig):
    """Load container volumes named by the manifest and preprocess them."""
    manifest = DatasetManifest.from_json(cfg.manifest)
    root = Path(cfg.data_dir)

    def load_ids(ids):
        out = []
        for vid in ids:
            vol = load_volume(root / f"{vid}.json")
            out.extend(
                preprocess_volume(
                    vol,
                    target_size=cfg.model.image_size,
                    empty_ratio=cfg.empty_slice_ratio,
                )
            )
        return out

    train = load_ids(manifest.train)
    val = load_ids(manifest.val)
    if not train:
        raise DataError("no training slices after preprocessing")
    return train, val


@dataclass
class TrainResult:
    last_checkpoint: str
    best_checkpoint: str
    report: MetricReport
    best_val_dice: float
    val_history: list  # (epoch, volume-weighted dice)


def train(cfg: TrainConfig, train_samples=None, val_samples=None,
          resume_from=None) -> TrainResult:
    cfg.validate()
    if train_samples is None or val_samples is None:
        train_samples, val_samples = load_split_samples(cfg)
    if not train_samples:
        raise DataError("empty training dataset")

    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model = build(cfg.model)
    opt = make_optimizer(
        cfg.optimizer, model.parameters(), cfg.lr, cfg.momentum, cfg.weight_decay
    )
    if cfg.loss == "bce_dice" and cfg.dice_weight != 1.0:
        loss_fn = lambda pair: LOSSES["bce_dice"](pair, dice_weight=cfg.dice_weight)
    else:
        loss_fn = LOSSES[cfg.loss]

    start_epoch = 0
    step = 0
    best_dice = -1.0
    if resume_from is not None:
        ckpt = load_checkpoint(resume_from)
        restore_model(model, ckpt)
        opt.load_state(ckpt.arrays)
        start_epoch = int(ckpt.manifest["epoch"]) + 1
        step = int(ckpt.manifest["step"])
        best_dice = float(ckpt.manifest["metrics"].get("best_val_dice", -1.0))

    report = MetricReport()
    val_history = []
    n = len(train_samples)
    best_path = out_dir / "best.ckpt"
    last_path = out_dir / "last.ckpt"

    def save(path, epoch, extra_metrics):
        arrays = dict(model_arrays(model))
        arrays.update(opt.state_arrays())
        save_checkpoint(
            path,
            cfg.model.to_dict(),
            arrays,
            seed=cfg.seed,
            step=step,
            epoch=epoch,
            metrics=extra_metrics,
        )

    final_epoch = start_epoch - 1
    for epoch in range(start_epoch, cfg.epochs):
        final_epoch = epoch
        t0 = time.perf_counter()
        order = np.random.default_rng([cfg.seed, _SALT_ORDER, epoch]).permutation(n)
        for off in range(0, n, cfg.batch_size):
            idxs = order[off : off + cfg.batch_size]
            batch = [train_samples[i] for i in idxs]
            if cfg.augment is not None:
                batch = [
                    augment(
                        s,
                        cfg.augment,
                        np.random.default_rng([cfg.seed, _SALT_AUGMENT, epoch, int(i)]),
                    )
                    for s, i in zip(batch, idxs)
                ]
            x, y = _stack_batch(batch, dtype=model.dtype)
            drop_rng = np.random.default_rng([cfg.seed, _SALT_DROPOUT, step])
            try:
                with Tape() as tape:
                    logits = model.forward(x, training=True, rng=drop_rng)
                    loss = loss_fn(PredictionPair.from_logits(logits, y))
            except NumericalError as e:
                raise NumericalError(
                    f"aborting at step {step} (epoch {epoch}): {e}"
                ) from e
            model.zero_grad()
            tape.backward(loss)
            opt.step()
            report.loss_curve.append((step, epoch, float(loss.data)))
            step += 1
        report.epoch_seconds.append(time.perf_counter() - t0)

        if val_samples and (epoch + 1) % cfg.eval_every == 0:
            val_report = evaluate_model(model, val_samples, cfg.threshold)
            dice = val_report.volume_weighted.get("dice", 0.0)
            val_history.append((epoch, dice))
            if dice > best_dice:
                best_dice = dice
                save(best_path, epoch, {"best_val_dice": best_dice, "val_dice": dice})
            if cfg.early_stop_dice is not None and dice >= cfg.early_stop_dice:
                break

    save(last_path, final_epoch, {"best_val_dice": best_dice})
    if not best_path.exists():
        save(best_path, final_epoch, {"best_val_dice": best_dice})

    if val_samples:
        final = evaluate_model(model, val_samples, cfg.threshold)
        report.rows = final.rows
        report.per_volume = final.per_volume
        report.volume_weighted = final.volume_weighted
        report.slice_weighted = final.slice_weighted

    (out_dir / "metrics.csv").write_text(report.metrics_csv())
    (out_dir / "loss_curve.csv").write_text(report.loss_csv())
    (out_dir / "summary.json").write_text(
        json.dumps(report.summary(), indent=2, sort_keys=True) + "\n"
    )
    return TrainResult(
        last_checkpoint=str(last_path),
        best_checkpoint=str(best_path),
        report=report,
        best_val_dice=best_dice,
        val_history=val_history,
    )
