"""Command-line surface.

Subcommands: import, synth, preprocess, train, eval, bench, spectrum,
saliency. Exit codes: 0 ok, 2 config error, 3 data error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from . import diagnostics
from .checkpoint import load_checkpoint
from .config import load_train_config
from .data import (
    DatasetManifest,
    import_nifti,
    load_volume,
    preprocess_volume,
    save_volume,
    split_ids,
    synth_dataset,
)
from .errors import ConfigError, DataError, FreqgateError, NumericalError
from .models import ModelSpec, build
from .checkpoint import restore_model
from .training import evaluate_model, train


def _cmd_import(args):
    rec = import_nifti(args.image, args.mask, args.id, binarize=args.binarize)
    sidecar = save_volume(args.out, rec)
    print(f"imported {args.id}: dims {rec.image.shape}, wrote {sidecar}")
    return 0


def _cmd_synth(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    vols = synth_dataset(args.n, args.seed)
    for v in vols:
        save_volume(out, v)
    manifest = split_ids([v.id for v in vols], args.val, args.test, args.seed)
    manifest.to_json(out / "manifest.json")
    print(
        f"wrote {len(vols)} volumes to {out} "
        f"(train {len(manifest.train)} / val {len(manifest.val)} / test {len(manifest.test)})"
    )
    return 0


def _cmd_preprocess(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = DatasetManifest.from_json(args.manifest)
    ids = manifest.train + manifest.val + manifest.test
    total = 0
    for vid in ids:
        vol = load_volume(Path(args.data) / f"{vid}.json")
        samples = preprocess_volume(
            vol, target_size=args.target, empty_ratio=args.empty_ratio
        )
        if not samples:
            continue
        np.savez(
            out / f"{vid}.slices.npz",
            images=np.stack([s.image for s in samples]),
            masks=np.stack([s.mask for s in samples]),
            slice_indices=np.array([s.slice_index for s in samples]),
        )
        logs = [s.transform_log for s in samples]
        (out / f"{vid}.transforms.json").write_text(
            json.dumps(logs, indent=2, sort_keys=True) + "\n"
        )
        total += len(samples)
    print(f"preprocessed {total} slices from {len(ids)} volumes into {out}")
    return 0


def _cmd_train(args):
    cfg = load_train_config(args.config)
    result = train(cfg, resume_from=args.resume)
    dice = result.report.volume_weighted.get("dice", float("nan"))
    iou = result.report.volume_weighted.get("iou", float("nan"))
    print(f"best val dice {result.best_val_dice:.4f}")
    print(f"final val: mean dice {dice:.4f}, mean IoU {iou:.4f} (volume-weighted)")
    print(f"checkpoints: {result.best_checkpoint} (best), {result.last_checkpoint} (last)")
    return 0


def _cmd_eval(args):
    ckpt = load_checkpoint(args.checkpoint)
    spec = ModelSpec.from_dict(ckpt.manifest["model_spec"])
    model = build(spec)
    restore_model(model, ckpt)
    manifest = DatasetManifest.from_json(args.manifest)
    ids = getattr(manifest, args.split)
    samples = []
    for vid in ids:
        vol = load_volume(Path(args.data) / f"{vid}.json")
        samples.extend(preprocess_volume(vol, target_size=spec.image_size))
    if not samples:
        raise DataError(f"no slices found for split {args.split!r}")
    report = evaluate_model(model, samples, threshold=args.threshold)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.csv").write_text(report.metrics_csv())
    (out / "summary.json").write_text(
        json.dumps(report.summary(), indent=2, sort_keys=True) + "\n"
    )
    vw = report.volume_weighted
    sw = report.slice_weighted
    print(f"volume-weighted: mean dice {vw['dice']:.4f}, mean IoU {vw['iou']:.4f}")
    print(f"slice-weighted:  mean dice {sw['dice']:.4f}, mean IoU {sw['iou']:.4f}")
    print(f"wrote {out / 'metrics.csv'}")
    return 0


def _cmd_bench(args):
    sizes = [int(s) for s in args.sizes.split(",")]
    report = bench_mod.bench_complexity(sizes=sizes, reps=args.reps)
    report.backend_rows = bench_mod.bench_backends()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "bench_timing.csv").write_text(report.timing_csv())
    (out / "bench_analytic.csv").write_text(report.analytic_csv())
    (out / "bench_params.csv").write_text(report.param_csv())
    (out / "bench_backends.csv").write_text(report.backend_csv())
    print(report.timing_csv(), end="")
    if report.crossover is None:
        print("no crossover observed in the benchmarked sizes")
    else:
        print(f"FFT path faster from N = {report.crossover} upward")
    print(f"max |direct - fft| = {report.max_equality_error:.3e}")
    print(f"wrote CSVs to {out}")
    return 0


def _cmd_spectrum(args):
    vol = load_volume(args.volume)
    if not 0 <= args.slice < vol.image.shape[0]:
        raise DataError(f"slice {args.slice} out of range for {vol.image.shape[0]} slices")
    edges, counts, degenerate = diagnostics.spectrum_histogram(vol.image[args.slice])
    Path(args.out).write_text(diagnostics.histogram_csv(edges, counts, degenerate))
    if degenerate:
        print(f"constant input flagged; empty histogram written to {args.out}")
    else:
        print(f"histogram ({counts.sum()} bins mass) written to {args.out}")
    return 0


def _cmd_saliency(args):
    ckpt = load_checkpoint(args.checkpoint)
    spec = ModelSpec.from_dict(ckpt.manifest["model_spec"])
    model = build(spec)
    restore_model(model, ckpt)
    vol = load_volume(args.volume)
    samples = preprocess_volume(vol, target_size=spec.image_size)
    match = [s for s in samples if s.slice_index == args.slice]
    if not match:
        raise DataError(
            f"slice {args.slice} not in the preprocessed set "
            f"{[s.slice_index for s in samples]}"
        )
    heat = diagnostics.saliency(model, match[0].image)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{vol.id}_slice{args.slice}"
    diagnostics.write_pgm(out / f"{stem}.pgm", heat)
    (out / f"{stem}.csv").write_text(diagnostics.heatmap_csv(heat))
    print(f"wrote {out / (stem + '.pgm')} and {out / (stem + '.csv')}")
    return 0


def make_parser():
    p = argparse.ArgumentParser(prog="freqgate", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("import", help="convert a NIfTI-1 image/mask pair to the container")
    s.add_argument("--image", required=True)
    s.add_argument("--mask", required=True)
    s.add_argument("--id", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--binarize", action="store_true", help="threshold mask labels at zero")
    s.set_defaults(fn=_cmd_import)

    s = sub.add_parser("synth", help="generate the synthetic ellipsoid dataset")
    s.add_argument("--n", type=int, default=50)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--val", type=int, default=10)
    s.add_argument("--test", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=_cmd_synth)

    s = sub.add_parser("preprocess", help="materialize preprocessed slices to disk")
    s.add_argument("--data", required=True)
    s.add_argument("--manifest", required=True)
    s.add_argument("--target", type=int, default=64)
    s.add_argument("--empty-ratio", type=float, default=0.2)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=_cmd_preprocess)

    s = sub.add_parser("train", help="train a model from a JSON config")
    s.add_argument("--config", required=True)
    s.add_argument("--resume", default=None, help="checkpoint to continue from")
    s.set_defaults(fn=_cmd_train)

    s = sub.add_parser("eval", help="evaluate a checkpoint on a manifest split")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--manifest", required=True)
    s.add_argument("--split", choices=("train", "val", "test"), default="val")
    s.add_argument("--threshold", type=float, default=0.5)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=_cmd_eval)

    s = sub.add_parser("bench", help="FFT vs direct convolution and backend timings")
    s.add_argument("--sizes", default="8,16,32,64")
    s.add_argument("--reps", type=int, default=20)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=_cmd_bench)

    s = sub.add_parser("spectrum", help="z-normalized frequency histogram of a slice")
    s.add_argument("--volume", required=True, help="container sidecar path")
    s.add_argument("--slice", type=int, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=_cmd_spectrum)

    s = sub.add_parser("saliency", help="gradient saliency heatmap for a slice")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--volume", required=True)
    s.add_argument("--slice", type=int, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=_cmd_saliency)
    return p


def main(argv=None):
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 4
    except FreqgateError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
