"""Complexity benchmarks: FFT filtering vs direct circular convolution,
analytic FLOP estimates, parameter accounting, and a kernel-backend race.

The measured crossover is whatever the host shows, never assumed: it is the
smallest benchmarked size from which the FFT path stays faster.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .layers import AttentionFilterGateLayer, AttentionGateLayer, GlobalFilterLayer


def fft_filter(f, g):
    """Circular convolution via the convolution theorem (orthonormal FFTs)."""
    h, w = f.shape
    spec = np.fft.rfft2(f, norm="ortho") * np.fft.rfft2(g, norm="ortho")
    return np.fft.irfft2(spec, s=(h, w), norm="ortho") * math.sqrt(h * w)


def _median_seconds(fn, reps):
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


@dataclass
class BenchReport:
    timing_rows: list = field(default_factory=list)
    analytic_rows: list = field(default_factory=list)
    param_rows: list = field(default_factory=list)
    backend_rows: list = field(default_factory=list)
    crossover: int | None = None
    max_equality_error: float = 0.0

    def timing_csv(self):
        lines = ["size,direct_ms,fft_ms,max_abs_diff"]
        for n, d, f, e in self.timing_rows:
            lines.append(f"{n},{d * 1e3:.6g},{f * 1e3:.6g},{e:.3e}")
        return "\n".join(lines) + "\n"

    def analytic_csv(self):
        lines = ["size,conv_full_kernel_flops,fft_flops,ratio,conv_fixed_kernel_flops"]
        for n, c, f, r, ck in self.analytic_rows:
            lines.append(f"{n},{c:.6g},{f:.6g},{r:.6g},{ck:.6g}")
        return "\n".join(lines) + "\n"

    def param_csv(self):
        lines = ["layer,analytic_formula,analytic_value,counted"]
        for row in self.param_rows:
            lines.append(",".join(str(v) for v in row))
        return "\n".join(lines) + "\n"

    def backend_csv(self):
        lines = ["kernel,size,backend,median_ms"]
        for kernel, n, backend, ms in self.backend_rows:
            lines.append(f"{kernel},{n},{backend},{ms * 1e3:.6g}")
        return "\n".join(lines) + "\n"


def bench_complexity(
    sizes=(8, 16, 32, 64),
    channels=8,
    kernel_size=3,
    reps=20,
    analytic_sizes=(16, 32, 64, 128, 256),
    seed=0,
) -> BenchReport:
    rng = np.random.default_rng(seed)
    report = BenchReport()

    for n in sorted(sizes):
        f = rng.standard_normal((n, n))
        g = rng.standard_normal((n, n))
        direct = kernels.circular_conv2d_direct(f, g)  # warm + oracle value
        via_fft = fft_filter(f, g)
        err = float(np.abs(direct - via_fft).max())
        report.max_equality_error = max(report.max_equality_error, err)
        t_direct = _median_seconds(lambda: kernels.circular_conv2d_direct(f, g), reps)
        t_fft = _median_seconds(lambda: fft_filter(f, g), reps)
        report.timing_rows.append((n, t_direct, t_fft, err))

    # smallest size from which the FFT path stays ahead
    crossover = None
    for i, (n, t_d, t_f, _) in enumerate(report.timing_rows):
        if all(tf < td for _, td, tf, _ in report.timing_rows[i:]):
            crossover = n
            break
    report.crossover = crossover

    k = kernel_size
    d = channels
    for n in sorted(analytic_sizes):
        # the measured operation convolves with a full-size kernel: k = N,
        # so the direct path is (HW)^2-scale against the FFT's HW log HW
        conv_flops = (n * n) ** 2 * d
        fft_flops = n * n * math.log2(n * n) * d
        fixed_kernel_flops = k * k * n * n * d
        report.analytic_rows.append(
            (n, conv_flops, fft_flops, conv_flops / fft_flops, fixed_kernel_flops)
        )

    # parameter accounting: the complexity table's formulas next to exact
    # counts from instantiated layers
    h = w = 16
    wh = w // 2 + 1
    rng_p = np.random.default_rng(seed + 1)
    conv_weight_count = k * k * d * d + d
    report.param_rows.append(("conv3x3", "k^2*D", k * k * d, conv_weight_count))
    ag = AttentionGateLayer(d, d, max(1, d // 2), rng_p)
    ag_counted = sum(p.data.size for p in ag.parameters().values())
    report.param_rows.append(("attention_gate", "H*W", h * w, ag_counted))
    gf = GlobalFilterLayer(d, h, w, rng_p)
    gf_counted = sum(p.data.size for p in gf.parameters().values())
    report.param_rows.append(
        ("global_filter", "2*C*H*(W/2+1)", 2 * d * h * wh, gf_counted)
    )
    afg = AttentionFilterGateLayer(d, d, max(1, d // 2), h, w, rng_p)
    afg_counted = sum(p.data.size for p in afg.parameters().values())
    report.param_rows.append(
        (
            "attention_filter_gate",
            "2HW(F_l+F_g+F_int)+4D^2",
            2 * h * w * (d + d + max(1, d // 2)) + 4 * d * d,
            afg_counted,
        )
    )
    return report


def bench_backends(sizes=(32, 64), channels=8, batch=4, reps=10, seed=0) -> list:
    """Time conv2d forward/backward on every available kernel backend."""
    rows = []
    rng = np.random.default_rng(seed)
    for n in sorted(sizes):
        x = rng.standard_normal((batch, channels, n, n)).astype(np.float32)
        w = (rng.standard_normal((channels, channels, 3, 3)) * 0.1).astype(np.float32)
        b = np.zeros(channels, dtype=np.float32)
        gy = rng.standard_normal((batch, channels, n, n)).astype(np.float32)
        for backend_name in kernels.available_backends():
            mod = kernels.get_backend(backend_name)
            mod.conv2d_forward(x, w, b, 1, 1, 1)  # warm any JIT
            mod.conv2d_grad_input(gy, w, 1, 1, 1, n, n)
            mod.conv2d_grad_weight(gy, x, 3, 3, 1, 1, 1)
            rows.append(
                (
                    "conv2d_forward",
                    n,
                    backend_name,
                    _median_seconds(lambda: mod.conv2d_forward(x, w, b, 1, 1, 1), reps),
                )
            )
            rows.append(
                (
                    "conv2d_grad_input",
                    n,
                    backend_name,
                    _median_seconds(
                        lambda: mod.conv2d_grad_input(gy, w, 1, 1, 1, n, n), reps
                    ),
                )
            )
            rows.append(
                (
                    "conv2d_grad_weight",
                    n,
                    backend_name,
                    _median_seconds(
                        lambda: mod.conv2d_grad_weight(gy, x, 3, 3, 1, 1, 1), reps
                    ),
                )
            )
    return rows
