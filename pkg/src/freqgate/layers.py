"""Gating and filter layers for the skip connections.

Three families: the learnable spectral filter (per-frequency complex
weights), the frequency-domain attention filter gate built from two such
filters, and the classical additive attention gate as baseline. Layers are
immutable after construction; parameters mutate only through the optimizer.
"""

from __future__ import annotations

import math

import numpy as np

from . import fourier
from . import tensor as T
from .errors import ShapeError
from .tensor import Tensor

TWO_PI = 2.0 * math.pi


class GlobalFilterLayer:
    """Learnable per-channel complex weights multiplied onto the spectrum."""

    def __init__(self, channels, height, width, rng, dtype=np.float32, name="global_filter"):
        wh = width // 2 + 1
        self.channels = channels
        self.height = height
        self.width = width
        self.name = name
        self.complex_weight = Tensor(
            rng.standard_normal((channels, height, wh, 2)) * 0.02,
            requires_grad=True,
            dtype=dtype,
        )

    def parameters(self):
        return {f"{self.name}.complex_weight": self.complex_weight}

    def forward(self, x: Tensor):
        """Returns (filtered spatial tensor, filtered spectrum)."""
        if x.shape[2] != self.height or x.shape[3] != self.width:
            raise ShapeError(
                f"{self.name}: input {x.shape[2]}x{x.shape[3]} does not match "
                f"configured size {self.height}x{self.width}"
            )
        if x.shape[1] != self.channels:
            raise ShapeError(
                f"{self.name}: input has {x.shape[1]} channels, filter expects {self.channels}"
            )
        freq = fourier.complex_mul(fourier.rfft2(x), self.complex_weight)
        out = fourier.irfft2(freq, self.height, self.width)
        return out, freq


class AttentionFilterGateLayer:
    """Frequency-domain gate: score two filtered spectra, inverse-transform,
    add residually to the skip feature and layer-normalize."""

    def __init__(
        self,
        gate_channels,
        skip_channels,
        internal_channels,
        height,
        width,
        rng,
        dtype=np.float32,
        score_mode="sigmoid_complex",
        name="afg",
    ):
        if gate_channels != skip_channels:
            raise ShapeError(
                "attention filter gate needs matching gate/skip channel counts "
                f"for the elementwise spectral product, got {gate_channels} vs {skip_channels}"
            )
        if score_mode not in ("sigmoid_complex", "softmax"):
            raise ShapeError(f"unknown score_mode {score_mode!r}")
        self.gate_channels = gate_channels
        self.skip_channels = skip_channels
        self.internal_channels = internal_channels
        self.height = height
        self.width = width
        self.score_mode = score_mode
        self.name = name
        self.filter_gate = GlobalFilterLayer(
            gate_channels, height, width, rng, dtype, name=f"{name}.filter_gate"
        )
        self.filter_skip = GlobalFilterLayer(
            skip_channels, height, width, rng, dtype, name=f"{name}.filter_skip"
        )
        self.ln_gain = Tensor(np.ones(skip_channels), requires_grad=True, dtype=dtype)
        self.ln_bias = Tensor(np.zeros(skip_channels), requires_grad=True, dtype=dtype)

    def parameters(self):
        params = {}
        params.update(self.filter_gate.parameters())
        params.update(self.filter_skip.parameters())
        params[f"{self.name}.ln_gain"] = self.ln_gain
        params[f"{self.name}.ln_bias"] = self.ln_bias
        return params

    def forward(self, g: Tensor, x: Tensor) -> Tensor:
        return self.forward_with_internals(g, x)["out"]

    def forward_with_internals(self, g: Tensor, x: Tensor) -> dict:
        if g.shape[0] != x.shape[0] or g.shape[2:] != x.shape[2:]:
            raise ShapeError(
                f"gate/skip shape mismatch: g {g.shape} vs x {x.shape}"
            )
        # the filtered spatial outputs are unused downstream but kept for
        # diagnostics, mirroring the gate's dual-output filters
        g_spatial, g_freq = self.filter_gate.forward(g)
        x_spatial, x_freq = self.filter_skip.forward(x)
        norm_freq = fourier.variance_spatial(g_freq)
        fourier.check_nonzero_variance(norm_freq, what=self.name)
        inv_scale = T.power(TWO_PI * norm_freq, -0.5)
        raw = fourier.spectrum_scale(fourier.conj_mul(g_freq, x_freq), inv_scale)
        if self.score_mode == "sigmoid_complex":
            atten = fourier.sigmoid_complex_field(raw)
        else:
            atten = T.softmax(fourier.magnitude_field(raw), axis=(2, 3))
        inverse_atten = fourier.irfft2(
            fourier.lift_real(atten, self.width), self.height, self.width
        )
        out = T.layer_norm(x + inverse_atten, self.ln_gain, self.ln_bias)
        return {
            "out": out,
            "g_spatial": g_spatial,
            "x_spatial": x_spatial,
            "g_freq": g_freq,
            "x_freq": x_freq,
            "norm_freq": norm_freq,
            "atten": atten,
            "inverse_atten": inverse_atten,
        }


class AttentionGateLayer:
    """Additive soft attention: 1x1 projections, relu, psi, sigmoid mask."""

    def __init__(self, gate_channels, skip_channels, internal_channels, rng,
                 dtype=np.float32, name="ag"):
        if internal_channels < 1:
            raise ShapeError("internal_channels must be >= 1")
        self.gate_channels = gate_channels
        self.skip_channels = skip_channels
        self.internal_channels = internal_channels
        self.name = name

        def init(shape):
            return Tensor(rng.standard_normal(shape) * 0.02, requires_grad=True, dtype=dtype)

        self.w_gate = init((internal_channels, gate_channels, 1, 1))
        self.w_skip = init((internal_channels, skip_channels, 1, 1))
        self.bias = Tensor(np.zeros(internal_channels), requires_grad=True, dtype=dtype)
        self.psi = init((1, internal_channels, 1, 1))
        self.psi_bias = Tensor(np.zeros(1), requires_grad=True, dtype=dtype)

    def parameters(self):
        return {
            f"{self.name}.w_gate": self.w_gate,
            f"{self.name}.w_skip": self.w_skip,
            f"{self.name}.bias": self.bias,
            f"{self.name}.psi": self.psi,
            f"{self.name}.psi_bias": self.psi_bias,
        }

    def forward(self, g: Tensor, x: Tensor) -> Tensor:
        if g.shape[0] != x.shape[0] or g.shape[2:] != x.shape[2:]:
            raise ShapeError(f"gate/skip shape mismatch: g {g.shape} vs x {x.shape}")
        proj = T.conv2d(g, self.w_gate, self.bias, padding=0) + T.conv2d(
            x, self.w_skip, None, padding=0
        )
        logits = T.conv2d(T.relu(proj), self.psi, self.psi_bias, padding=0)
        alpha = T.sigmoid(logits)
        return x * alpha
