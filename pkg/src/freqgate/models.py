"""U-Net builders: plain, attention-gated, and frequency-gated variants.

All three share an identical encoder/decoder trunk; they differ only in what
sits on each skip connection (nothing, an additive attention gate, or the
frequency-domain attention filter gate). Parameters are seeded per component
name, so the trunk is bit-identical across architectures for a fixed seed.
"""

from __future__ import annotations

import zlib
from dataclasses import asdict, dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, ShapeError
from .layers import AttentionFilterGateLayer, AttentionGateLayer
from .tensor import Tensor

MODEL_KINDS = ("unet", "attention_unet", "gfnet")

INIT_STD = 0.02


def component_rng(seed, name):
    return np.random.default_rng([seed, zlib.crc32(name.encode())])


@dataclass
class ModelSpec:
    kind: str = "unet"
    in_channels: int = 1
    num_classes: int = 1
    base_filters: int = 64
    depth: int = 4
    image_size: int = 256
    dropout_decoder: bool = True
    dropout_p: float = 0.5
    seed: int = 0
    gate_score: str = "sigmoid_complex"
    attention_internal: int = 0  # 0 -> half the skip channels

    def validate(self):
        if self.kind not in MODEL_KINDS:
            raise ConfigError(f"unknown model kind {self.kind!r}, expected {MODEL_KINDS}")
        if self.base_filters < 1:
            raise ConfigError("base_filters must be >= 1")
        if self.depth < 1:
            raise ConfigError("depth must be >= 1")
        if self.image_size % (1 << self.depth) != 0:
            raise ConfigError(
                f"image_size {self.image_size} not divisible by 2^depth = {1 << self.depth}"
            )
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigError("dropout_p must be in [0, 1)")
        return self

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown model spec fields: {sorted(extra)}")
        return cls(**d).validate()


def _gaussian_param(rng, shape, dtype):
    return Tensor(rng.standard_normal(shape) * INIT_STD, requires_grad=True, dtype=dtype)


def _zeros_param(shape, dtype):
    return Tensor(np.zeros(shape), requires_grad=True, dtype=dtype)


def _ones_param(shape, dtype):
    return Tensor(np.ones(shape), requires_grad=True, dtype=dtype)


class ConvBlock:
    """[conv3x3 -> instance norm -> relu] x2."""

    def __init__(self, cin, cout, name, seed, dtype):
        rng = component_rng(seed, name)
        self.name = name
        self.conv1_w = _gaussian_param(rng, (cout, cin, 3, 3), dtype)
        self.conv1_b = _zeros_param(cout, dtype)
        self.norm1_gain = _ones_param(cout, dtype)
        self.norm1_bias = _zeros_param(cout, dtype)
        self.conv2_w = _gaussian_param(rng, (cout, cout, 3, 3), dtype)
        self.conv2_b = _zeros_param(cout, dtype)
        self.norm2_gain = _ones_param(cout, dtype)
        self.norm2_bias = _zeros_param(cout, dtype)

    def parameters(self):
        return {
            f"{self.name}.conv1.weight": self.conv1_w,
            f"{self.name}.conv1.bias": self.conv1_b,
            f"{self.name}.norm1.gain": self.norm1_gain,
            f"{self.name}.norm1.bias": self.norm1_bias,
            f"{self.name}.conv2.weight": self.conv2_w,
            f"{self.name}.conv2.bias": self.conv2_b,
            f"{self.name}.norm2.gain": self.norm2_gain,
            f"{self.name}.norm2.bias": self.norm2_bias,
        }

    def forward(self, x):
        with T.scope(self.name):
            h = T.relu(T.instance_norm(T.conv2d(x, self.conv1_w, self.conv1_b), self.norm1_gain, self.norm1_bias))
            return T.relu(T.instance_norm(T.conv2d(h, self.conv2_w, self.conv2_b), self.norm2_gain, self.norm2_bias))


class UpBlock:
    """Nearest-neighbour x2 upsampling followed by conv3x3/norm/relu."""

    def __init__(self, cin, cout, name, seed, dtype):
        rng = component_rng(seed, name)
        self.name = name
        self.conv_w = _gaussian_param(rng, (cout, cin, 3, 3), dtype)
        self.conv_b = _zeros_param(cout, dtype)
        self.norm_gain = _ones_param(cout, dtype)
        self.norm_bias = _zeros_param(cout, dtype)

    def parameters(self):
        return {
            f"{self.name}.conv.weight": self.conv_w,
            f"{self.name}.conv.bias": self.conv_b,
            f"{self.name}.norm.gain": self.norm_gain,
            f"{self.name}.norm.bias": self.norm_bias,
        }

    def forward(self, x):
        with T.scope(self.name):
            up = T.upsample2(x)
            return T.relu(T.instance_norm(T.conv2d(up, self.conv_w, self.conv_b), self.norm_gain, self.norm_bias))


class Model:
    def __init__(self, spec: ModelSpec, dtype=np.float32):
        spec.validate()
        self.spec = spec
        self.dtype = np.dtype(dtype)
        f = spec.base_filters
        d = spec.depth
        seed = spec.seed

        self.encoder = []
        cin = spec.in_channels
        for i in range(d):
            cout = f << i
            self.encoder.append(ConvBlock(cin, cout, f"enc{i}", seed, dtype))
            cin = cout
        self.bottleneck = ConvBlock(cin, f << d, "bottleneck", seed, dtype)

        self.ups = []
        self.gates = []
        self.decoder = []
        for i in reversed(range(d)):
            skip_ch = f << i
            self.ups.append(UpBlock(skip_ch * 2, skip_ch, f"up{i}", seed, dtype))
            level_size = spec.image_size >> i
            self.gates.append(self._make_gate(i, skip_ch, level_size, dtype))
            self.decoder.append(ConvBlock(skip_ch * 2, skip_ch, f"dec{i}", seed, dtype))

        head_rng = component_rng(seed, "head")
        self.head_w = _gaussian_param(head_rng, (spec.num_classes, f, 1, 1), dtype)
        self.head_b = _zeros_param(spec.num_classes, dtype)

        self.registry = {}
        for block in self.encoder + [self.bottleneck] + self.ups + self.decoder:
            self.registry.update(block.parameters())
        for gate in self.gates:
            if gate is not None:
                self.registry.update(gate.parameters())
        self.registry["head.weight"] = self.head_w
        self.registry["head.bias"] = self.head_b

    def _make_gate(self, level, skip_ch, level_size, dtype):
        spec = self.spec
        name = f"gate{level}"
        rng = component_rng(spec.seed, f"{spec.kind}.{name}")
        if spec.kind == "unet":
            return None
        if spec.kind == "attention_unet":
            internal = spec.attention_internal or max(1, skip_ch // 2)
            return AttentionGateLayer(skip_ch, skip_ch, internal, rng, dtype, name=name)
        internal = spec.attention_internal or max(1, skip_ch // 2)
        return AttentionFilterGateLayer(
            skip_ch, skip_ch, internal, level_size, level_size, rng, dtype,
            score_mode=spec.gate_score, name=name,
        )

    def parameters(self):
        return self.registry

    def zero_grad(self):
        for p in self.registry.values():
            p.zero_grad()

    def forward(self, batch: Tensor, training=False, rng=None) -> Tensor:
        spec = self.spec
        if batch.ndim != 4 or batch.shape[1] != spec.in_channels:
            raise ShapeError(
                f"expected batch x {spec.in_channels} x H x W input, got {batch.shape}"
            )
        if batch.shape[2] != spec.image_size or batch.shape[3] != spec.image_size:
            raise ShapeError(
                f"model built for {spec.image_size}x{spec.image_size}, got "
                f"{batch.shape[2]}x{batch.shape[3]}"
            )
        if training and spec.dropout_decoder and rng is None:
            raise ConfigError("training forward with decoder dropout needs an rng")

        skips = []
        h = batch
        for block in self.encoder:
            h = block.forward(h)
            skips.append(h)
            h = T.max_pool2(h)
        h = self.bottleneck.forward(h)

        for j, i in enumerate(reversed(range(spec.depth))):
            h = self.ups[j].forward(h)
            skip = skips[i]
            gate = self.gates[j]
            if gate is not None:
                with T.scope(f"gate{i}"):
                    skip = gate.forward(h, skip)
            h = self.decoder[j].forward(T.concat([skip, h], axis=1))
            if training and spec.dropout_decoder:
                h = T.dropout(h, spec.dropout_p, training, rng)

        with T.scope("head"):
            return T.conv2d(h, self.head_w, self.head_b, padding=0)


def build(spec: ModelSpec, dtype=np.float32) -> Model:
    return Model(spec, dtype=dtype)


def param_count(model: Model):
    """Per-parameter table [(name, shape, count)] plus the grand total."""
    rows = [(name, tuple(p.shape), int(p.data.size)) for name, p in model.registry.items()]
    total = sum(r[2] for r in rows)
    return rows, total
