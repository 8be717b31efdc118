import numpy as np
import pytest

from freqgate.checkpoint import (
    load_checkpoint,
    model_arrays,
    restore_model,
    save_checkpoint,
)
from freqgate.errors import ConfigError, DataError, ShapeError
from freqgate.gradcheck import grad_check
from freqgate.losses import PredictionPair, bce_dice_loss
from freqgate.models import ModelSpec, build, param_count
from freqgate.tensor import Tensor


def small_spec(kind, **kw):
    defaults = dict(kind=kind, base_filters=4, depth=2, image_size=16, seed=7)
    defaults.update(kw)
    return ModelSpec(**defaults)


def conv_block_params(cin, cout):
    # two 3x3 convs with bias plus two per-channel affine norms
    return (9 * cin * cout + cout) + (9 * cout * cout + cout) + 4 * cout


def up_block_params(cin, cout):
    return 9 * cin * cout + cout + 2 * cout


def unet_param_oracle(f, depth, in_ch=1, classes=1):
    total = 0
    cin = in_ch
    for i in range(depth):
        total += conv_block_params(cin, f << i)
        cin = f << i
    total += conv_block_params(cin, f << depth)
    for i in reversed(range(depth)):
        skip = f << i
        total += up_block_params(skip * 2, skip)
        total += conv_block_params(skip * 2, skip)
    total += classes * f + classes  # 1x1 head
    return total


class TestBuild:
    @pytest.mark.parametrize("kind", ["unet", "attention_unet", "gfnet"])
    def test_forward_shape_contract(self, rng, kind):
        model = build(small_spec(kind))
        x = Tensor(rng.standard_normal((2, 1, 16, 16)).astype(np.float32))
        y = model.forward(x)
        assert y.shape == (2, 1, 16, 16)
        assert np.all(np.isfinite(y.data))

    def test_identical_seeds_bit_identical_registries(self):
        a = build(small_spec("gfnet"))
        b = build(small_spec("gfnet"))
        assert a.registry.keys() == b.registry.keys()
        for k in a.registry:
            assert np.array_equal(a.registry[k].data, b.registry[k].data), k

    def test_divisibility_enforced(self):
        with pytest.raises(ConfigError):
            ModelSpec(kind="unet", depth=3, image_size=20).validate()

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            ModelSpec(kind="resnet").validate()

    def test_trunk_identical_across_architectures(self):
        models = {k: build(small_spec(k)) for k in ("unet", "attention_unet", "gfnet")}
        trunk_keys = set(models["unet"].registry)
        for kind in ("attention_unet", "gfnet"):
            reg = models[kind].registry
            assert trunk_keys < set(reg)
            for k in trunk_keys:
                assert np.array_equal(reg[k].data, models["unet"].registry[k].data), k

    def test_architectures_differ_only_in_gates(self):
        unet = build(small_spec("unet"))
        gf = build(small_spec("gfnet"))
        extra = set(gf.registry) - set(unet.registry)
        assert extra and all(k.startswith("gate") for k in extra)

    def test_softmax_gate_score_variant(self, rng):
        model = build(small_spec("gfnet", gate_score="softmax"))
        x = Tensor(rng.standard_normal((1, 1, 16, 16)).astype(np.float32))
        y = model.forward(x)
        assert y.shape == (1, 1, 16, 16)
        assert all(g.score_mode == "softmax" for g in model.gates)


class TestParamCount:
    def test_single_conv_by_hand(self, rng):
        model = build(small_spec("unet"))
        rows = dict((name, n) for name, _shape, n in param_count(model)[0])
        # enc0.conv1: 3*3*1*4 weights + 4 biases
        assert rows["enc0.conv1.weight"] == 36
        assert rows["enc0.conv1.bias"] == 4

    def test_global_filter_count_formula(self):
        model = build(small_spec("gfnet"))
        rows = dict((name, n) for name, _shape, n in param_count(model)[0])
        # level-1 gate at 8x8 with 8 channels: 2*C*H*(W/2+1)
        assert rows["gate1.filter_gate.complex_weight"] == 2 * 8 * 8 * 5
        assert rows["gate1.filter_skip.complex_weight"] == 2 * 8 * 8 * 5

    def test_total_matches_registry(self):
        model = build(small_spec("attention_unet"))
        rows, total = param_count(model)
        assert total == sum(p.data.size for p in model.registry.values())

    def test_unet_closed_form_oracle(self):
        f, depth = 64, 4
        model = build(ModelSpec(kind="unet", base_filters=f, depth=depth, image_size=64))
        _, total = param_count(model)
        assert total == unet_param_oracle(f, depth)

    def test_unet_closed_form_small(self):
        model = build(small_spec("unet"))
        _, total = param_count(model)
        assert total == unet_param_oracle(4, 2)


class TestForward:
    def test_zero_input_zero_head_gives_zero_logits(self, rng):
        model = build(small_spec("unet"))
        model.head_w.data[...] = 0.0
        model.head_b.data[...] = 0.0
        y = model.forward(Tensor(np.zeros((1, 1, 16, 16), dtype=np.float32)))
        assert np.all(y.data == 0)

    def test_eval_forward_deterministic(self, rng):
        model = build(small_spec("gfnet"))
        x = Tensor(rng.standard_normal((1, 1, 16, 16)).astype(np.float32))
        a = model.forward(x, training=False).data
        b = model.forward(x, training=False).data
        assert np.array_equal(a, b)

    def test_dropout_requires_rng_in_training(self):
        model = build(small_spec("unet", dropout_decoder=True))
        with pytest.raises(ConfigError):
            model.forward(Tensor(np.zeros((1, 1, 16, 16), dtype=np.float32)), training=True)

    def test_shape_errors(self, rng):
        model = build(small_spec("unet"))
        with pytest.raises(ShapeError):
            model.forward(Tensor(np.zeros((1, 2, 16, 16), dtype=np.float32)))
        with pytest.raises(ShapeError):
            model.forward(Tensor(np.zeros((1, 1, 8, 8), dtype=np.float32)))

    @pytest.mark.parametrize("kind", ["unet", "attention_unet", "gfnet"])
    def test_end_to_end_gradient_through_loss(self, rng, kind):
        spec = ModelSpec(
            kind=kind, base_filters=2, depth=1, image_size=16, seed=1,
            dropout_decoder=False,
        )
        model = build(spec, dtype=np.float64)
        target = Tensor((rng.random((1, 1, 16, 16)) > 0.7).astype(np.float64))

        def run(x):
            logits = model.forward(x, training=False)
            return bce_dice_loss(PredictionPair.from_logits(logits, target))

        x = Tensor(rng.standard_normal((1, 1, 16, 16)))
        r = grad_check(run, [x], eps=1e-5, tol=1e-4)
        assert r.passed, r


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path, rng):
        model = build(small_spec("gfnet"))
        path = tmp_path / "model.ckpt"
        save_checkpoint(
            path, model.spec.to_dict(), model_arrays(model), seed=7, step=42,
            epoch=3, metrics={"val_dice": 0.5},
        )
        ckpt = load_checkpoint(path)
        assert ckpt.manifest["step"] == 42
        assert ckpt.manifest["model_spec"]["kind"] == "gfnet"
        for name, p in model.registry.items():
            assert np.array_equal(ckpt.arrays[name], p.data.astype(np.float32))

    def test_save_load_save_bytes_identical(self, tmp_path):
        model = build(small_spec("unet"))
        p1 = tmp_path / "a.ckpt"
        p2 = tmp_path / "b.ckpt"
        save_checkpoint(p1, model.spec.to_dict(), model_arrays(model), 7, 1, 0)
        ck = load_checkpoint(p1)
        save_checkpoint(
            p2, ck.manifest["model_spec"], ck.arrays, ck.manifest["seed"],
            ck.manifest["step"], ck.manifest["epoch"], ck.manifest["metrics"],
        )
        assert p1.read_bytes() == p2.read_bytes()

    def test_restore_into_model(self, tmp_path, rng):
        a = build(small_spec("attention_unet"))
        for p in a.registry.values():
            p.data = rng.standard_normal(p.shape).astype(np.float32)
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, a.spec.to_dict(), model_arrays(a), 7, 0, 0)
        b = build(small_spec("attention_unet"))
        restore_model(b, load_checkpoint(path))
        for k in a.registry:
            assert np.array_equal(a.registry[k].data, b.registry[k].data)

    def test_truncation_detected(self, tmp_path):
        model = build(small_spec("unet"))
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, model.spec.to_dict(), model_arrays(model), 7, 0, 0)
        blob = path.read_bytes()
        path.write_bytes(blob[:-2])  # clip into the last array's payload
        with pytest.raises(DataError, match="truncated"):
            load_checkpoint(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "m.ckpt"
        path.write_bytes(b"not a checkpoint")
        with pytest.raises(DataError, match="magic"):
            load_checkpoint(path)
