import math

import numpy as np
import pytest

from freqgate.complex_activations import sigmoid_complex
from freqgate.errors import NumericalError, ShapeError
from freqgate.gradcheck import grad_check
from freqgate.layers import (
    AttentionFilterGateLayer,
    AttentionGateLayer,
    GlobalFilterLayer,
)
from freqgate.tensor import Tensor

from oracles import naive_irfft2_ortho, naive_rfft2_ortho


def unit_weights(layer):
    layer.complex_weight.data[...] = 0.0
    layer.complex_weight.data[..., 0] = 1.0


class TestGlobalFilter:
    def test_unit_weights_identity(self, rng):
        gf = GlobalFilterLayer(3, 8, 8, rng, dtype=np.float64)
        unit_weights(gf)
        x = Tensor(rng.standard_normal((2, 3, 8, 8)))
        out, freq = gf.forward(x)
        assert np.abs(out.data - x.data).max() < 1e-10
        assert freq.shape == (2, 3, 8, 5, 2)

    def test_unit_weights_identity_f32_many(self, rng):
        gf = GlobalFilterLayer(2, 16, 16, rng, dtype=np.float32)
        unit_weights(gf)
        for _ in range(25):
            x = Tensor(rng.standard_normal((1, 2, 16, 16)).astype(np.float32))
            out, _ = gf.forward(x)
            assert np.abs(out.data - x.data).max() < 1e-6

    def test_zero_weights_zero_output(self, rng):
        gf = GlobalFilterLayer(1, 4, 4, rng)
        gf.complex_weight.data[...] = 0.0
        out, freq = gf.forward(Tensor(rng.standard_normal((1, 1, 4, 4)).astype(np.float32)))
        assert np.all(out.data == 0)
        assert np.all(freq.data == 0)

    def test_ramp_against_naive_dft_pipeline(self, rng):
        gf = GlobalFilterLayer(1, 4, 4, rng, dtype=np.float64)
        wdat = rng.standard_normal((1, 4, 3, 2))
        gf.complex_weight.data = wdat.copy()
        ramp = np.arange(16, dtype=np.float64).reshape(1, 1, 4, 4)
        out, freq = gf.forward(Tensor(ramp))
        spec = naive_rfft2_ortho(ramp[0, 0]) * (wdat[0, ..., 0] + 1j * wdat[0, ..., 1])
        want = naive_irfft2_ortho(spec[None, None], 4, 4)[0, 0]
        assert np.abs(out.data[0, 0] - want).max() < 1e-10

    def test_spatial_mismatch_rejected(self, rng):
        gf = GlobalFilterLayer(1, 8, 8, rng)
        with pytest.raises(ShapeError):
            gf.forward(Tensor(np.zeros((1, 1, 4, 4), dtype=np.float32)))

    def test_weight_count(self, rng):
        gf = GlobalFilterLayer(2, 8, 8, rng)
        assert gf.complex_weight.data.size == 2 * 2 * 8 * 5

    @pytest.mark.parametrize("shape", [(1, 2, 8, 8), (2, 4, 8, 8)])
    def test_gradients(self, rng, shape):
        gf = GlobalFilterLayer(shape[1], 8, 8, rng, dtype=np.float64)
        x = Tensor(rng.standard_normal(shape))
        r = grad_check(lambda t, w: gf.forward(t)[0], [x, gf.complex_weight],
                       eps=1e-5, tol=1e-5)
        assert r.passed, r


def afg_oracle(g_img, x_img, w_g, w_x, gain, bias, score_mode="sigmoid_complex"):
    """Straight-line numpy reimplementation of the gate, complex end to end."""
    h, w = g_img.shape[-2:]
    g_freq = np.fft.rfft2(g_img, axes=(-2, -1), norm="ortho") * w_g
    x_freq = np.fft.rfft2(x_img, axes=(-2, -1), norm="ortho") * w_x
    var = g_freq.real.var(axis=(-2, -1)) + g_freq.imag.var(axis=(-2, -1))
    raw = np.conj(g_freq) * x_freq / np.sqrt(2 * math.pi * var)[..., None, None]
    if score_mode == "sigmoid_complex":
        score = sigmoid_complex(raw)
    else:
        mag = np.abs(raw)
        e = np.exp(mag - mag.max(axis=(-2, -1), keepdims=True))
        score = e / e.sum(axis=(-2, -1), keepdims=True)
    inv = np.fft.irfft2(score.astype(complex), s=(h, w), axes=(-2, -1), norm="ortho")
    resid = x_img + inv
    mu = resid.mean(axis=(-3, -2, -1), keepdims=True)
    sd = np.sqrt(resid.var(axis=(-3, -2, -1), keepdims=True) + 1e-5)
    return gain[None, :, None, None] * (resid - mu) / sd + bias[None, :, None, None]


class TestAttentionFilterGate:
    def _layer(self, rng, score_mode="sigmoid_complex"):
        return AttentionFilterGateLayer(
            2, 2, 1, 8, 8, rng, dtype=np.float64, score_mode=score_mode
        )

    def test_degenerate_variance_errors_with_sample(self, rng):
        afg = self._layer(rng)
        afg.filter_gate.complex_weight.data[...] = 0.0
        g = Tensor(rng.standard_normal((3, 2, 8, 8)))
        x = Tensor(rng.standard_normal((3, 2, 8, 8)))
        with pytest.raises(NumericalError, match=r"sample\(s\) \[0, 1, 2\]"):
            afg.forward(g, x)

    @pytest.mark.parametrize("score_mode", ["sigmoid_complex", "softmax"])
    def test_matches_straight_line_oracle(self, rng, score_mode):
        afg = self._layer(rng, score_mode)
        g = rng.standard_normal((2, 2, 8, 8))
        x = rng.standard_normal((2, 2, 8, 8))
        out = afg.forward(Tensor(g), Tensor(x)).data
        w_g = (
            afg.filter_gate.complex_weight.data[..., 0]
            + 1j * afg.filter_gate.complex_weight.data[..., 1]
        )
        w_x = (
            afg.filter_skip.complex_weight.data[..., 0]
            + 1j * afg.filter_skip.complex_weight.data[..., 1]
        )
        want = afg_oracle(
            g, x, w_g, w_x, afg.ln_gain.data, afg.ln_bias.data, score_mode
        )
        assert np.abs(out - want).max() < 1e-6

    def test_unit_weights_oracle(self, rng):
        afg = self._layer(rng)
        unit_weights(afg.filter_gate)
        unit_weights(afg.filter_skip)
        g = rng.standard_normal((1, 2, 8, 8))
        x = rng.standard_normal((1, 2, 8, 8))
        out = afg.forward(Tensor(g), Tensor(x)).data
        ones = np.ones((2, 8, 5), dtype=complex)
        want = afg_oracle(g, x, ones, ones, afg.ln_gain.data, afg.ln_bias.data)
        assert np.abs(out - want).max() < 1e-6

    def test_output_shape_and_prenorm_stats(self, rng):
        afg = self._layer(rng)
        g = Tensor(rng.standard_normal((2, 2, 8, 8)))
        x = Tensor(rng.standard_normal((2, 2, 8, 8)))
        internals = afg.forward_with_internals(g, x)
        out = internals["out"]
        assert out.shape == x.shape
        # gain 1 / bias 0 at init: outputs carry the layer_norm contract
        mu = out.data.mean(axis=(1, 2, 3))
        var = out.data.var(axis=(1, 2, 3))
        assert np.abs(mu).max() < 1e-6
        assert np.abs(var - 1.0).max() < 1e-4

    def test_spatial_outputs_available_for_diagnostics(self, rng):
        afg = self._layer(rng)
        internals = afg.forward_with_internals(
            Tensor(rng.standard_normal((1, 2, 8, 8))),
            Tensor(rng.standard_normal((1, 2, 8, 8))),
        )
        assert internals["g_spatial"].shape == (1, 2, 8, 8)
        assert internals["x_spatial"].shape == (1, 2, 8, 8)

    def test_shape_mismatch(self, rng):
        afg = self._layer(rng)
        with pytest.raises(ShapeError):
            afg.forward(
                Tensor(np.zeros((1, 2, 8, 8))), Tensor(np.zeros((1, 2, 4, 4)))
            )

    @pytest.mark.parametrize("shape", [(1, 2, 8, 8), (2, 4, 8, 8)])
    def test_gradients_full_gate(self, rng, shape):
        afg = AttentionFilterGateLayer(
            shape[1], shape[1], 1, 8, 8, rng, dtype=np.float64
        )
        g = Tensor(rng.standard_normal(shape))
        x = Tensor(rng.standard_normal(shape))
        r = grad_check(lambda a, b: afg.forward(a, b), [g, x], eps=1e-5, tol=1e-5)
        assert r.passed, r

    def test_gradients_parameters(self, rng):
        afg = self._layer(rng)
        g = Tensor(rng.standard_normal((1, 2, 8, 8)))
        x = Tensor(rng.standard_normal((1, 2, 8, 8)))
        params = [
            afg.filter_gate.complex_weight,
            afg.filter_skip.complex_weight,
            afg.ln_gain,
            afg.ln_bias,
        ]
        # eps 1e-6: the 0.02-scale weights leave eps^2 truncation at 1e-5 otherwise
        r = grad_check(lambda *p: afg.forward(g, x), params, eps=1e-6, tol=1e-5)
        assert r.passed, r

    def test_channel_mismatch_rejected(self, rng):
        with pytest.raises(ShapeError):
            AttentionFilterGateLayer(2, 4, 1, 8, 8, rng)


class TestAttentionGate:
    def test_zero_psi_gives_half_gain(self, rng):
        ag = AttentionGateLayer(2, 2, 3, rng, dtype=np.float64)
        ag.psi.data[...] = 0.0
        ag.psi_bias.data[...] = 0.0
        x = Tensor(rng.standard_normal((2, 2, 6, 6)))
        out = ag.forward(Tensor(rng.standard_normal((2, 2, 6, 6))), x)
        assert np.abs(out.data - 0.5 * x.data).max() < 1e-12

    def test_saturated_psi_passes_input(self, rng):
        ag = AttentionGateLayer(1, 1, 1, rng, dtype=np.float64)
        ag.w_gate.data[...] = 0.0
        ag.w_skip.data[...] = 0.0
        ag.bias.data[...] = 100.0  # relu passes, psi logit huge
        ag.psi.data[...] = 100.0
        x = Tensor(rng.standard_normal((1, 1, 4, 4)))
        out = ag.forward(Tensor(rng.standard_normal((1, 1, 4, 4))), x)
        assert np.abs(out.data - x.data).max() < 1e-9

    def test_matches_primitive_composition(self, rng):
        ag = AttentionGateLayer(2, 2, 3, rng, dtype=np.float64)
        g = rng.standard_normal((1, 2, 5, 5))
        x = rng.standard_normal((1, 2, 5, 5))
        out = ag.forward(Tensor(g), Tensor(x)).data
        # hand-composed: 1x1 convs are einsums over the channel axis
        pg = np.einsum("ic,bchw->bihw", ag.w_gate.data[:, :, 0, 0], g)
        px = np.einsum("ic,bchw->bihw", ag.w_skip.data[:, :, 0, 0], x)
        pre = np.maximum(pg + px + ag.bias.data[None, :, None, None], 0.0)
        logits = (
            np.einsum("ic,bchw->bihw", ag.psi.data[:, :, 0, 0], pre)
            + ag.psi_bias.data[None, :, None, None]
        )
        alpha = 1.0 / (1.0 + np.exp(-logits))
        assert np.abs(out - x * alpha).max() < 1e-12

    def test_gate_never_amplifies(self, rng):
        ag = AttentionGateLayer(2, 2, 1, rng, dtype=np.float64)
        x = Tensor(rng.standard_normal((2, 2, 8, 8)))
        out = ag.forward(Tensor(rng.standard_normal((2, 2, 8, 8))), x)
        assert np.all(np.abs(out.data) <= np.abs(x.data) + 1e-15)

    @pytest.mark.parametrize("shape", [(1, 2, 8, 8), (2, 4, 8, 8)])
    def test_gradients(self, rng, shape):
        ag = AttentionGateLayer(shape[1], shape[1], 2, rng, dtype=np.float64)
        g = Tensor(rng.standard_normal(shape))
        x = Tensor(rng.standard_normal(shape))
        r = grad_check(lambda a, b: ag.forward(a, b), [g, x], eps=1e-5, tol=1e-5)
        assert r.passed, r

    def test_parameter_gradients(self, rng):
        ag = AttentionGateLayer(2, 2, 2, rng, dtype=np.float64)
        g = Tensor(rng.standard_normal((1, 2, 6, 6)))
        x = Tensor(rng.standard_normal((1, 2, 6, 6)))
        params = list(ag.parameters().values())
        r = grad_check(lambda *p: ag.forward(g, x), params, eps=1e-5, tol=1e-5)
        assert r.passed, r
