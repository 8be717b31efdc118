"""Differentiable 2D real-FFT ops over the spatial axes.

Forward transforms use orthonormal scaling (1/sqrt(HW) both ways) so the
transform is energy preserving. Adjoints account for the half-spectrum
storage: stored columns other than DC and Nyquist stand in for their
conjugate mirrors, so their cotangents carry a factor of 2.

All spectra are stored as float arrays with a trailing (re, im) axis;
gradients are plain real arrays of the same shape (split adjoints on the
real and imaginary parts).
"""

from __future__ import annotations

import numpy as np

from .errors import NumericalError, ShapeError
from .tensor import Spectrum, Tensor, _as_tensor, current_scope, record_op


def _column_weights(width, half_width, dtype):
    """1 on self-conjugate columns (DC, Nyquist if width even), 2 elsewhere."""
    w = np.full(half_width, 2.0, dtype=dtype)
    w[0] = 1.0
    if width % 2 == 0:
        w[-1] = 1.0
    return w


def _split(c):
    return np.ascontiguousarray(np.stack([c.real, c.imag], axis=-1))


def _join(reim):
    return reim[..., 0] + 1j * reim[..., 1]


def rfft2(x: Tensor) -> Spectrum:
    """Orthonormal half-spectrum FFT over the last two axes of a rank-4 tensor."""
    x = _as_tensor(x)
    if x.ndim != 4:
        raise ShapeError(f"rfft2 expects rank-4 input, got rank {x.ndim}")
    h, w = x.shape[2], x.shape[3]
    if h < 1 or w < 1:
        raise ShapeError("rfft2 needs spatial extents >= 1")
    spec = np.fft.rfft2(x.data, axes=(-2, -1), norm="ortho")
    colw = _column_weights(w, spec.shape[-1], x.dtype)

    def vjp(g):
        gc = _join(g) / colw
        return (
            np.fft.irfft2(gc, s=(h, w), axes=(-2, -1), norm="ortho").astype(
                x.dtype, copy=False
            ),
        )

    return record_op(
        "rfft2", _split(spec), (x,), vjp, out_cls=Spectrum, source_width=w
    )


def irfft2(s: Spectrum, out_h: int, out_w: int) -> Tensor:
    """Inverse of rfft2 back to an out_h x out_w real tensor."""
    if not isinstance(s, Spectrum):
        raise ShapeError("irfft2 expects a Spectrum")
    if s.source_width != out_w or s.shape[2] != out_h:
        raise ShapeError(
            f"spectrum sized for {s.shape[2]}x{s.source_width}, "
            f"requested inverse {out_h}x{out_w}"
        )
    colw = _column_weights(out_w, s.shape[3], s.dtype)
    y = np.fft.irfft2(s.complex_view, s=(out_h, out_w), axes=(-2, -1), norm="ortho")

    def vjp(g):
        gs = np.fft.fft2(g, axes=(-2, -1), norm="ortho")[..., : s.shape[3]] * colw
        return (_split(gs).astype(s.dtype, copy=False),)

    return record_op("irfft2", y.astype(s.dtype, copy=False), (s,), vjp)


def complex_mul(s: Spectrum, w: Tensor) -> Spectrum:
    """Elementwise complex product; w broadcasts over the batch axis.

    w is a real tensor of shape channel x H x Wh x 2 (or the full spectrum
    shape) holding (re, im) pairs.
    """
    if not isinstance(s, Spectrum):
        raise ShapeError("complex_mul expects a Spectrum first operand")
    w = w if isinstance(w, Tensor) else Tensor(w, dtype=s.dtype)
    if w.shape[-1] != 2:
        raise ShapeError("complex weights need a trailing (re, im) axis")
    if w.shape[-4:-1] != s.shape[1:4]:
        raise ShapeError(
            f"weight shape {w.shape} not broadcastable to spectrum {s.shape}"
        )
    a = s.complex_view
    b = _join(w.data)
    out = a * b

    def vjp(g):
        gc = _join(g)
        gs = _split(gc * np.conj(b)).astype(s.dtype, copy=False) if s.requires_grad else None
        gw = None
        if w.requires_grad:
            gwc = gc * np.conj(a)
            if w.ndim < gwc.ndim + 1:
                gwc = gwc.sum(axis=0)
            gw = _split(gwc).astype(w.dtype, copy=False)
        return gs, gw

    return record_op(
        "complex_mul", _split(out), (s, w), vjp, out_cls=Spectrum,
        source_width=s.source_width,
    )


def conj_mul(a: Spectrum, b: Spectrum) -> Spectrum:
    """Elementwise conj(a) * b, a frequency-domain correlation."""
    if not isinstance(a, Spectrum) or not isinstance(b, Spectrum):
        raise ShapeError("conj_mul expects two Spectrum operands")
    if a.shape != b.shape:
        raise ShapeError(f"spectrum shape mismatch {a.shape} vs {b.shape}")
    ac = a.complex_view
    bc = b.complex_view
    out = np.conj(ac) * bc

    def vjp(g):
        gc = _join(g)
        ga = _split(np.conj(gc) * bc).astype(a.dtype, copy=False) if a.requires_grad else None
        gb = _split(gc * ac).astype(b.dtype, copy=False) if b.requires_grad else None
        return ga, gb

    return record_op(
        "conj_mul", _split(out), (a, b), vjp, out_cls=Spectrum,
        source_width=a.source_width,
    )


def variance_spatial(s: Spectrum) -> Tensor:
    """Population variance of the complex entries over the two spectral axes.

    Computed as var(re) + var(im), which equals E|z - mean(z)|^2; returns a
    real batch x channel x 1 x 1 tensor.
    """
    if not isinstance(s, Spectrum):
        raise ShapeError("variance_spatial expects a Spectrum")
    re = s.data[..., 0]
    im = s.data[..., 1]
    var = re.var(axis=(2, 3)) + im.var(axis=(2, 3))
    out = var[:, :, None, None]
    n = s.shape[2] * s.shape[3]

    def vjp(g):
        gb = g[..., None]  # broadcast (B,C,1,1,1) over bins and re/im
        dre = 2.0 * (re - re.mean(axis=(2, 3), keepdims=True)) / n
        dim = 2.0 * (im - im.mean(axis=(2, 3), keepdims=True)) / n
        return (np.stack([dre, dim], axis=-1) * gb,)

    return record_op("variance_spatial", out, (s,), vjp)


def spectrum_scale(s: Spectrum, t: Tensor) -> Spectrum:
    """Scale a spectrum by a real per-(sample, channel) factor."""
    if not isinstance(s, Spectrum):
        raise ShapeError("spectrum_scale expects a Spectrum")
    if t.shape != (s.shape[0], s.shape[1], 1, 1):
        raise ShapeError(f"scale tensor must be batch x channel x 1 x 1, got {t.shape}")
    factor = t.data[..., None]
    out = s.data * factor

    def vjp(g):
        gs = g * factor if s.requires_grad else None
        gt = (
            (g * s.data).sum(axis=(2, 3, 4))[:, :, None, None]
            if t.requires_grad
            else None
        )
        return gs, gt

    return record_op(
        "spectrum_scale", out, (s, t), vjp, out_cls=Spectrum,
        source_width=s.source_width,
    )


def sigmoid_complex_field(s: Spectrum) -> Tensor:
    """SigmoidComplex applied per bin: sigmoid(|z|) * cos(angle(z)).

    Returns the real score field batch x channel x H x Wh. Gradients of |z|
    and angle(z) at the origin are taken as 0.
    """
    if not isinstance(s, Spectrum):
        raise ShapeError("sigmoid_complex_field expects a Spectrum")
    a = s.data[..., 0]
    b = s.data[..., 1]
    r = np.hypot(a, b)
    sig = 1.0 / (1.0 + np.exp(-r))
    nz = r > 1e-30
    out = np.where(nz, sig * np.divide(a, r, out=np.ones_like(r), where=nz), sig)

    def vjp(g):
        dsig = sig * (1.0 - sig)
        with np.errstate(divide="ignore", invalid="ignore"):
            r2 = r * r
            r3 = r2 * r
            da = np.where(nz, dsig * a * a / r2 + sig * b * b / r3, 0.0)
            db = np.where(nz, a * b * (dsig * r - sig) / r3, 0.0)
        return (np.stack([g * da, g * db], axis=-1),)

    return record_op("sigmoid_complex", out, (s,), vjp)


def magnitude_field(s: Spectrum) -> Tensor:
    """|z| per bin as a real tensor; gradient at the origin is 0."""
    if not isinstance(s, Spectrum):
        raise ShapeError("magnitude_field expects a Spectrum")
    a = s.data[..., 0]
    b = s.data[..., 1]
    r = np.hypot(a, b)
    nz = r > 1e-30

    def vjp(g):
        with np.errstate(divide="ignore", invalid="ignore"):
            da = np.where(nz, a / r, 0.0)
            db = np.where(nz, b / r, 0.0)
        return (np.stack([g * da, g * db], axis=-1),)

    return record_op("magnitude", r, (s,), vjp)


def lift_real(t: Tensor, source_width: int) -> Spectrum:
    """Lift a real score field to a spectrum with zero imaginary part."""
    t = _as_tensor(t)
    if t.ndim != 4:
        raise ShapeError("lift_real expects a rank-4 tensor")
    out = np.stack([t.data, np.zeros_like(t.data)], axis=-1)

    def vjp(g):
        return (np.ascontiguousarray(g[..., 0]),)

    return record_op(
        "lift_real", out, (t,), vjp, out_cls=Spectrum, source_width=source_width
    )


def check_nonzero_variance(var: Tensor, what="gate spectrum"):
    """Raise when any per-sample variance is exactly degenerate."""
    flat = var.data.reshape(var.shape[0], -1)
    bad = np.where((flat == 0).any(axis=1))[0]
    if bad.size:
        raise NumericalError(
            f"zero spectral variance for sample(s) {bad.tolist()} in {what}; "
            "the gate score is undefined for a constant spectrum",
            op="variance_spatial",
            scope=current_scope(),
        )
