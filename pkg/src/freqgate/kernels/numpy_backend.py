"""Pure-numpy implementations of the hot kernels.

Convolutions go through im2col + matmul so BLAS does the work; everything
else is vectorized slicing. Results must agree with the numba backend to
floating-point reduction-order differences only.
"""

import numpy as np

name = "numpy"


def _window_view(xp, kh, kw, stride):
    b, c, hp, wp = xp.shape
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    sb, sc, sh, sw = xp.strides
    return np.lib.stride_tricks.as_strided(
        xp,
        (b, c, ho, wo, kh, kw),
        (sb, sc, sh * stride, sw * stride, sh, sw),
        writeable=False,
    )


def conv2d_forward(x, w, bias, stride, ph, pw):
    cout, cin, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    win = _window_view(xp, kh, kw, stride)
    b, _, ho, wo = win.shape[0], win.shape[1], win.shape[2], win.shape[3]
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(
        b * ho * wo, cin * kh * kw
    )
    y = cols @ w.reshape(cout, -1).T
    y = y.reshape(b, ho, wo, cout).transpose(0, 3, 1, 2)
    if bias is not None:
        y = y + bias[None, :, None, None]
    return np.ascontiguousarray(y)


def conv2d_grad_input(gy, w, stride, ph, pw, h, wdt):
    b, cout, ho, wo = gy.shape
    _, cin, kh, kw = w.shape
    gxp = np.zeros((b, cin, h + 2 * ph, wdt + 2 * pw), dtype=gy.dtype)
    # t[b,i,j,c,u,v] = sum_o gy[b,o,i,j] w[o,c,u,v]
    t = np.tensordot(gy, w, axes=([1], [0]))
    for u in range(kh):
        for v in range(kw):
            gxp[:, :, u : u + ho * stride : stride, v : v + wo * stride : stride] += (
                t[..., u, v].transpose(0, 3, 1, 2)
            )
    return np.ascontiguousarray(gxp[:, :, ph : ph + h, pw : pw + wdt])


def conv2d_grad_weight(gy, x, kh, kw, stride, ph, pw):
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    win = _window_view(xp, kh, kw, stride)
    # gw[o,c,u,v] = sum_{b,i,j} gy[b,o,i,j] win[b,c,i,j,u,v]
    gw = np.einsum("boij,bcijuv->ocuv", gy, win, optimize=True)
    return np.ascontiguousarray(gw.astype(gy.dtype, copy=False))


def maxpool2_forward(x):
    b, c, h, w = x.shape
    win = x.reshape(b, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    flat = win.reshape(b, c, h // 2, w // 2, 4)
    # argmax returns the first maximum in row-major window order (tie rule)
    idx = flat.argmax(axis=-1).astype(np.uint8)
    y = np.take_along_axis(flat, idx[..., None].astype(np.intp), axis=-1)[..., 0]
    return np.ascontiguousarray(y), idx


def maxpool2_backward(gy, idx, h, w):
    b, c, ho, wo = gy.shape
    gwin = np.zeros((b, c, ho, wo, 4), dtype=gy.dtype)
    np.put_along_axis(gwin, idx[..., None].astype(np.intp), gy[..., None], axis=-1)
    gx = gwin.reshape(b, c, ho, wo, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, h, w)
    return np.ascontiguousarray(gx)


def warp_bilinear(img, ys, xs):
    h, w = img.shape
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    fy = ys - y0
    fx = xs - x0
    y0c = np.clip(y0, 0, h - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)
    x0c = np.clip(x0, 0, w - 1)
    x1c = np.clip(x0 + 1, 0, w - 1)
    v00 = img[y0c, x0c]
    v01 = img[y0c, x1c]
    v10 = img[y1c, x0c]
    v11 = img[y1c, x1c]
    top = v00 * (1.0 - fx) + v01 * fx
    bot = v10 * (1.0 - fx) + v11 * fx
    return (top * (1.0 - fy) + bot * fy).astype(img.dtype, copy=False)


def warp_nearest(img, ys, xs):
    h, w = img.shape
    yi = np.clip(np.rint(ys).astype(np.int64), 0, h - 1)
    xi = np.clip(np.rint(xs).astype(np.int64), 0, w - 1)
    return img[yi, xi]


def circular_conv2d_direct(f, g):
    """Direct circular convolution, O(H^2 W^2); serves as the FFT oracle."""
    h, w = f.shape
    out = np.zeros_like(f)
    for i in range(h):
        for j in range(w):
            # out[i,j] = sum_{u,v} f[u,v] g[(i-u) mod h, (j-v) mod w]
            gs = np.roll(np.roll(g[::-1, ::-1], i + 1, axis=0), j + 1, axis=1)
            out[i, j] = np.sum(f * gs)
    return out
