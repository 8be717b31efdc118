"""numba @njit implementations of the hot kernels.

The 3x3 stride-1 "same" and 1x1 convolutions that dominate the U-Net get
specialized kernels whose inner loops carry literal offsets, which is what
lets LLVM vectorize them; everything else takes the generic path. All
kernels are single-threaded, so results are bit-reproducible run to run.
"""

import numpy as np
from numba import njit

name = "numba"


# ---------------------------------------------------------------- conv2d --

@njit(cache=True, fastmath=True)
def _conv3x3_same(x, w, bias):
    b, cin, h, wd = x.shape
    cout = w.shape[0]
    y = np.empty((b, cout, h, wd), dtype=x.dtype)
    for bb in range(b):
        for o in range(cout):
            for i in range(h):
                row = np.full(wd, bias[o], dtype=x.dtype)
                for c in range(cin):
                    for u in range(3):
                        ii = i - 1 + u
                        if ii < 0 or ii >= h:
                            continue
                        xrow = x[bb, c, ii]
                        w0 = w[o, c, u, 0]
                        w1 = w[o, c, u, 1]
                        w2 = w[o, c, u, 2]
                        for j in range(1, wd - 1):
                            row[j] += w0 * xrow[j - 1] + w1 * xrow[j] + w2 * xrow[j + 1]
                        row[0] += w1 * xrow[0] + w2 * xrow[1]
                        row[wd - 1] += w0 * xrow[wd - 2] + w1 * xrow[wd - 1]
                y[bb, o, i] = row
    return y


@njit(cache=True, fastmath=True)
def _conv1x1(x, w, bias):
    b, cin, h, wd = x.shape
    cout = w.shape[0]
    y = np.empty((b, cout, h, wd), dtype=x.dtype)
    for bb in range(b):
        for o in range(cout):
            for i in range(h):
                row = np.full(wd, bias[o], dtype=x.dtype)
                for c in range(cin):
                    wt = w[o, c, 0, 0]
                    xrow = x[bb, c, i]
                    for j in range(wd):
                        row[j] += wt * xrow[j]
                y[bb, o, i] = row
    return y


@njit(cache=True)
def _conv_generic(x, w, bias, stride, ph, pw):
    b, cin, h, wd = x.shape
    cout, _, kh, kw = w.shape
    ho = (h + 2 * ph - kh) // stride + 1
    wo = (wd + 2 * pw - kw) // stride + 1
    y = np.empty((b, cout, ho, wo), dtype=x.dtype)
    for bb in range(b):
        for o in range(cout):
            for i in range(ho):
                i0 = i * stride - ph
                for j in range(wo):
                    j0 = j * stride - pw
                    acc = bias[o]
                    for c in range(cin):
                        for u in range(kh):
                            ii = i0 + u
                            if ii < 0 or ii >= h:
                                continue
                            for v in range(kw):
                                jj = j0 + v
                                if 0 <= jj < wd:
                                    acc += x[bb, c, ii, jj] * w[o, c, u, v]
                    y[bb, o, i, j] = acc
    return y


def conv2d_forward(x, w, bias, stride, ph, pw):
    kh, kw = w.shape[2], w.shape[3]
    if stride == 1 and kh == 3 and kw == 3 and ph == 1 and pw == 1:
        return _conv3x3_same(x, w, bias)
    if stride == 1 and kh == 1 and kw == 1 and ph == 0 and pw == 0:
        return _conv1x1(x, w, bias)
    return _conv_generic(x, w, bias, stride, ph, pw)


@njit(cache=True)
def _conv_grad_input_generic(gy, w, stride, ph, pw, h, wd):
    b, cout, ho, wo = gy.shape
    cin = w.shape[1]
    kh = w.shape[2]
    kw = w.shape[3]
    gx = np.zeros((b, cin, h, wd), dtype=gy.dtype)
    for bb in range(b):
        for o in range(cout):
            for i in range(ho):
                i0 = i * stride - ph
                for j in range(wo):
                    j0 = j * stride - pw
                    g = gy[bb, o, i, j]
                    for c in range(cin):
                        for u in range(kh):
                            ii = i0 + u
                            if ii < 0 or ii >= h:
                                continue
                            for v in range(kw):
                                jj = j0 + v
                                if 0 <= jj < wd:
                                    gx[bb, c, ii, jj] += g * w[o, c, u, v]
    return gx


def conv2d_grad_input(gy, w, stride, ph, pw, h, wd):
    kh, kw = w.shape[2], w.shape[3]
    gy = np.ascontiguousarray(gy)
    # for unit-stride same-size cases the input gradient is itself a
    # convolution with the channel-transposed, spatially flipped kernel
    if stride == 1 and kh == 3 and kw == 3 and ph == 1 and pw == 1:
        wt = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
        zeros = np.zeros(wt.shape[0], dtype=gy.dtype)
        return _conv3x3_same(gy, wt, zeros)
    if stride == 1 and kh == 1 and kw == 1 and ph == 0 and pw == 0:
        wt = np.ascontiguousarray(w.transpose(1, 0, 2, 3))
        zeros = np.zeros(wt.shape[0], dtype=gy.dtype)
        return _conv1x1(gy, wt, zeros)
    return _conv_grad_input_generic(gy, w, stride, ph, pw, h, wd)


@njit(cache=True, fastmath=True)
def _conv3x3_same_grad_weight(gy, x):
    b, cout, h, wd = gy.shape
    cin = x.shape[1]
    gw = np.zeros((cout, cin, 3, 3), dtype=gy.dtype)
    for bb in range(b):
        for o in range(cout):
            for i in range(h):
                grow = gy[bb, o, i]
                for c in range(cin):
                    for u in range(3):
                        ii = i - 1 + u
                        if ii < 0 or ii >= h:
                            continue
                        xrow = x[bb, c, ii]
                        a0 = gy.dtype.type(0.0)
                        a1 = gy.dtype.type(0.0)
                        a2 = gy.dtype.type(0.0)
                        for j in range(1, wd - 1):
                            g = grow[j]
                            a0 += g * xrow[j - 1]
                            a1 += g * xrow[j]
                            a2 += g * xrow[j + 1]
                        a1 += grow[0] * xrow[0]
                        a2 += grow[0] * xrow[1]
                        a0 += grow[wd - 1] * xrow[wd - 2]
                        a1 += grow[wd - 1] * xrow[wd - 1]
                        gw[o, c, u, 0] += a0
                        gw[o, c, u, 1] += a1
                        gw[o, c, u, 2] += a2
    return gw


@njit(cache=True, fastmath=True)
def _conv1x1_grad_weight(gy, x):
    b, cout, h, wd = gy.shape
    cin = x.shape[1]
    gw = np.zeros((cout, cin, 1, 1), dtype=gy.dtype)
    for bb in range(b):
        for o in range(cout):
            for c in range(cin):
                acc = gy.dtype.type(0.0)
                for i in range(h):
                    grow = gy[bb, o, i]
                    xrow = x[bb, c, i]
                    for j in range(wd):
                        acc += grow[j] * xrow[j]
                gw[o, c, 0, 0] += acc
    return gw


@njit(cache=True)
def _conv_grad_weight_generic(gy, x, kh, kw, stride, ph, pw):
    b, cout, ho, wo = gy.shape
    cin = x.shape[1]
    h = x.shape[2]
    wd = x.shape[3]
    gw = np.zeros((cout, cin, kh, kw), dtype=gy.dtype)
    for bb in range(b):
        for o in range(cout):
            for i in range(ho):
                i0 = i * stride - ph
                for j in range(wo):
                    j0 = j * stride - pw
                    g = gy[bb, o, i, j]
                    for c in range(cin):
                        for u in range(kh):
                            ii = i0 + u
                            if ii < 0 or ii >= h:
                                continue
                            for v in range(kw):
                                jj = j0 + v
                                if 0 <= jj < wd:
                                    gw[o, c, u, v] += g * x[bb, c, ii, jj]
    return gw


def conv2d_grad_weight(gy, x, kh, kw, stride, ph, pw):
    gy = np.ascontiguousarray(gy)
    if stride == 1 and kh == 3 and kw == 3 and ph == 1 and pw == 1:
        return _conv3x3_same_grad_weight(gy, x)
    if stride == 1 and kh == 1 and kw == 1 and ph == 0 and pw == 0:
        return _conv1x1_grad_weight(gy, x)
    return _conv_grad_weight_generic(gy, x, kh, kw, stride, ph, pw)


# --------------------------------------------------------------- pooling --

@njit(cache=True)
def maxpool2_forward(x):
    b, c, h, w = x.shape
    ho = h // 2
    wo = w // 2
    y = np.empty((b, c, ho, wo), dtype=x.dtype)
    idx = np.empty((b, c, ho, wo), dtype=np.uint8)
    for bb in range(b):
        for cc in range(c):
            for i in range(ho):
                for j in range(wo):
                    best = x[bb, cc, 2 * i, 2 * j]
                    k = 0
                    # strict > keeps the first maximum in row-major order
                    for t in range(1, 4):
                        v = x[bb, cc, 2 * i + t // 2, 2 * j + t % 2]
                        if v > best:
                            best = v
                            k = t
                    y[bb, cc, i, j] = best
                    idx[bb, cc, i, j] = k
    return y, idx


@njit(cache=True)
def maxpool2_backward(gy, idx, h, w):
    b, c, ho, wo = gy.shape
    gx = np.zeros((b, c, h, w), dtype=gy.dtype)
    for bb in range(b):
        for cc in range(c):
            for i in range(ho):
                for j in range(wo):
                    k = idx[bb, cc, i, j]
                    gx[bb, cc, 2 * i + k // 2, 2 * j + k % 2] += gy[bb, cc, i, j]
    return gx


# ----------------------------------------------------------------- warps --

@njit(cache=True)
def warp_bilinear(img, ys, xs):
    h, w = img.shape
    ho, wo = ys.shape
    out = np.empty((ho, wo), dtype=img.dtype)
    for i in range(ho):
        for j in range(wo):
            y = ys[i, j]
            x = xs[i, j]
            y0 = int(np.floor(y))
            x0 = int(np.floor(x))
            fy = y - y0
            fx = x - x0
            y0c = min(max(y0, 0), h - 1)
            y1c = min(max(y0 + 1, 0), h - 1)
            x0c = min(max(x0, 0), w - 1)
            x1c = min(max(x0 + 1, 0), w - 1)
            top = img[y0c, x0c] * (1.0 - fx) + img[y0c, x1c] * fx
            bot = img[y1c, x0c] * (1.0 - fx) + img[y1c, x1c] * fx
            out[i, j] = top * (1.0 - fy) + bot * fy
    return out


@njit(cache=True)
def warp_nearest(img, ys, xs):
    h, w = img.shape
    ho, wo = ys.shape
    out = np.empty((ho, wo), dtype=img.dtype)
    for i in range(ho):
        for j in range(wo):
            yi = min(max(int(np.rint(ys[i, j])), 0), h - 1)
            xi = min(max(int(np.rint(xs[i, j])), 0), w - 1)
            out[i, j] = img[yi, xi]
    return out


# ------------------------------------------------------------- benchmark --

@njit(cache=True)
def circular_conv2d_direct(f, g):
    h, w = f.shape
    out = np.zeros_like(f)
    for i in range(h):
        for j in range(w):
            acc = 0.0
            for u in range(h):
                iu = (i - u) % h
                for v in range(w):
                    acc += f[u, v] * g[iu, (j - v) % w]
            out[i, j] = acc
    return out
