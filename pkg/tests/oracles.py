"""Slow, loop-based reference implementations used only by the tests."""
import math

import numpy as np


def _pad_low(size, k, s):
    out = math.ceil(size / s)
    total = max((out - 1) * s + k - size, 0)
    return total // 2


def conv2d_direct(x, w, b=None, stride=(1, 1)):
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    sh, sw = stride
    ho, wo = math.ceil(h / sh), math.ceil(wd / sw)
    pt, pl = _pad_low(h, kh, sh), _pad_low(wd, kw, sw)
    out = np.zeros((n, o, ho, wo))
    for nn in range(n):
        for oo in range(o):
            for r in range(ho):
                for q in range(wo):
                    acc = 0.0 if b is None else float(b[oo])
                    for ci in range(c):
                        for i in range(kh):
                            for j in range(kw):
                                rr, cc = r * sh + i - pt, q * sw + j - pl
                                if 0 <= rr < h and 0 <= cc < wd:
                                    acc += w[oo, ci, i, j] * x[nn, ci, rr, cc]
                    out[nn, oo, r, q] = acc
    return out


def convtranspose2d_direct(y, w, b, target, stride=(2, 2)):
    n, i_ch, ho, wo = y.shape
    _, c, kh, kw = w.shape
    h, wd = target
    sh, sw = stride
    pt, pl = _pad_low(h, kh, sh), _pad_low(wd, kw, sw)
    out = np.zeros((n, c, h, wd))
    for nn in range(n):
        for o in range(i_ch):
            for r in range(ho):
                for q in range(wo):
                    for cc in range(c):
                        for i in range(kh):
                            for j in range(kw):
                                rr, col = r * sh + i - pt, q * sw + j - pl
                                if 0 <= rr < h and 0 <= col < wd:
                                    out[nn, cc, rr, col] += w[o, cc, i, j] * y[nn, o, r, q]
    if b is not None:
        out += np.asarray(b).reshape(1, -1, 1, 1)
    return out


def maxpool_direct(x):
    n, c, h, w = x.shape
    ho, wo = math.ceil(h / 2), math.ceil(w / 2)
    out = np.zeros((n, c, ho, wo))
    idx = np.zeros((n, c, ho, wo), dtype=int)
    for nn in range(n):
        for cc in range(c):
            for r in range(ho):
                for q in range(wo):
                    best, arg = -np.inf, -1
                    for i in range(2):
                        for j in range(2):
                            rr, col = 2 * r + i, 2 * q + j
                            if rr < h and col < w and x[nn, cc, rr, col] > best:
                                best, arg = x[nn, cc, rr, col], rr * w + col
                    out[nn, cc, r, q] = best
                    idx[nn, cc, r, q] = arg
    return out, idx


def maxpool_backward_direct(grad, x):
    _, idx = maxpool_direct(x)
    n, c, h, w = x.shape
    g = np.zeros(x.shape)
    for nn in range(n):
        for cc in range(c):
            for r in range(idx.shape[2]):
                for q in range(idx.shape[3]):
                    k = idx[nn, cc, r, q]
                    g[nn, cc, k // w, k % w] += grad[nn, cc, r, q]
    return g


def adam_scalar(theta, grads, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    trace = []
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        theta = theta - lr * (m / (1 - b1 ** t)) / (math.sqrt(v / (1 - b2 ** t)) + eps)
        trace.append(theta)
    return trace


def joint_error_direct(a, b, frames=None):
    """Loop over frames and joints of two 69 x T matrices."""
    t = a.shape[1]
    frames = range(t) if frames is None else frames
    terms = []
    for f in frames:
        for j in range(22):
            d = 0.0
            for k in range(3):
                d += (a[3 * j + k, f] - b[3 * j + k, f]) ** 2
            terms.append(math.sqrt(d))
    return float(np.mean(terms))


def numeric_grad(f, x, eps=1e-6):
    g = np.zeros_like(x)
    flat, gf = x.reshape(-1), g.reshape(-1)
    for k in range(flat.size):
        o = flat[k]
        flat[k] = o + eps
        fp = f(x)
        flat[k] = o - eps
        fm = f(x)
        flat[k] = o
        gf[k] = (fp - fm) / (2 * eps)
    return g
