"""Independent reference implementations used only by the tests.

Everything here is deliberately slow and literal: explicit loops over every
index, scalar kernel evaluation, central finite differences.
"""

import math

import numpy as np


def conv2d_bruteforce(x, weights, bias):
    n, c_in, h, w = x.shape
    c_out, _, kh, kw = weights.shape
    ph, pw = (kh - 1) // 2, (kw - 1) // 2
    out = np.zeros((n, c_out, h, w), dtype=np.float64)
    for b in range(n):
        for o in range(c_out):
            for y in range(h):
                for xx in range(w):
                    acc = float(bias[o])
                    for i in range(c_in):
                        for dy in range(kh):
                            for dx in range(kw):
                                yy, xs = y + dy - ph, xx + dx - pw
                                if 0 <= yy < h and 0 <= xs < w:
                                    acc += float(x[b, i, yy, xs]) * float(weights[o, i, dy, dx])
                    out[b, o, y, xx] = acc
    return out


def central_difference(f, arr, step=1e-5):
    """Gradient of scalar ``f()`` w.r.t. every entry of ``arr`` (perturbed in place)."""
    grad = np.zeros_like(arr, dtype=np.float64)
    flat = arr.reshape(-1)
    g = grad.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + step
        fp = f()
        flat[k] = orig - step
        fm = f()
        flat[k] = orig
        g[k] = (fp - fm) / (2 * step)
    return grad


def keys(t, a=-0.5):
    t = abs(t)
    if t <= 1:
        return (a + 2) * t**3 - (a + 3) * t**2 + 1
    if t < 2:
        return a * t**3 - 5 * a * t**2 + 8 * a * t - 4 * a
    return 0.0


def upsample_pointwise(img, scale):
    """Bicubic upsampling of a 2-D array by direct per-pixel kernel evaluation."""
    h, w = img.shape
    out = np.zeros((h * scale, w * scale))
    for yo in range(h * scale):
        sy = (yo + 0.5) / scale - 0.5
        for xo in range(w * scale):
            sx = (xo + 0.5) / scale - 0.5
            acc = 0.0
            for ty in range(math.floor(sy) - 1, math.floor(sy) + 3):
                wy = keys(sy - ty)
                for tx in range(math.floor(sx) - 1, math.floor(sx) + 3):
                    wx = keys(sx - tx)
                    acc += wy * wx * img[min(max(ty, 0), h - 1), min(max(tx, 0), w - 1)]
            out[yo, xo] = acc
    return out


def downsample_pointwise(img, scale):
    """Anti-aliased bicubic decimation: stretched kernel, normalized weights, clamped edges."""
    h, w = img.shape

    def weights_1d(center, n_in):
        taps = {}
        lo = math.floor(center - 2 * scale)
        for t in range(lo, lo + 4 * scale + 2):
            wt = keys((t - center) / scale)
            if wt != 0.0:
                idx = min(max(t, 0), n_in - 1)
                taps[idx] = taps.get(idx, 0.0) + wt
        total = sum(taps.values())
        return {k: v / total for k, v in taps.items()}

    out = np.zeros((h // scale, w // scale))
    for yo in range(h // scale):
        wy = weights_1d((yo + 0.5) * scale - 0.5, h)
        for xo in range(w // scale):
            wx = weights_1d((xo + 0.5) * scale - 0.5, w)
            out[yo, xo] = sum(vy * vx * img[iy, ix] for iy, vy in wy.items() for ix, vx in wx.items())
    return out


def q_block(x, y):
    """Universal image quality index of two equal-size 2-D blocks."""
    x = x.astype(np.float64).ravel()
    y = y.astype(np.float64).ravel()
    mx, my = x.mean(), y.mean()
    vx = ((x - mx) ** 2).mean()
    vy = ((y - my) ** 2).mean()
    cxy = ((x - mx) * (y - my)).mean()
    return 4 * cxy * mx * my / ((vx + vy) * (mx**2 + my**2))
