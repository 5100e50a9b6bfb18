"""Small numpy convolution kernels (NHWC layout, zero 'same' padding).

Weights are stored as ``(cout, cin, k, k)``; im2col columns are ordered
``(ky, kx, cin)``, so use :func:`flat_weight` to match them.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def im2col(x, k=3):
    """(N, H, W, C) -> (N*H*W, k*k*C) with 'same' zero padding."""
    p = k // 2
    n, h, w, c = x.shape
    cols = np.zeros((n, h, w, k, k, c), dtype=x.dtype)
    for ky in range(k):
        dy = ky - p
        ys, yd = slice(max(dy, 0), h + min(dy, 0)), slice(max(-dy, 0), h - max(dy, 0))
        for kx in range(k):
            dx = kx - p
            xs, xd = slice(max(dx, 0), w + min(dx, 0)), slice(max(-dx, 0), w - max(dx, 0))
            cols[:, yd, xd, ky, kx, :] = x[:, ys, xs, :]
    return cols.reshape(n * h * w, k * k * c)


def flat_weight(weight):
    """(..., cout, cin, k, k) -> (..., cout, k*k*cin) matching :func:`im2col`."""
    w = np.moveaxis(weight, -3, -1)
    return w.reshape(*w.shape[:-3], -1)


def unflat_weight(flat, shape):
    cout, cin, k, _ = shape[-4:]
    w = flat.reshape(*flat.shape[:-1], k, k, cin)
    return np.moveaxis(w, -1, -3)


def col2im(dcols, shape, k=3):
    """Adjoint of :func:`im2col`."""
    p = k // 2
    n, h, w, c = shape
    d = dcols.reshape(n, h, w, k, k, c)
    dxp = np.zeros((n, h + 2 * p, w + 2 * p, c), dtype=dcols.dtype)
    for ky in range(k):
        for kx in range(k):
            dxp[:, ky:ky + h, kx:kx + w, :] += d[:, :, :, ky, kx, :]
    return dxp[:, p:p + h, p:p + w, :]


def conv2d(x, weight, bias=None, stride=1):
    n, h, w, _ = x.shape
    cout, cin, k, _ = weight.shape
    cols = im2col(x, k)
    y = cols @ flat_weight(weight).T
    if bias is not None:
        y += bias
    y = y.reshape(n, h, w, cout)
    if stride > 1:
        y = y[:, ::stride, ::stride, :]
    return y


def conv3d(x, weight, bias=None):
    """'same' 3x3x3 convolution on (D, H, W, C)."""
    cout, cin, k, _, _ = weight.shape
    p = k // 2
    d, h, w, c = x.shape
    xp = np.pad(x, ((p, p), (p, p), (p, p), (0, 0)))
    win = sliding_window_view(xp, (k, k, k), axis=(0, 1, 2))  # D, H, W, C, k, k, k
    cols = win.reshape(d * h * w, c * k ** 3)
    y = cols @ weight.reshape(cout, -1).T
    if bias is not None:
        y += bias
    return y.reshape(d, h, w, cout)


def upsample2(x):
    """Nearest-neighbour x2 upsampling of (N, H, W, C)."""
    return x.repeat(2, axis=1).repeat(2, axis=2)
