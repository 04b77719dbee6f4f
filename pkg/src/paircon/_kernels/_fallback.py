"""Numpy implementations of the hot kernels.

Used when the compiled ``_core`` extension is unavailable or when
``PAIRCON_PURE_PYTHON=1`` is set. Results match the compiled versions.
"""
import numpy as np


def _axis_coords(start, length, out_len):
    scale = length / out_len
    pos = start + (np.arange(out_len, dtype=np.float64) + 0.5) * scale - 0.5
    pos = np.clip(pos, start, start + length - 1)
    lo = np.floor(pos).astype(np.intp)
    hi = np.minimum(lo + 1, start + length - 1)
    return lo, hi, pos - lo


def crop_resize(src, top, left, height, width, out_h, out_w):
    src = np.asarray(src, dtype=np.float32)
    y0, y1, wy = _axis_coords(top, height, out_h)
    x0, x1, wx = _axis_coords(left, width, out_w)
    s = src.astype(np.float64)
    wy = wy[:, None]
    wx = wx[None, :]
    a = s[y0[:, None], x0[None, :]]
    b = s[y0[:, None], x1[None, :]]
    c = s[y1[:, None], x0[None, :]]
    d = s[y1[:, None], x1[None, :]]
    top_row = (1.0 - wx) * a + wx * b
    bottom_row = (1.0 - wx) * c + wx * d
    out = (1.0 - wy) * top_row + wy * bottom_row
    return out.astype(np.float32)


def augment(src, top, left, height, width, flip, brightness, contrast):
    src = np.asarray(src, dtype=np.float32)
    h, w = src.shape
    y0, y1, wy = _axis_coords(top, height, h)
    x0, x1, wx = _axis_coords(left, width, w)
    if flip:
        x0, x1, wx = x0[::-1], x1[::-1], wx[::-1]
    s = src.astype(np.float64)
    wy = wy[:, None]
    wx = wx[None, :]
    a = s[y0[:, None], x0[None, :]]
    b = s[y0[:, None], x1[None, :]]
    c = s[y1[:, None], x0[None, :]]
    d = s[y1[:, None], x1[None, :]]
    top_row = (1.0 - wx) * a + wx * b
    bottom_row = (1.0 - wx) * c + wx * d
    v = (1.0 - wy) * top_row + wy * bottom_row
    if brightness != 1.0 or contrast != 1.0:
        v = ((v - 0.5) * contrast + 0.5) * brightness
    return np.clip(v, 0.0, 1.0).astype(np.float32)


def centered_cosine_mean(x):
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if n < 2:
        raise ValueError("need at least two rows")
    xc = x - x.mean(axis=1, keepdims=True)
    norms = np.sqrt(np.einsum("ij,ij->i", xc, xc))
    ok = norms > 0.0
    unit = np.zeros_like(xc)
    unit[ok] = xc[ok] / norms[ok, None]
    gram = unit @ unit.T
    iu = np.triu_indices(n, k=1)
    return float(gram[iu].sum() / len(iu[0]))


def mw_counts(n, m):
    """Number of arrangements of n x-values and m y-values giving each U."""
    if n < 0 or m < 0:
        raise ValueError("sizes must be non-negative")
    # table[j][u] holds counts for (i, j) while sweeping i upwards
    size = n * m + 1
    prev = [np.zeros(size, dtype=np.int64) for _ in range(m + 1)]
    for j in range(m + 1):
        prev[j][0] = 1
    for i in range(1, n + 1):
        cur = [np.zeros(size, dtype=np.int64) for _ in range(m + 1)]
        cur[0][0] = 1
        for j in range(1, m + 1):
            # the largest element is an x (beats all j y's) or a y
            cur[j][j:] += prev[j][: size - j]
            cur[j] += cur[j - 1]
        prev = cur
    return prev[m]
