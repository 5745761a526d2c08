"""Pure-numpy versions of the inner loops.

Every function here has a twin with the same signature in ``_numba``.
Inputs are assumed to be float64 and C-contiguous; the dispatch layer
takes care of that.
"""
import numpy as np


def polyline_distance(height, width, pts):
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    if len(pts) == 1:
        return np.hypot(xs - pts[0, 0], ys - pts[0, 1])
    best = np.full((height, width), np.inf)
    for k in range(len(pts) - 1):
        ax, ay = pts[k]
        bx, by = pts[k + 1]
        dx, dy = bx - ax, by - ay
        den = dx * dx + dy * dy
        if den > 0.0:
            t = ((xs - ax) * dx + (ys - ay) * dy) / den
            np.clip(t, 0.0, 1.0, out=t)
        else:
            t = np.zeros_like(xs)
        d = np.hypot(xs - (ax + t * dx), ys - (ay + t * dy))
        np.minimum(best, d, out=best)
    return best


def splat_bilinear(height, width, xs, ys, weights):
    out = np.zeros((height, width))
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    fx = xs - x0
    fy = ys - y0
    for oy, ox, wt in (
        (0, 0, (1 - fx) * (1 - fy)),
        (0, 1, fx * (1 - fy)),
        (1, 0, (1 - fx) * fy),
        (1, 1, fx * fy),
    ):
        yy = y0 + oy
        xx = x0 + ox
        w = wt * weights
        keep = (w != 0.0) & (yy >= 0) & (yy < height) & (xx >= 0) & (xx < width)
        np.add.at(out, (yy[keep], xx[keep]), w[keep])
    return out


def splat_patch(kernel, patch):
    """Sum of ``patch`` copies centred on each nonzero of ``kernel``.

    ``patch`` is (S, S, C); the result is (h, w, C). Equivalent to a
    zero-padded same-size convolution of ``kernel`` with ``patch`` anchored
    at its centre, but exact zeros stay exact.
    """
    h, w = kernel.shape
    s0, s1, nc = patch.shape
    c0, c1 = s0 // 2, s1 // 2
    out = np.zeros((h, w, nc))
    for py, px in zip(*np.nonzero(kernel)):
        y_lo, y_hi = py - c0, py - c0 + s0
        x_lo, x_hi = px - c1, px - c1 + s1
        oy0, ox0 = max(y_lo, 0), max(x_lo, 0)
        oy1, ox1 = min(y_hi, h), min(x_hi, w)
        if oy0 >= oy1 or ox0 >= ox1:
            continue
        out[oy0:oy1, ox0:ox1] += kernel[py, px] * patch[
            oy0 - y_lo : oy1 - y_lo, ox0 - x_lo : ox1 - x_lo
        ]
    return out


def convolve_taps(image, dy, dx, vals, circular):
    """out[y, x] = sum_k vals[k] * image[y - dy[k], x - dx[k]]."""
    h, w = image.shape
    out = np.zeros((h, w))
    for sy, sx, v in zip(dy.tolist(), dx.tolist(), vals.tolist()):
        if circular:
            out += v * np.roll(image, (sy, sx), axis=(0, 1))
            continue
        ys0, ys1 = max(sy, 0), min(h + sy, h)
        xs0, xs1 = max(sx, 0), min(w + sx, w)
        if ys0 >= ys1 or xs0 >= xs1:
            continue
        out[ys0:ys1, xs0:xs1] += v * image[ys0 - sy : ys1 - sy, xs0 - sx : xs1 - sx]
    return out


def project_ordered_box(f, m):
    """Exact projection of rows (f_1..f_C, m) onto {0 <= f_c <= m <= 1}."""
    n, nc = f.shape
    fs = -np.sort(-f, axis=1)
    sums = np.concatenate([np.zeros((n, 1)), np.cumsum(fs, axis=1)], axis=1)
    pooled = (m[:, None] + sums) / np.arange(1, nc + 2)
    # channels sorted descending join the pool while they exceed it
    k = np.count_nonzero(fs > pooled[:, :nc], axis=1)
    m_new = pooled[np.arange(n), k]
    f_new = np.minimum(f, m_new[:, None])
    m_new = np.clip(m_new, 0.0, 1.0)
    f_new = np.clip(f_new, 0.0, 1.0)
    return f_new, m_new
