"""numba-compiled versions of the inner loops (same contracts as ``_numpy``)."""
import math

import numpy as np
from numba import njit


@njit(cache=True)
def polyline_distance(height, width, pts):
    out = np.empty((height, width))
    n = pts.shape[0]
    for y in range(height):
        for x in range(width):
            best = np.inf
            if n == 1:
                best = math.hypot(x - pts[0, 0], y - pts[0, 1])
            for k in range(n - 1):
                ax = pts[k, 0]
                ay = pts[k, 1]
                dx = pts[k + 1, 0] - ax
                dy = pts[k + 1, 1] - ay
                den = dx * dx + dy * dy
                t = 0.0
                if den > 0.0:
                    t = ((x - ax) * dx + (y - ay) * dy) / den
                    if t < 0.0:
                        t = 0.0
                    elif t > 1.0:
                        t = 1.0
                d = math.hypot(x - (ax + t * dx), y - (ay + t * dy))
                if d < best:
                    best = d
            out[y, x] = best
    return out


@njit(cache=True)
def splat_bilinear(height, width, xs, ys, weights):
    out = np.zeros((height, width))
    for k in range(xs.shape[0]):
        x0 = int(math.floor(xs[k]))
        y0 = int(math.floor(ys[k]))
        fx = xs[k] - x0
        fy = ys[k] - y0
        for oy in range(2):
            wy = fy if oy else 1.0 - fy
            yy = y0 + oy
            for ox in range(2):
                wx = fx if ox else 1.0 - fx
                xx = x0 + ox
                w = wx * wy * weights[k]
                if w != 0.0 and 0 <= yy < height and 0 <= xx < width:
                    out[yy, xx] += w
    return out


@njit(cache=True)
def splat_patch(kernel, patch):
    h, w = kernel.shape
    s0, s1, nc = patch.shape
    c0 = s0 // 2
    c1 = s1 // 2
    out = np.zeros((h, w, nc))
    for py in range(h):
        for px in range(w):
            v = kernel[py, px]
            if v == 0.0:
                continue
            for u in range(s0):
                y = py - c0 + u
                if y < 0 or y >= h:
                    continue
                for q in range(s1):
                    x = px - c1 + q
                    if x < 0 or x >= w:
                        continue
                    for ch in range(nc):
                        out[y, x, ch] += v * patch[u, q, ch]
    return out


@njit(cache=True)
def convolve_taps(image, dy, dx, vals, circular):
    h, w = image.shape
    out = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for k in range(vals.shape[0]):
                yy = y - dy[k]
                xx = x - dx[k]
                if circular:
                    yy %= h
                    xx %= w
                elif yy < 0 or yy >= h or xx < 0 or xx >= w:
                    continue
                acc += vals[k] * image[yy, xx]
            out[y, x] = acc
    return out


@njit(cache=True)
def project_ordered_box(f, m):
    n, nc = f.shape
    f_out = np.empty_like(f)
    m_out = np.empty_like(m)
    buf = np.empty(nc)
    for p in range(n):
        for c in range(nc):
            buf[c] = f[p, c]
        # insertion sort, descending
        for i in range(1, nc):
            v = buf[i]
            j = i - 1
            while j >= 0 and buf[j] < v:
                buf[j + 1] = buf[j]
                j -= 1
            buf[j + 1] = v
        pooled = m[p]
        total = m[p]
        for k in range(nc):
            if buf[k] > pooled:
                total += buf[k]
                pooled = total / (k + 2)
            else:
                break
        mm = min(max(pooled, 0.0), 1.0)
        for c in range(nc):
            fc = min(f[p, c], pooled)
            f_out[p, c] = min(max(fc, 0.0), 1.0)
        m_out[p] = mm
    return f_out, m_out
