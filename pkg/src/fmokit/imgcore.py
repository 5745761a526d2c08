"""Raster primitives shared by every other module.

Rasters are plain float64 numpy arrays shaped (H, W) for single-channel data
or (H, W, C) otherwise. Pixel centres sit on integer coordinates with the
origin at the top-left, x to the right and y downward; points are always
given as (x, y).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy import ndimage, signal

from . import _kernels

# Above this many kernel taps the FFT path beats the direct loops.
_DIRECT_TAPS = 121


class PixelDomain(NamedTuple):
    height: int
    width: int

    @classmethod
    def of(cls, raster: np.ndarray) -> "PixelDomain":
        return cls(int(raster.shape[0]), int(raster.shape[1]))

    def contains(self, x, y, margin: float = 0.0) -> np.ndarray:
        x = np.asarray(x)
        y = np.asarray(y)
        return (
            (x >= margin)
            & (y >= margin)
            & (x <= self.width - 1 - margin)
            & (y <= self.height - 1 - margin)
        )


def as_raster(data, height: int, width: int, channels: int = 1) -> np.ndarray:
    """Build a raster from row-major flat ``data`` after checking its length."""
    flat = np.asarray(data, dtype=np.float64).ravel()
    if channels not in (1, 3, 4):
        raise ValueError(f"channels must be 1, 3 or 4, got {channels}")
    expected = height * width * channels
    if flat.size != expected:
        raise ValueError(
            f"data length {flat.size} does not match {height}x{width}x{channels}={expected}"
        )
    if channels == 1:
        return flat.reshape(height, width)
    return flat.reshape(height, width, channels)


def clamp01(x: np.ndarray) -> np.ndarray:
    return np.clip(x, 0.0, 1.0)


def _single_channel(kernel: np.ndarray) -> np.ndarray:
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim == 3 and kernel.shape[2] == 1:
        kernel = kernel[..., 0]
    if kernel.ndim != 2:
        raise ValueError(f"kernel must be single-channel, got shape {kernel.shape}")
    return kernel


def _conv_plane(plane, kernel, circular):
    h, w = plane.shape
    if np.count_nonzero(kernel) <= _DIRECT_TAPS:
        return _kernels.convolve_same(plane, kernel, circular)
    kh, kw = kernel.shape
    ay, ax = kh // 2, kw // 2
    if circular:
        emb = np.zeros((h, w))
        ii, jj = np.nonzero(kernel)
        np.add.at(emb, ((ii - ay) % h, (jj - ax) % w), kernel[ii, jj])
        return np.real(np.fft.ifft2(np.fft.fft2(plane) * np.fft.fft2(emb)))
    full = signal.fftconvolve(plane, kernel, mode="full")
    return full[ay : ay + h, ax : ax + w]


def convolve2d(image: np.ndarray, kernel: np.ndarray, boundary: str = "zero") -> np.ndarray:
    """Same-size convolution of every channel of ``image`` with ``kernel``.

    The kernel is anchored at ``(kh // 2, kw // 2)``. ``boundary`` is
    ``"zero"`` (outside pixels are 0) or ``"circular"`` (wrap-around).
    No clamping happens here; callers decide when values return to [0, 1].
    """
    if boundary not in ("zero", "circular"):
        raise ValueError(f"unknown boundary mode {boundary!r}")
    image = np.asarray(image, dtype=np.float64)
    kernel = _single_channel(kernel)
    circular = boundary == "circular"
    if image.ndim == 2:
        return _conv_plane(image, kernel, circular)
    if image.ndim != 3:
        raise ValueError(f"image must be 2-D or 3-D, got shape {image.shape}")
    return np.stack(
        [_conv_plane(image[..., c], kernel, circular) for c in range(image.shape[2])], axis=-1
    )


def distance_to_polyline(domain: PixelDomain, points: Sequence) -> np.ndarray:
    """Euclidean distance from every pixel centre to the nearest polyline segment."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(pts) == 0:
        raise ValueError("polyline needs at least one point")
    return _kernels.polyline_distance(domain.height, domain.width, pts)


@dataclass(frozen=True)
class Components:
    """Connected components of a binary mask.

    ``labels`` holds 0 for background and 1..count for regions. ``boxes[k]``
    is the (y0, x0, y1, x1) half-open bounding box of label k + 1.
    """

    labels: np.ndarray
    count: int
    boxes: tuple
    areas: tuple


def connected_components(mask: np.ndarray, connectivity: int = 8) -> Components:
    if connectivity == 4:
        structure = ndimage.generate_binary_structure(2, 1)
    elif connectivity == 8:
        structure = np.ones((3, 3), dtype=bool)
    else:
        raise ValueError("connectivity must be 4 or 8")
    mask = np.asarray(mask, dtype=bool)
    labels, count = ndimage.label(mask, structure=structure)
    boxes = tuple(
        (s[0].start, s[1].start, s[0].stop, s[1].stop) for s in ndimage.find_objects(labels)
    )
    areas = tuple(int(a) for a in np.bincount(labels.ravel(), minlength=count + 1)[1:])
    return Components(labels=labels, count=int(count), boxes=boxes, areas=areas)


def median_background(frames: Sequence[np.ndarray]) -> np.ndarray:
    """Per-pixel, per-channel median of exactly three frames."""
    if len(frames) != 3:
        raise ValueError(f"median background needs exactly 3 frames, got {len(frames)}")
    stack = [np.asarray(f, dtype=np.float64) for f in frames]
    if any(f.shape != stack[0].shape for f in stack):
        raise ValueError("frames must share dimensions and channel count")
    a, b, c = stack
    # median of three without a sort: max(min(a,b), min(max(a,b), c))
    return np.maximum(np.minimum(a, b), np.minimum(np.maximum(a, b), c))


def pixel_graph(mask: np.ndarray):
    """8-connected adjacency of the true pixels of ``mask``, with Euclidean edge lengths.

    Returns ``(coords, graph)``: ``coords`` is (n, 2) (row, col) in row-major
    order and ``graph`` a scipy CSR matrix over those n nodes.
    """
    from scipy import sparse

    mask = np.asarray(mask, dtype=bool)
    coords = np.argwhere(mask)
    index = -np.ones(mask.shape, dtype=np.int64)
    index[mask] = np.arange(len(coords))
    h, w = mask.shape
    rows, cols, vals = [], [], []
    for dy, dx in ((0, 1), (1, -1), (1, 0), (1, 1)):
        yy = coords[:, 0] + dy
        xx = coords[:, 1] + dx
        ok = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
        src = np.nonzero(ok)[0]
        dst = index[yy[ok], xx[ok]]
        keep = dst >= 0
        rows.append(src[keep])
        cols.append(dst[keep])
        vals.append(np.full(int(keep.sum()), np.hypot(dy, dx)))
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    v = np.concatenate(vals)
    n = len(coords)
    graph = sparse.coo_matrix((np.r_[v, v], (np.r_[r, c], np.r_[c, r])), shape=(n, n)).tocsr()
    return coords, graph


def geodesic_from(graph, source: int) -> np.ndarray:
    from scipy.sparse import csgraph

    return csgraph.dijkstra(graph, directed=False, indices=source)


def farthest_pair(graph, start: int = 0):
    """Approximate diameter endpoints of a connected pixel graph by a double sweep."""
    d0 = geodesic_from(graph, start)
    a = int(np.argmax(np.where(np.isfinite(d0), d0, -1)))
    da = geodesic_from(graph, a)
    b = int(np.argmax(np.where(np.isfinite(da), da, -1)))
    return a, b, da
