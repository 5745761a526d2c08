"""Trajectory and detection metrics, plus dataset statistics and figures."""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .imgcore import PixelDomain, distance_to_polyline
from .trajectory import Curve, polyline_of, sample_curve

# ------------------------------------------------------------------ TIoU


def disc(r: float) -> np.ndarray:
    """Binary disc of pixels within ``r`` of the centre pixel."""
    if r <= 0:
        raise ValueError("radius must be positive")
    k = int(math.ceil(r))
    yy, xx = np.mgrid[-k : k + 1, -k : k + 1]
    return (xx * xx + yy * yy) <= r * r


def _as_mask(mask) -> np.ndarray:
    if np.isscalar(mask):
        return disc(float(mask))
    m = np.asarray(mask, dtype=bool)
    if m.ndim != 2 or not m.any():
        raise ValueError("mask must be a non-empty 2-D binary raster")
    return m


def _shifted_overlap(m: np.ndarray, dy: int, dx: int) -> int:
    """|m AND (m shifted by (dy, dx))|."""
    h, w = m.shape
    if abs(dy) >= h or abs(dx) >= w:
        return 0
    a = m[max(dy, 0) : h + min(dy, 0), max(dx, 0) : w + min(dx, 0)]
    b = m[max(-dy, 0) : h + min(-dy, 0), max(-dx, 0) : w + min(-dx, 0)]
    return int(np.count_nonzero(a & b))


def _placed(points: np.ndarray) -> np.ndarray:
    # nearest pixel, halves rounded up
    return np.floor(points + 0.5).astype(np.int64)


def _mean_iou(pa: np.ndarray, pb: np.ndarray, m: np.ndarray, area: int) -> float:
    offsets = pb - pa
    cache = {}
    total = 0.0
    for dx, dy in offsets:
        key = (int(dy), int(dx))
        if key not in cache:
            inter = _shifted_overlap(m, *key)
            cache[key] = inter / (2 * area - inter)
        total += cache[key]
    return total / len(offsets)


def tiou(c: Curve, c_star: Curve, mask=5.0, samples: int = 100) -> float:
    """Trajectory IoU of ``c`` against ``c_star``.

    ``mask`` is a binary raster (anchored at ``shape // 2``) or a disc radius.
    The mask is placed at the nearest pixel of both curves at ``samples``
    evenly spaced times; the mean IoU is computed for both time directions of
    ``c`` and the larger one returned.
    """
    if samples < 2:
        raise ValueError("need at least 2 samples")
    m = _as_mask(mask)
    area = int(np.count_nonzero(m))
    pa = _placed(sample_curve(c, samples))
    pb = _placed(sample_curve(c_star, samples))
    return max(_mean_iou(pa, pb, m, area), _mean_iou(pa[::-1], pb, m, area))


# ------------------------------------------------------------------ detection scores


def trajectory_footprint(c: Curve, r: float, domain: PixelDomain) -> np.ndarray:
    """Pixels within ``r`` of the curve."""
    return distance_to_polyline(domain, polyline_of(c)) <= r


def _f_score(p: float, rec: float) -> float:
    return 0.0 if p + rec == 0 else 2 * p * rec / (p + rec)


def match_frame(curves, regions, r, domain: PixelDomain, min_overlap: float = 0.5):
    """Greedy one-to-one matching of curves to GT regions for one frame.

    A pair is eligible when at least ``min_overlap`` of the curve's dilated
    footprint lies inside the region; eligible pairs are taken in decreasing
    overlap order. Returns a list of (curve index, region index, overlap).
    """
    radii = np.broadcast_to(np.asarray(r, dtype=np.float64), (len(curves),))
    regions = [np.asarray(g, dtype=bool) for g in regions]
    pairs = []
    for i, c in enumerate(curves):
        fp = trajectory_footprint(c, float(radii[i]), domain)
        n = np.count_nonzero(fp)
        if n == 0:
            continue
        for j, g in enumerate(regions):
            frac = np.count_nonzero(fp & g) / n
            if frac >= min_overlap:
                pairs.append((frac, i, j))
    pairs.sort(key=lambda p: (-p[0], p[1], p[2]))
    used_c, used_g, out = set(), set(), []
    for frac, i, j in pairs:
        if i in used_c or j in used_g:
            continue
        used_c.add(i)
        used_g.add(j)
        out.append((i, j, frac))
    return out


def precision_recall(detections, gt, r, domain: PixelDomain | None = None) -> dict:
    """Precision, recall and F-score over aligned frames.

    ``detections[k]`` is the list of curves found in frame k and ``gt[k]``
    the list of binary GT regions of frame k. ``r`` is the dilation radius,
    a scalar or a per-frame list of per-detection radii. With no detections
    precision is reported as 1.0; with no GT objects recall is 1.0.
    """
    if len(detections) != len(gt):
        raise ValueError(f"{len(detections)} detection frames vs {len(gt)} GT frames")
    tp = fp = fn = 0
    for k, (curves, regions) in enumerate(zip(detections, gt)):
        regions = list(regions)
        dom = domain
        if dom is None:
            if not regions:
                # nothing to match; every detection is a false positive
                fp += len(curves)
                continue
            dom = PixelDomain.of(np.asarray(regions[0]))
        rk = r[k] if isinstance(r, (list, tuple)) else r
        matched = len(match_frame(curves, regions, rk, dom))
        tp += matched
        fp += len(curves) - matched
        fn += len(regions) - matched
    precision = 1.0 if tp + fp == 0 else tp / (tp + fp)
    recall = 1.0 if tp + fn == 0 else tp / (tp + fn)
    return {
        "precision": precision,
        "recall": recall,
        "f_score": _f_score(precision, recall),
        "tp": tp,
        "fp": fp,
        "fn": fn,
    }


# ------------------------------------------------------------------ box statistics


def _box_iou(a, b) -> float:
    y0, x0 = max(a[0], b[0]), max(a[1], b[1])
    y1, x1 = min(a[2], b[2]), min(a[3], b[3])
    inter = max(0.0, y1 - y0) * max(0.0, x1 - x0)
    area = lambda q: (q[2] - q[0]) * (q[3] - q[1])  # noqa: E731
    return inter / (area(a) + area(b) - inter)


def bbox_stats(boxes) -> dict:
    """IoU and size-normalised speed between consecutive (y0, x0, y1, x1) boxes.

    Speed is the centre displacement divided by the mean of the two box
    diagonals.
    """
    b = np.asarray(boxes, dtype=np.float64)
    if b.ndim != 2 or b.shape[1] != 4 or len(b) < 2:
        raise ValueError("need at least two (y0, x0, y1, x1) boxes")
    if np.any(b[:, 2] <= b[:, 0]) or np.any(b[:, 3] <= b[:, 1]):
        raise ValueError("boxes must have positive area")
    ious, speeds = [], []
    for a, c in zip(b[:-1], b[1:]):
        ious.append(_box_iou(a, c))
        ca = 0.5 * (a[:2] + a[2:])
        cc = 0.5 * (c[:2] + c[2:])
        diag = 0.5 * (math.hypot(*(a[2:] - a[:2])) + math.hypot(*(c[2:] - c[:2])))
        speeds.append(float(np.hypot(*(cc - ca)) / diag))
    return {"iou": ious, "speed": speeds}


def write_histograms(stats: dict, directory, bins: int = 20) -> list:
    """One PNG histogram per statistic; returns the written paths."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = []
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for name in sorted(stats):
        values = np.asarray(stats[name], dtype=np.float64)
        fig, ax = plt.subplots(figsize=(4, 3), dpi=100)
        rng = (0.0, 1.0) if name == "iou" else None
        ax.hist(values, bins=bins, range=rng, density=True, histtype="step", color="k")
        ax.set_xlabel(name)
        ax.set_ylabel("density")
        fig.tight_layout()
        path = d / f"hist_{name}.png"
        # fixed metadata keeps the bytes stable across runs
        fig.savefig(path, metadata={"Software": None})
        plt.close(fig)
        out.append(path)
    return out


def draw_trajectories(frame: np.ndarray, curves, color=(1.0, 0.1, 0.1)) -> np.ndarray:
    """8-bit RGB copy of ``frame`` with each curve drawn as a polyline."""
    import cv2

    img = np.ascontiguousarray(np.clip(np.round(np.asarray(frame) * 255), 0, 255).astype(np.uint8))
    if img.ndim == 2:
        img = np.repeat(img[..., None], 3, axis=2).copy()
    bgr = tuple(int(round(255 * v)) for v in color[::-1])
    canvas = np.ascontiguousarray(img[..., ::-1])
    for c in curves:
        pts = np.round(polyline_of(c) * 4).astype(np.int32)
        cv2.polylines(canvas, [pts.reshape(-1, 1, 2)], False, bgr, 1, cv2.LINE_AA, shift=2)
    return canvas[..., ::-1].copy()
