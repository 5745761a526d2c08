"""Recover a parametric trajectory from a blur kernel.

The kernel's mass records how long the object spent at each pixel. Support
pixels are ordered along the streak by geodesic distance from one end and
assigned a time equal to the mass accumulated before them; with times
known, each trajectory class is an ordinary weighted least-squares problem
in the basis {1, min(2t,1), min(2t,1)^2, max(2t-1,0)}.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imgcore import farthest_pair, pixel_graph
from .trajectory import Curve, normalize_curve

# model-selection penalty per coefficient pair beyond (c0, c1), in pixels
PAIR_PENALTY = 0.15

_CLASSES = {
    "line": (0, 1),
    "parabola": (0, 1, 2),
    "piecewise": (0, 1, 3),
}


class FitError(ValueError):
    pass


@dataclass(frozen=True)
class CurveFit:
    curve: Curve
    residual: float
    kind: str
    scores: dict


def _basis(t: np.ndarray) -> np.ndarray:
    s = np.minimum(2 * t, 1.0)
    return np.stack([np.ones_like(t), s, s * s, np.maximum(2 * t - 1, 0.0)], axis=1)


def _mass_times(order_key: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Mid-mass time of every pixel; ties in ``order_key`` share a time."""
    keys, inv = np.unique(np.round(order_key, 9), return_inverse=True)
    group_mass = np.bincount(inv, weights=w, minlength=len(keys))
    before = np.concatenate([[0.0], np.cumsum(group_mass)[:-1]])
    t = (before + 0.5 * group_mass) / group_mass.sum()
    return t[inv]


def _weighted_fit(t, pts, w, cols):
    A = _basis(t)[:, cols]
    sw = np.sqrt(w)[:, None]
    coef, *_ = np.linalg.lstsq(A * sw, pts * sw, rcond=None)
    params = np.zeros((4, 2))
    params[list(cols)] = coef
    pred = _basis(t) @ params
    rms = float(np.sqrt((w * ((pred - pts) ** 2).sum(axis=1)).sum() / w.sum()))
    return params, rms


def _order_key(mask: np.ndarray, pts: np.ndarray, w: np.ndarray) -> np.ndarray:
    coords, graph = pixel_graph(mask)
    a, _, dist = farthest_pair(graph)
    if np.all(np.isfinite(dist)):
        return dist
    # disconnected support: fall back to the principal axis
    centred = pts - np.average(pts, axis=0, weights=w)
    cov = (centred * w[:, None]).T @ centred
    axis = np.linalg.eigh(cov)[1][:, -1]
    return centred @ axis


def fit_curve(H: np.ndarray, min_mass: float = 0.05) -> CurveFit:
    """Fit line, parabola and one-bounce classes to ``H`` and keep the best.

    Pixels count as support when ``H > min_mass * median(H[H > 0])``.
    Supports of fewer than three pixels, or with no spread, give a static
    curve at the mass centroid.
    """
    H = np.asarray(H, dtype=np.float64)
    if H.ndim != 2:
        raise FitError("kernel must be single-channel")
    if H.sum() <= 0 or np.any(H < 0):
        raise FitError("kernel needs non-negative entries with positive mass")
    positive = H[H > 0]
    mask = H > min_mass * float(np.median(positive))
    ys, xs = np.nonzero(mask)
    oy, ox = int(ys.min()), int(xs.min())
    # local coordinates keep the fit exactly translation-equivariant
    local = mask[oy:, ox:]
    ly, lx = np.nonzero(local)
    w = H[oy:, ox:][local]
    pts = np.stack([lx, ly], axis=1).astype(np.float64)
    centroid = np.average(pts, axis=0, weights=w)
    if len(w) < 3 or np.allclose(pts, pts[0]):
        curve = Curve((centroid[0] + ox, centroid[1] + oy))
        return CurveFit(curve, 0.0, "line", {"line": 0.0})

    key = _order_key(local, pts, w)
    t_fwd = _mass_times(key, w)
    best = None
    scores = {}
    for kind, cols in _CLASSES.items():
        for t in (t_fwd, 1.0 - t_fwd):
            params, rms = _weighted_fit(t, pts, w, cols)
            score = rms + PAIR_PENALTY * (len(cols) - 2)
            if kind not in scores or score < scores[kind]:
                scores[kind] = score
            if best is None or score < best[0]:
                best = (score, kind, params, rms)
    _, kind, params, rms = best
    params[0] += (ox, oy)
    curve = normalize_curve(Curve.from_params(params))
    return CurveFit(curve, rms, kind, scores)


def fit_polyline(points, spacing: float = 0.25, min_mass: float = 0.05) -> CurveFit:
    """Fit a curve to a polyline traversed at constant speed.

    The polyline is resampled every ``spacing`` pixels and splatted into a
    local kernel, which is then handed to :func:`fit_curve`.
    """
    from . import _kernels

    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(pts) == 0:
        raise FitError("empty polyline")
    seg = np.hypot(*np.diff(pts, axis=0).T)
    total = float(seg.sum())
    if total == 0.0:
        return CurveFit(Curve(tuple(pts[0])), 0.0, "line", {"line": 0.0})
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    n = max(2, int(np.ceil(total / spacing)) + 1)
    s = np.linspace(0.0, total, n)
    dense = np.stack([np.interp(s, cum, pts[:, 0]), np.interp(s, cum, pts[:, 1])], axis=1)
    origin = np.floor(dense.min(axis=0)) - 1
    local = dense - origin
    w, h = (np.ceil(local.max(axis=0)) + 2).astype(int)
    H = _kernels.splat_bilinear(int(h), int(w), local[:, 0], local[:, 1], np.ones(n))
    fit = fit_curve(H / H.sum(), min_mass=min_mass)
    return CurveFit(fit.curve.translated(*origin), fit.residual, fit.kind, fit.scores)
