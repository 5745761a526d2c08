"""Parametric intra-frame trajectories.

A trajectory is

    C(t) = c0 + c1 * min(2t, 1) + c2 * min(2t, 1)**2 + c3 * max(2t - 1, 0)

for t in [0, 1], with every c_k a 2-vector in pixel coordinates (x, y).
Only one of c2 (parabola) and c3 (one-bounce piecewise line) is ever
nonzero; :func:`normalize_curve` enforces that.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .imgcore import PixelDomain, distance_to_polyline

Vec = tuple


def _vec(v) -> tuple:
    x, y = (float(a) for a in v)
    return (x, y)


@dataclass(frozen=True)
class Curve:
    c0: Vec = (0.0, 0.0)
    c1: Vec = (0.0, 0.0)
    c2: Vec = (0.0, 0.0)
    c3: Vec = (0.0, 0.0)

    def __post_init__(self):
        for name in ("c0", "c1", "c2", "c3"):
            object.__setattr__(self, name, _vec(getattr(self, name)))

    @classmethod
    def from_params(cls, params) -> "Curve":
        p = np.asarray(params, dtype=np.float64).reshape(4, 2)
        return cls(*p)

    @property
    def params(self) -> np.ndarray:
        return np.array([self.c0, self.c1, self.c2, self.c3], dtype=np.float64)

    @property
    def kind(self) -> str:
        if self.c3 != (0.0, 0.0):
            return "piecewise"
        if self.c2 != (0.0, 0.0):
            return "parabola"
        return "line"

    def is_normalized(self) -> bool:
        return self.c2 == (0.0, 0.0) or self.c3 == (0.0, 0.0)

    def translated(self, dx: float, dy: float) -> "Curve":
        return Curve((self.c0[0] + dx, self.c0[1] + dy), self.c1, self.c2, self.c3)

    def scaled(self, s: float) -> "Curve":
        """Curve with every coefficient multiplied by ``s`` (coordinate rescale)."""
        return Curve.from_params(self.params * s)

    def to_dict(self) -> dict:
        return {k: list(getattr(self, k)) for k in ("c0", "c1", "c2", "c3")}

    @classmethod
    def from_dict(cls, d: dict) -> "Curve":
        return cls(*(d[k] for k in ("c0", "c1", "c2", "c3")))


def curve_to_json(c: Curve) -> str:
    return json.dumps(c.to_dict(), sort_keys=True)


def curve_from_json(text: str) -> Curve:
    return Curve.from_dict(json.loads(text))


def load_curve(path) -> Curve:
    with open(path) as fh:
        return curve_from_json(fh.read())


def save_curve(path, c: Curve) -> None:
    with open(path, "w") as fh:
        fh.write(curve_to_json(c) + "\n")


def eval_curve(c: Curve, t):
    """Position(s) on the curve; a scalar ``t`` gives shape (2,), an array (n, 2)."""
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr < 0.0) or np.any(t_arr > 1.0) or np.any(np.isnan(t_arr)):
        raise ValueError("t must lie in [0, 1]")
    s = np.minimum(2.0 * t_arr, 1.0)[..., None]
    u = np.maximum(2.0 * t_arr - 1.0, 0.0)[..., None]
    p = c.params
    return p[0] + p[1] * s + p[2] * s * s + p[3] * u


def normalize_curve(c: Curve) -> Curve:
    """Drop the parabolic term when the bounce term is longer than one pixel, else the bounce."""
    if math.hypot(*c.c3) > 1.0:
        return Curve(c.c0, c.c1, (0.0, 0.0), c.c3)
    return Curve(c.c0, c.c1, c.c2, (0.0, 0.0))


def sample_curve(c: Curve, n: int) -> np.ndarray:
    return eval_curve(c, np.linspace(0.0, 1.0, n))


def arc_length(c: Curve, n: int = 1001) -> float:
    pts = sample_curve(c, n)
    return float(np.hypot(*np.diff(pts, axis=0).T).sum())


def default_kernel_samples(c: Curve) -> int:
    # at least 8 samples per traversed pixel
    return max(64, int(math.ceil(8.0 * arc_length(c))))


def rasterize_kernel(c: Curve, domain: PixelDomain, samples: int | None = None) -> np.ndarray:
    """Blur kernel of the curve: bilinear splats of uniformly spaced time samples, unit sum."""
    if samples is None:
        samples = default_kernel_samples(c)
    if samples < 2:
        raise ValueError("need at least 2 samples")
    pts = sample_curve(c, samples)
    if not np.all(domain.contains(pts[:, 0], pts[:, 1])):
        raise ValueError("curve leaves the pixel domain")
    ones = np.ones(samples)
    h = _kernels.splat_bilinear(domain.height, domain.width, pts[:, 0], pts[:, 1], ones)
    return h / h.sum()


# largest allowed gap between the parabolic arc and its polyline, in pixels
POLYLINE_SAG = 0.002


def polyline_of(c: Curve, samples: int | None = None) -> np.ndarray:
    """Polyline through the curve, consecutive duplicates removed.

    By default the vertices are exact: the second half (t >= 0.5) is always
    a straight segment and the first half is straight unless c2 is nonzero,
    in which case it is subdivided until the arc deviates from its chords by
    at most ``POLYLINE_SAG``. An explicit ``samples`` count gives uniform
    time sampling instead.
    """
    if samples is not None:
        pts = sample_curve(c, samples)
    else:
        bend = math.hypot(*c.c2)
        n = 1 if bend == 0.0 else max(1, int(math.ceil(math.sqrt(bend / (4.0 * POLYLINE_SAG)))))
        t = np.concatenate([np.linspace(0.0, 0.5, n + 1), [1.0]])
        pts = eval_curve(c, t)
    keep = np.ones(len(pts), dtype=bool)
    keep[1:] = np.any(np.diff(pts, axis=0) != 0.0, axis=1)
    return pts[keep]


def tdf_from_distance(dist: np.ndarray, r: float) -> np.ndarray:
    if r <= 0:
        raise ValueError("radius must be positive")
    return 1.0 - np.minimum(1.0, dist / (2.0 * r))


def tdf(c: Curve, r: float, domain: PixelDomain, samples: int | None = None) -> np.ndarray:
    """Truncated distance function: 1 on the trajectory, 0 from 2r outward."""
    if r <= 0:
        raise ValueError("radius must be positive")
    return tdf_from_distance(distance_to_polyline(domain, polyline_of(c, samples)), r)


_LOSS_T = np.array([0.0, 0.5, 1.0])


def curve_loss(c: Curve, c_hat: Curve) -> float:
    """Mean distance of three corresponding samples, minimised over direction."""
    a = eval_curve(c, _LOSS_T)
    b = eval_curve(c_hat, _LOSS_T)
    fwd = np.hypot(*(a - b).T).mean()
    rev = np.hypot(*(a - b[::-1]).T).mean()
    return float(min(fwd, rev))
