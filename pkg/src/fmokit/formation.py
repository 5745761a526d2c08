"""Image formation for fast moving objects: I = H*F + (1 - H*M) B."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels

# Pre-clamp excursions larger than this are modelling bugs, not float dust.
GUARD_TOL = 1e-6


class FormationError(ValueError):
    pass


@dataclass(frozen=True)
class ObjectModel:
    """Sharp appearance ``F`` (S, S, 3) and mask ``M`` (S, S) on a compact patch."""

    F: np.ndarray
    M: np.ndarray
    r: float

    def __post_init__(self):
        F = np.asarray(self.F, dtype=np.float64)
        M = np.asarray(self.M, dtype=np.float64)
        if F.ndim != 3 or M.shape != F.shape[:2]:
            raise FormationError(f"F {F.shape} and M {M.shape} must share an (S, S) grid")
        if np.any(F < -GUARD_TOL) or np.any(F > M[..., None] + GUARD_TOL) or np.any(M > 1 + GUARD_TOL):
            raise FormationError("object violates 0 <= F <= M <= 1")
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "M", M)

    @property
    def size(self) -> int:
        return self.M.shape[0]


@dataclass(frozen=True)
class MattingPair:
    hf: np.ndarray
    hm: np.ndarray


def _check_kernel(H, B=None):
    H = np.asarray(H, dtype=np.float64)
    if H.ndim != 2:
        raise FormationError("blur kernel must be a single-channel raster")
    if B is not None and B.shape[:2] != H.shape:
        raise FormationError(f"kernel domain {H.shape} differs from background {B.shape[:2]}")
    return H


def render_matting(obj: ObjectModel, H: np.ndarray) -> MattingPair:
    """Blurred appearance and blurred mask on the kernel's domain (zero padding)."""
    H = _check_kernel(H)
    patch = np.concatenate([obj.F, obj.M[..., None]], axis=2)
    out = _kernels.splat_patch(H, patch)
    return MattingPair(hf=out[..., :-1], hm=out[..., -1])


def blend(hf: np.ndarray, hm: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Unclamped Hf + (1 - Hm) B."""
    return hf + (1.0 - hm)[..., None] * B


def guard_clamp(x: np.ndarray, what: str = "frame") -> np.ndarray:
    lo, hi = float(x.min()), float(x.max())
    if lo < -GUARD_TOL or hi > 1.0 + GUARD_TOL:
        raise FormationError(f"{what} left [0, 1] before clamping: range [{lo}, {hi}]")
    return np.clip(x, 0.0, 1.0)


def compose(obj: ObjectModel, H: np.ndarray, B: np.ndarray) -> np.ndarray:
    B = np.asarray(B, dtype=np.float64)
    H = _check_kernel(H, B)
    if B.ndim != 3 or B.shape[2] != obj.F.shape[2]:
        raise FormationError("background channels must match the appearance")
    pair = render_matting(obj, H)
    return guard_clamp(blend(pair.hf, pair.hm, B))


def add_observation_noise(x: np.ndarray, sigma: float, seed: int) -> np.ndarray:
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    x = np.asarray(x, dtype=np.float64)
    if sigma == 0:
        return x.copy()
    rng = np.random.default_rng(seed)
    return np.clip(x + rng.normal(0.0, sigma, size=x.shape), 0.0, 1.0)
