"""Backend dispatch for the hot loops.

numba is used when importable unless ``FMOKIT_NUMBA=0`` is set in the
environment, in which case the pure-numpy path runs. Both paths honour the
same contracts and are tested against each other.
"""
import os

import numpy as np

from . import _numpy

_DISABLED = os.environ.get("FMOKIT_NUMBA", "1").strip().lower() in ("0", "false", "no", "off")

try:
    if _DISABLED:
        raise ImportError("numba disabled by FMOKIT_NUMBA")
    from . import _numba as _impl

    BACKEND = "numba"
except ImportError:
    _impl = _numpy
    BACKEND = "numpy"


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def polyline_distance(height, width, pts):
    return _impl.polyline_distance(int(height), int(width), _f64(pts))


def splat_bilinear(height, width, xs, ys, weights):
    return _impl.splat_bilinear(int(height), int(width), _f64(xs), _f64(ys), _f64(weights))


def splat_patch(kernel, patch):
    return _impl.splat_patch(_f64(kernel), _f64(patch))


def convolve_same(image, kernel, circular):
    """Same-size convolution with the kernel anchored at its centre pixel."""
    kernel = np.asarray(kernel, dtype=np.float64)
    ii, jj = np.nonzero(kernel)
    dy = (ii - kernel.shape[0] // 2).astype(np.int64)
    dx = (jj - kernel.shape[1] // 2).astype(np.int64)
    return _impl.convolve_taps(_f64(image), dy, dx, _f64(kernel[ii, jj]), bool(circular))


def project_ordered_box(f, m):
    return _impl.project_ordered_box(_f64(f), _f64(m))
