import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fmokit.evalkit import tiou
from fmokit.fitcurve import FitError, fit_curve, fit_polyline
from fmokit.imgcore import PixelDomain
from fmokit.synthgen import gen_curve
from fmokit.trajectory import Curve, arc_length, eval_curve, polyline_of, rasterize_kernel

DOM = PixelDomain(96, 128)


def _ends(c):
    return eval_curve(c, np.array([0.0, 1.0]))


def _endpoint_error(a, b):
    ea, eb = _ends(a), _ends(b)
    fwd = np.hypot(*(ea - eb).T).max()
    rev = np.hypot(*(ea - eb[::-1]).T).max()
    return min(fwd, rev)


def test_delta_gives_static():
    H = np.zeros((20, 20))
    H[7, 12] = 1.0
    fit = fit_curve(H)
    assert fit.curve == Curve((12.0, 7.0))


def test_rejects_empty_and_negative():
    with pytest.raises(FitError):
        fit_curve(np.zeros((5, 5)))
    H = np.zeros((5, 5))
    H[1, 1] = 2.0
    H[2, 2] = -1.0
    with pytest.raises(FitError):
        fit_curve(H)


@pytest.mark.parametrize("angle", [0, 30, 75, 140, 200, 300])
def test_line_endpoints(angle):
    a = math.radians(angle)
    c = Curve((64.0, 48.0), (40 * math.cos(a), 40 * math.sin(a)))
    c = c.translated(-20 * math.cos(a), -20 * math.sin(a))
    fit = fit_curve(rasterize_kernel(c, DOM))
    assert _endpoint_error(fit.curve, c) <= 1.0
    assert fit.kind == "line"


@pytest.mark.parametrize("seed", range(8))
def test_noiseless_lines_never_parabola(seed):
    r = np.random.default_rng(seed)
    a = r.uniform(0, 2 * math.pi)
    length = r.uniform(8, 60)
    c = Curve((64 + r.uniform(-3, 3), 48 + r.uniform(-3, 3)), (length * math.cos(a) / 2, length * math.sin(a) / 2))
    assert fit_curve(rasterize_kernel(c, DOM)).kind != "parabola"


def test_parabola_selected():
    c = Curve((30.0, 60.0), (60.0, -10.0), (-9.0, -12.0))
    assert math.hypot(*c.c2) == pytest.approx(15.0)
    fit = fit_curve(rasterize_kernel(c, DOM))
    assert fit.kind == "parabola"
    assert tiou(fit.curve, c, 5.0) >= 0.9


def test_piecewise_selected():
    c = Curve((20.0, 30.0), (40.0, 10.0), (0, 0), (20.0, 35.0))
    fit = fit_curve(rasterize_kernel(c, DOM))
    assert fit.kind == "piecewise"
    assert tiou(fit.curve, c, 5.0) >= 0.9


@given(st.integers(0, 10_000), st.integers(-6, 6), st.integers(-6, 6))
def test_translation_equivariance(seed, dx, dy):
    r = np.random.default_rng(seed)
    rad = float(r.uniform(3, 8))
    c = gen_curve(PixelDomain(80, 100), rad, (10, 40), r)
    H = np.pad(rasterize_kernel(c, PixelDomain(80, 100)), 8)
    shifted = np.roll(np.roll(H, dy, axis=0), dx, axis=1)
    a = fit_curve(H).curve
    b = fit_curve(shifted).curve
    assert a.kind == b.kind
    assert np.allclose(np.array(b.c0) - a.c0, (dx, dy), atol=1e-6)
    for k in ("c1", "c2", "c3"):
        assert np.allclose(getattr(a, k), getattr(b, k), atol=1e-6)


@given(st.integers(0, 10_000))
def test_output_normalized(seed):
    r = np.random.default_rng(seed)
    c = gen_curve(DOM, 5.0, (10, 80), r)
    assert fit_curve(rasterize_kernel(c, DOM)).curve.is_normalized()


def test_roundtrip_rate():
    r = np.random.default_rng(99)
    dom = PixelDomain(256, 512)
    scores = []
    while len(scores) < 60:
        rad = float(r.uniform(5, 40))
        c = gen_curve(dom, rad, (2 * rad, 8 * rad), r)
        if arc_length(c) < 10:
            continue
        scores.append(tiou(fit_curve(rasterize_kernel(c, dom)).curve, c, 5.0))
    assert np.mean(np.array(scores) >= 0.9) >= 0.95


def test_fit_polyline_matches_geometry():
    c = Curve((10.0, 10.0), (30.0, 0.0), (0, 0), (0.0, 25.0))
    fit = fit_polyline(polyline_of(c))
    assert fit.kind == "piecewise"
    assert _endpoint_error(fit.curve, c) <= 1.0
    assert fit_polyline(np.array([[3.0, 4.0]])).curve == Curve((3.0, 4.0))
