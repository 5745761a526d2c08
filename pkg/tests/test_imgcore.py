import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from fmokit.imgcore import (
    PixelDomain,
    as_raster,
    clamp01,
    connected_components,
    convolve2d,
    distance_to_polyline,
    farthest_pair,
    median_background,
    pixel_graph,
)
from oracles import conv_nested, dense_polyline_distance, flood_fill_labels, median_sort, same_partition

unit = st.floats(0.0, 1.0, allow_nan=False)


def test_as_raster_checks_length():
    assert as_raster(np.arange(12) / 12, 2, 2, 3).shape == (2, 2, 3)
    with pytest.raises(ValueError):
        as_raster(np.zeros(11), 2, 2, 3)
    with pytest.raises(ValueError):
        as_raster(np.zeros(4), 2, 2, 2)


def test_clamp01():
    assert np.array_equal(clamp01(np.array([-1.0, 0.5, 2.0])), [0.0, 0.5, 1.0])


def test_domain_contains():
    d = PixelDomain(10, 20)
    assert d.contains(0, 0) and d.contains(19, 9) and not d.contains(19.5, 0)
    assert not d.contains(1, 1, margin=2)


@pytest.mark.parametrize("boundary", ["zero", "circular"])
def test_identity_kernel(rng, boundary):
    img = rng.uniform(size=(6, 5, 3))
    k = np.zeros((3, 3))
    k[1, 1] = 1.0
    assert np.array_equal(convolve2d(img, k, boundary), img)


def test_constant_image_preserved_circular(rng):
    k = rng.uniform(size=(5, 5))
    k /= k.sum()
    out = convolve2d(np.full((8, 9), 0.3), k, "circular")
    assert np.allclose(out, 0.3, atol=1e-12)


@pytest.mark.parametrize("boundary", ["zero", "circular"])
@pytest.mark.parametrize("shape", [(3, 3), (5, 5), (4, 2)])
def test_matches_nested_loop_oracle(rng, boundary, shape):
    img = rng.uniform(size=(8, 8, 3))
    k = rng.uniform(size=shape)
    ref = conv_nested(img, k, boundary == "circular")
    assert np.abs(convolve2d(img, k, boundary) - ref).max() <= 1e-6


@pytest.mark.parametrize("boundary", ["zero", "circular"])
def test_fft_path_matches_direct(rng, boundary):
    # 13x13 dense kernel exceeds the direct-tap limit and takes the FFT path
    img = rng.uniform(size=(20, 17))
    k = rng.uniform(size=(13, 13))
    ref = conv_nested(img, k, boundary == "circular")
    assert np.abs(convolve2d(img, k, boundary) - ref).max() <= 1e-9


def test_bad_boundary_and_kernel():
    with pytest.raises(ValueError):
        convolve2d(np.zeros((3, 3)), np.ones((1, 1)), "reflect")
    with pytest.raises(ValueError):
        convolve2d(np.zeros((3, 3)), np.ones((2, 2, 2)))


@given(hnp.arrays(np.float64, (6, 7), elements=unit), hnp.arrays(np.float64, (6, 7), elements=unit),
       st.floats(-2, 2), st.floats(-2, 2), hnp.arrays(np.float64, (3, 3), elements=unit))
def test_linearity(x, y, a, b, k):
    lhs = convolve2d(a * x + b * y, k)
    rhs = a * convolve2d(x, k) + b * convolve2d(y, k)
    assert np.abs(lhs - rhs).max() <= 1e-9


@given(hnp.arrays(np.float64, (7, 6), elements=unit), hnp.arrays(np.float64, (3, 3), elements=st.floats(0.01, 1)))
def test_circular_mass_preserved(x, k):
    k = k / k.sum()
    assert abs(convolve2d(x, k, "circular").sum() - x.sum()) <= 1e-6


def test_distance_single_point_and_segment():
    d = distance_to_polyline(PixelDomain(10, 10), [(3.0, 4.0)])
    yy, xx = np.mgrid[0:10, 0:10]
    assert np.allclose(d, np.hypot(xx - 3, yy - 4))
    d = distance_to_polyline(PixelDomain(10, 10), [(2.0, 5.0), (8.0, 5.0)])
    assert d[9, 5] == pytest.approx(4.0)  # pixel x=5, y=9
    with pytest.raises(ValueError):
        distance_to_polyline(PixelDomain(4, 4), [])


def test_distance_matches_dense_oracle(rng):
    pts = rng.uniform(0, 15, size=(5, 2))
    d = distance_to_polyline(PixelDomain(16, 16), pts)
    assert np.abs(d - dense_polyline_distance(16, 16, pts)).max() <= 1e-3


@given(hnp.arrays(np.float64, (4, 2), elements=st.floats(-5, 25)))
def test_distance_is_lipschitz(pts):
    d = distance_to_polyline(PixelDomain(12, 14), pts)
    for axis in (0, 1):
        assert np.abs(np.diff(d, axis=axis)).max() <= 1.0 + 1e-9
    assert np.abs(d[1:, 1:] - d[:-1, :-1]).max() <= np.sqrt(2) + 1e-9


def test_components_basic():
    assert connected_components(np.zeros((5, 5), bool)).count == 0
    m = np.zeros((4, 4), bool)
    m[1, 1] = m[2, 2] = True
    assert connected_components(m, 8).count == 1
    assert connected_components(m, 4).count == 2
    with pytest.raises(ValueError):
        connected_components(m, 6)


@pytest.mark.parametrize("conn", [4, 8])
def test_components_match_flood_fill(rng, conn):
    m = rng.uniform(size=(32, 32)) < 0.45
    comps = connected_components(m, conn)
    ref, n = flood_fill_labels(m, conn)
    assert comps.count == n
    assert same_partition(comps.labels, ref)


@given(hnp.arrays(bool, (10, 12)))
def test_components_partition(m):
    comps = connected_components(m)
    assert np.array_equal(comps.labels > 0, m)
    assert sum(comps.areas) == m.sum()
    for k, (y0, x0, y1, x1) in enumerate(comps.boxes):
        ys, xs = np.nonzero(comps.labels == k + 1)
        assert (ys.min(), xs.min(), ys.max() + 1, xs.max() + 1) == (y0, x0, y1, x1)


def test_median_cases(rng):
    f = rng.uniform(size=(4, 5, 3))
    assert np.array_equal(median_background([f, f, f]), f)
    px = [np.full((1, 1), v) for v in (0.1, 0.9, 0.4)]
    assert median_background(px)[0, 0] == 0.4
    with pytest.raises(ValueError):
        median_background([f, f])
    with pytest.raises(ValueError):
        median_background([f, f, f[:2]])


@given(hnp.arrays(np.float64, (3, 4, 5, 2), elements=unit))
def test_median_matches_sort(stack):
    frames = list(stack)
    assert np.array_equal(median_background(frames), median_sort(frames))


def test_farthest_pair_on_path():
    m = np.zeros((5, 9), bool)
    m[2, 1:8] = True
    coords, graph = pixel_graph(m)
    a, b, dist = farthest_pair(graph, start=3)
    ends = {tuple(coords[a]), tuple(coords[b])}
    assert ends == {(2, 1), (2, 7)}
    assert dist.max() == pytest.approx(6.0)
