import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from fmokit.deblur import (
    DeblurConfig,
    DeblurError,
    constraint_violation,
    embed,
    objective,
    project_ordered_box,
    project_simplex,
    solve,
)
from fmokit.formation import render_matting
from fmokit.imgcore import PixelDomain
from fmokit.synthgen import GenConfig, gen_sample, gen_texture
from fmokit.trajectory import Curve, rasterize_kernel
from oracles import objective_direct, ordered_box_grid, ordered_box_slsqp, simplex_kkt

unit = st.floats(-0.5, 1.5, allow_nan=False)


# ---------------------------------------------------------------- objective


def test_objective_trivial_cases(rng):
    H = np.zeros((9, 9))
    H[0, 0] = 1.0
    z = np.zeros((3, 3, 3))
    assert objective(z, z[..., 0], H, np.zeros((9, 9, 3)), np.zeros((9, 9))) == 0.0
    F = np.full((3, 3, 3), 0.2)
    M = np.full((3, 3), 0.6)
    hf = rng.uniform(size=(9, 9, 3))
    hm = rng.uniform(size=(9, 9))
    with_tv = objective(F, M, H, hf, hm, DeblurConfig(alpha_f=5.0, alpha_m=5.0))
    without = objective(F, M, H, hf, hm, DeblurConfig(alpha_f=0.0, alpha_m=0.0))
    assert with_tv == without


@pytest.mark.parametrize("seed", range(4))
def test_objective_matches_direct_sum(seed):
    r = np.random.default_rng(seed)
    H = r.uniform(size=(11, 13)) * (r.uniform(size=(11, 13)) < 0.3)
    H /= H.sum()
    F = r.uniform(size=(5, 5, 3))
    M = r.uniform(size=(5, 5))
    hf = r.uniform(size=(11, 13, 3))
    hm = r.uniform(size=(11, 13))
    cfg = DeblurConfig(alpha_f=0.3, alpha_m=0.7)
    ref = objective_direct(F, M, H, hf, hm, 0.3, 0.7)
    assert abs(objective(F, M, H, hf, hm, cfg) - ref) <= 1e-10


def test_objective_shape_errors():
    H = np.ones((6, 6)) / 36
    with pytest.raises(ValueError):
        objective(np.zeros((3, 3, 3)), np.zeros((3, 4)), H, np.zeros((6, 6, 3)), np.zeros((6, 6)))
    with pytest.raises(ValueError):
        objective(np.zeros((3, 3, 3)), np.zeros((3, 3)), H, np.zeros((6, 6, 1)), np.zeros((6, 6)))


# ---------------------------------------------------------------- projections


def test_ordered_box_examples():
    assert project_ordered_box(0.3, 0.7) == (0.3, 0.7)
    f, m = project_ordered_box(0.9, 0.5)
    assert f == pytest.approx(0.7) and m == pytest.approx(0.7)


@given(unit, unit)
def test_ordered_box_near_grid_optimum(f, m):
    pf, pm = project_ordered_box(f, m)
    assert 0 <= pf <= pm <= 1
    _, _, best = ordered_box_grid(f, m)
    assert np.hypot(pf - f, pm - m) <= best + 0.02


@given(hnp.arrays(np.float64, 3, elements=unit), unit)
def test_ordered_box_multichannel(f, m):
    pf, pm = project_ordered_box(f, m)
    assert np.all(pf >= 0) and np.all(pf <= pm) and pm <= 1
    rf, rm = ordered_box_slsqp(f, m)
    ours = np.sum((pf - f) ** 2) + (pm - m) ** 2
    ref = np.sum((rf - f) ** 2) + (rm - m) ** 2
    assert ours <= ref + 1e-7
    again = project_ordered_box(pf, pm)
    assert np.abs(again[0] - pf).max() <= 1e-12 and abs(again[1] - pm) <= 1e-12


def test_ordered_box_arrays(rng):
    f = rng.uniform(-1, 2, size=(4, 5, 3))
    m = rng.uniform(-1, 2, size=(4, 5))
    pf, pm = project_ordered_box(f, m)
    assert pf.shape == f.shape and pm.shape == m.shape
    assert constraint_violation(pf, pm, np.array([1.0])) == 0.0


def test_simplex_examples():
    assert np.allclose(project_simplex([0.5, 0.5, 2.0]), [0, 0, 1])
    p = np.array([0.2, 0.3, 0.5])
    assert np.abs(project_simplex(p) - p).max() <= 1e-12
    with pytest.raises(ValueError):
        project_simplex([np.nan, 1.0])


@given(hnp.arrays(np.float64, st.integers(1, 7), elements=st.floats(-3, 3)))
def test_simplex_matches_kkt(v):
    p = project_simplex(v)
    assert p.min() >= 0 and abs(p.sum() - 1) <= 1e-12
    assert np.abs(p - simplex_kkt(v)).max() <= 1e-9
    assert np.abs(project_simplex(p) - p).max() <= 1e-12


# ---------------------------------------------------------------- solver


def test_identity_kernel_recovers_exactly(rng):
    s = 7
    F = rng.uniform(size=(s, s, 3))
    M = rng.uniform(size=(s, s))
    F = np.minimum(F, M[..., None])
    H = np.zeros((15, 15))
    H[0, 0] = 1.0
    hf = embed(F, H.shape)
    hm = embed(M, H.shape)
    cfg = DeblurConfig(alpha_f=0, alpha_m=0, optimize_h=False, patch_size=s, iterations=200, tolerance=1e-14)
    rep = solve(hf, hm, H, cfg)
    assert np.abs(rep.F - F).max() <= 1e-6 and np.abs(rep.M - M).max() <= 1e-6


def _line_case(texture="stripes", r=6.0, seed=0):
    obj = gen_texture(texture, r, seed)
    dom = PixelDomain(48, 64)
    H = rasterize_kernel(Curve((20.0, 22.0), (24.0, 6.0)), dom)
    pair = render_matting(obj, H)
    return obj, H, pair


def _psnr(est, ref, sel):
    return 10 * np.log10(1.0 / np.mean((est - ref)[sel] ** 2))


@pytest.mark.parametrize("texture", ["solid", "stripes", "rings"])
def test_line_kernel_quality(texture):
    obj, H, pair = _line_case(texture)
    rep = solve(pair.hf, pair.hm, H, DeblurConfig(patch_size=obj.size))
    assert _psnr(rep.F, obj.F, obj.M > 0.5) >= 25


def test_report_invariants_and_descent():
    obj, H, pair = _line_case("checker")
    rep = solve(pair.hf, pair.hm, H, DeblurConfig(patch_size=obj.size, iterations=15))
    assert rep.violation <= 1e-6
    assert len(rep.objective_trace) == rep.iterations + 1
    assert rep.extras["final_objective"] <= rep.objective_trace[0]
    assert constraint_violation(rep.F, rep.M, rep.H) <= 1e-6
    assert set(rep.to_json()) == {"objective_trace", "violation", "iterations", "seconds"}


@pytest.mark.parametrize("seed", range(4))
def test_descent_on_generated_pairs(seed):
    cfg = GenConfig(seed=seed, frame_size=(96, 96), radius_range=(5.0, 9.0), negative_fraction=0.0)
    s = gen_sample(cfg, 0)
    rep = solve(s.hf, s.hm, s.kernel, DeblurConfig(iterations=20))
    assert rep.violation <= 1e-6
    assert rep.extras["final_objective"] <= rep.objective_trace[0]


def test_fixed_h_keeps_kernel():
    obj, H, pair = _line_case()
    rep = solve(pair.hf, pair.hm, H, DeblurConfig(patch_size=obj.size, optimize_h=False, iterations=10))
    assert np.allclose(rep.H, H)


def test_fixed_point_rerun():
    obj, H, pair = _line_case("solid")
    cfg = DeblurConfig(patch_size=obj.size)
    rep = solve(pair.hf, pair.hm, H, cfg)
    again = solve(pair.hf, pair.hm, rep.H, DeblurConfig(patch_size=obj.size, iterations=5),
                  F_init=rep.F, M_init=rep.M)
    a = rep.extras["final_objective"]
    b = again.extras["final_objective"]
    assert abs(a - b) < 10 * cfg.tolerance * max(a, 1e-12)


def test_invalid_inputs():
    obj, H, pair = _line_case()
    with pytest.raises(ValueError):
        solve(pair.hf, pair.hm, H * 2)
    with pytest.raises(ValueError):
        solve(pair.hf, pair.hm, -H)
    with pytest.raises(ValueError):
        solve(pair.hf, pair.hm, H[:10])
    bad = pair.hf.copy()
    bad[0, 0, 0] = np.nan
    with pytest.raises(DeblurError):
        solve(bad, pair.hm, H, DeblurConfig(patch_size=obj.size, iterations=2))
