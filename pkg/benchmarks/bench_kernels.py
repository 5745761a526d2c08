"""Time the numba kernels against the numpy fallback on typical workloads.

    python benchmarks/bench_kernels.py [--repeat 5]

Both backends are imported directly, so FMOKIT_NUMBA does not matter here.
The first numba call of each kernel (compilation) is excluded.
"""
import argparse
import time

import numpy as np

from fmokit._kernels import _numpy

try:
    from fmokit._kernels import _numba
except ImportError:
    _numba = None


def workloads(rng):
    pts = np.cumsum(rng.normal(size=(40, 2)) * 6, axis=0) + [256, 128]
    xs = rng.uniform(0, 511, 20_000)
    ys = rng.uniform(0, 255, 20_000)
    w = np.full(20_000, 1 / 20_000)
    H = np.zeros((256, 512))
    H[100:140, 150:300] = rng.uniform(size=(40, 150))
    patch = rng.uniform(size=(31, 31, 4))
    img = rng.uniform(size=(256, 512))
    k = rng.uniform(size=(7, 7))
    ii, jj = np.nonzero(k)
    dy = (ii - 3).astype(np.int64)
    dx = (jj - 3).astype(np.int64)
    f = rng.uniform(-0.5, 1.5, size=(100_000, 3))
    m = rng.uniform(-0.5, 1.5, size=100_000)
    return {
        "polyline_distance 256x512, 40 pts": lambda mod: mod.polyline_distance(256, 512, pts),
        "splat_bilinear 20k samples": lambda mod: mod.splat_bilinear(256, 512, xs, ys, w),
        "splat_patch 31x31x4 over 6k taps": lambda mod: mod.splat_patch(H, patch),
        "convolve_taps 7x7 on 256x512": lambda mod: mod.convolve_taps(img, dy, dx, k[ii, jj], False),
        "project_ordered_box 100k x 3": lambda mod: mod.project_ordered_box(f, m),
    }


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':40s} {'numpy [ms]':>11s} {'numba [ms]':>11s} {'speedup':>8s}")
    for name, call in workloads(rng).items():
        t_np = best_of(lambda: call(_numpy), args.repeat)
        if _numba is None:
            print(f"{name:40s} {1e3 * t_np:11.2f} {'n/a':>11s}")
            continue
        call(_numba)  # compile
        t_nb = best_of(lambda: call(_numba), args.repeat)
        print(f"{name:40s} {1e3 * t_np:11.2f} {1e3 * t_nb:11.2f} {t_np / t_nb:7.1f}x")


if __name__ == "__main__":
    main()
