"""Recover sharp appearance, mask and a refined blur kernel from a matting pair.

Minimises

    1/2 (||H*F - Hf||^2 + ||H*M - Hm||^2) + alpha_F ||grad F||_1 + alpha_M ||grad M||_1

subject to 0 <= F <= M <= 1, H >= 0, sum(H) = 1, by alternating an ADMM
solve over (F, M) with an ADMM solve over H. F and M live on an S x S patch;
H, Hf and Hm live on the (larger) crop canvas. Convolutions inside the
solver are circular so every quadratic step is a pointwise division in the
frequency domain; when the kernel stays at least S // 2 pixels from the
canvas border this coincides with zero-padded convolution.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import _kernels


class DeblurError(RuntimeError):
    pass


@dataclass
class DeblurConfig:
    alpha_f: float = 0.001
    alpha_m: float = 0.05
    iterations: int = 50
    rho: float = 1.0
    tolerance: float = 1e-4
    optimize_h: bool = True
    patch_size: int | None = None
    inner_fm: int = 10
    inner_h: int = 30
    # H may only move this many pixels away from the initial support
    support_radius: int = 2
    # outer iterations of pure (F, M) updates before H starts moving
    warmup: int = 10

    def __post_init__(self):
        if self.alpha_f < 0 or self.alpha_m < 0:
            raise ValueError("regularisation weights must be non-negative")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.rho <= 0:
            raise ValueError("rho must be positive")


@dataclass
class SolveReport:
    F: np.ndarray
    M: np.ndarray
    H: np.ndarray
    objective_trace: list
    violation: float
    iterations: int
    seconds: float = 0.0
    extras: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "objective_trace": [float(v) for v in self.objective_trace],
            "violation": float(self.violation),
            "iterations": int(self.iterations),
            "seconds": float(self.seconds),
        }


# ---------------------------------------------------------------- projections


def project_ordered_box(f, m):
    """Euclidean projection of (f_1..f_C, m) onto {0 <= f_c <= m <= 1}.

    ``f`` has shape (..., C) (or is a scalar for a single channel) and ``m``
    the matching leading shape. The projection is exact: channels above the
    mask value are pooled with it in decreasing order, then everything is
    clipped to [0, 1].
    """
    f_arr = np.asarray(f, dtype=np.float64)
    m_arr = np.asarray(m, dtype=np.float64)
    scalar_f = f_arr.ndim == m_arr.ndim
    if scalar_f:
        f_arr = f_arr[..., None]
    lead = m_arr.shape
    nc = f_arr.shape[-1]
    f_new, m_new = _kernels.project_ordered_box(f_arr.reshape(-1, nc), m_arr.reshape(-1))
    f_new = f_new.reshape(lead + (nc,))
    m_new = m_new.reshape(lead)
    if scalar_f:
        f_new = f_new[..., 0]
    if m_arr.ndim == 0:
        return (float(f_new) if scalar_f else f_new), float(m_new)
    return f_new, m_new


def project_simplex(h) -> np.ndarray:
    """Euclidean projection onto {h >= 0, sum(h) = 1}; keeps the input shape."""
    h = np.asarray(h, dtype=np.float64)
    if not np.all(np.isfinite(h)):
        raise ValueError("simplex projection needs finite entries")
    v = h.ravel()
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, v.size + 1)
    rho = np.count_nonzero(u - css / ind > 0)
    theta = css[rho - 1] / rho
    return np.maximum(v - theta, 0.0).reshape(h.shape)


# ---------------------------------------------------------------- operators


def embed(patch: np.ndarray, shape) -> np.ndarray:
    """Place an (S, S, ...) patch on a canvas with its centre at the origin (wrapping)."""
    s = patch.shape[0]
    c = s // 2
    out = np.zeros(tuple(shape[:2]) + patch.shape[2:])
    idx = (np.arange(s) - c) % shape[0]
    jdx = (np.arange(s) - c) % shape[1]
    out[np.ix_(idx, jdx)] = patch
    return out


def extract(canvas: np.ndarray, s: int) -> np.ndarray:
    c = s // 2
    idx = (np.arange(s) - c) % canvas.shape[0]
    jdx = (np.arange(s) - c) % canvas.shape[1]
    return canvas[np.ix_(idx, jdx)]


def _rfft(x):
    return np.fft.rfft2(x, axes=(0, 1))


def _irfft(x, shape):
    return np.fft.irfft2(x, s=shape, axes=(0, 1))


def blur_circular(H: np.ndarray, patch: np.ndarray) -> np.ndarray:
    """Circular same-size convolution of the canvas kernel ``H`` with a centred patch."""
    shape = H.shape
    kf = _rfft(H)
    pf = _rfft(embed(patch, shape))
    if pf.ndim == 3:
        kf = kf[..., None]
    return _irfft(kf * pf, shape)


def _tv(p: np.ndarray) -> float:
    return float(np.abs(np.diff(p, axis=0)).sum() + np.abs(np.diff(p, axis=1)).sum())


def objective(F, M, H, hf_hat, hm_hat, cfg: DeblurConfig | None = None) -> float:
    """Energy of (F, M, H): squared data misfit plus anisotropic TV.

    Gradients are forward differences with zero at the last row and
    column of the patch.
    """
    cfg = cfg or DeblurConfig()
    F = np.asarray(F, dtype=np.float64)
    M = np.asarray(M, dtype=np.float64)
    H = np.asarray(H, dtype=np.float64)
    hf_hat = np.asarray(hf_hat, dtype=np.float64)
    hm_hat = np.asarray(hm_hat, dtype=np.float64)
    if F.shape[:2] != M.shape or H.shape != hm_hat.shape or hf_hat.shape[:2] != H.shape:
        raise ValueError("inconsistent shapes for F, M, H, Hf, Hm")
    if F.shape[2] != hf_hat.shape[2]:
        raise ValueError("F and Hf channel counts differ")
    patch = np.concatenate([F, M[..., None]], axis=2)
    pred = blur_circular(H, patch)
    data = 0.5 * (((pred[..., :-1] - hf_hat) ** 2).sum() + ((pred[..., -1] - hm_hat) ** 2).sum())
    return float(data + cfg.alpha_f * _tv(F) + cfg.alpha_m * _tv(M))


def default_patch_size(hm_hat: np.ndarray) -> int:
    """Odd patch side from the blurred mask mass (sum(H*M) = sum(M) ~ pi r^2)."""
    r = math.sqrt(max(float(np.sum(hm_hat)), 1.0) / math.pi)
    s = 2 * math.ceil(r) + 3
    limit = min(hm_hat.shape)
    if s > limit:
        s = limit if limit % 2 else limit - 1
    return s


def constraint_violation(F, M, H) -> float:
    F = np.asarray(F)
    M = np.asarray(M)
    H = np.asarray(H)
    return float(
        max(
            0.0,
            -F.min(),
            (F - M[..., None]).max(),
            M.max() - 1.0,
            -H.min(),
            abs(H.sum() - 1.0),
        )
    )


# ---------------------------------------------------------------- solver


def _disk(radius: int) -> np.ndarray:
    yy, xx = np.mgrid[-radius : radius + 1, -radius : radius + 1]
    return xx * xx + yy * yy <= radius * radius


def _shrink(x, thresh):
    return np.sign(x) * np.maximum(np.abs(x) - thresh, 0.0)


def _project_on_support(W, support):
    out = np.zeros_like(W)
    out[support] = project_simplex(W[support])
    return out


def _refine_kernel(H, gram, corr, step, support, steps, shape):
    """FISTA on 1/2 sum_c ||P_c * H - y_c||^2 over the simplex restricted to ``support``.

    ``gram`` = sum_c |P_c^|^2 and ``corr`` = sum_c conj(P_c^) y_c^ in the
    rfft domain, so the gradient is irfft(gram * H^ - corr).
    """
    def value(Hc):
        hf = _rfft(Hc)
        # 1/2 ||P H - y||^2 up to a constant, via Parseval on the full spectrum
        return float(_irfft(0.5 * gram * hf - corr, shape).ravel() @ Hc.ravel())

    x = H
    z = H
    t = 1.0
    f_x = value(x)
    for _ in range(steps):
        grad = _irfft(gram * _rfft(z) - corr, shape)
        x_new = _project_on_support(z - step * grad, support)
        f_new = value(x_new)
        if f_new > f_x:
            # restart momentum; a plain projected-gradient step cannot ascend
            t = 1.0
            z = x
            grad = _irfft(gram * _rfft(z) - corr, shape)
            x_new = _project_on_support(z - step * grad, support)
            f_new = value(x_new)
            if f_new > f_x:
                break
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        z = x_new + ((t - 1.0) / t_new) * (x_new - x)
        x, f_x, t = x_new, f_new, t_new
    return x


def solve(
    hf_hat: np.ndarray,
    hm_hat: np.ndarray,
    H_init: np.ndarray,
    cfg: DeblurConfig | None = None,
    F_init: np.ndarray | None = None,
    M_init: np.ndarray | None = None,
) -> SolveReport:
    cfg = cfg or DeblurConfig()
    t_start = time.perf_counter()
    hf_hat = np.asarray(hf_hat, dtype=np.float64)
    hm_hat = np.asarray(hm_hat, dtype=np.float64)
    H_init = np.asarray(H_init, dtype=np.float64)
    if hm_hat.ndim != 2 or hf_hat.shape[:2] != hm_hat.shape or hf_hat.ndim != 3:
        raise ValueError("Hf must be (h, w, C) and Hm (h, w)")
    if H_init.shape != hm_hat.shape:
        raise ValueError("H_init must live on the matting domain")
    if np.any(H_init < 0) or abs(H_init.sum() - 1.0) > 1e-6 or not np.all(np.isfinite(H_init)):
        raise ValueError("H_init must be non-negative with unit sum")

    shape = hm_hat.shape
    nc = hf_hat.shape[2]
    s = cfg.patch_size or default_patch_size(hm_hat)
    if s % 2 == 0 or s > min(shape):
        raise ValueError(f"patch size {s} must be odd and fit in {shape}")
    rho = cfg.rho

    y = np.concatenate([hf_hat, hm_hat[..., None]], axis=2)
    y_f = _rfft(y)
    support = embed(np.ones((s, s)), shape) > 0
    alpha = np.array([cfg.alpha_f] * nc + [cfg.alpha_m]) / rho
    # only differences between two patch pixels are regularised, exactly as in
    # objective(); the remaining splits get a zero threshold and drop out
    inner_x = embed(np.pad(np.ones((s, s - 1)), ((0, 0), (0, 1))), shape)[..., None] > 0
    inner_y = embed(np.pad(np.ones((s - 1, s)), ((0, 1), (0, 0))), shape)[..., None] > 0
    alpha_x = np.where(inner_x, alpha, 0.0)
    alpha_y = np.where(inner_y, alpha, 0.0)
    h, w = shape
    dx_f = (np.exp(2j * np.pi * np.fft.rfftfreq(w)) - 1.0)[None, :]
    dy_f = (np.exp(2j * np.pi * np.fft.fftfreq(h)) - 1.0)[:, None]
    dtd = (np.abs(dx_f) ** 2 + np.abs(dy_f) ** 2)[..., None]

    if F_init is not None and M_init is not None:
        patch0 = np.concatenate([np.asarray(F_init, float), np.asarray(M_init, float)[..., None]], 2)
    else:
        patch0 = np.zeros((s, s, nc + 1))
    Z = embed(patch0, shape)
    X = Z.copy()
    Bz = np.zeros_like(Z)
    Vx = np.zeros_like(Z)
    Vy = np.zeros_like(Z)
    Ax = np.zeros_like(Z)
    Ay = np.zeros_like(Z)

    H = H_init.copy()
    h_support = ndimage.binary_dilation(H_init > 0, structure=_disk(cfg.support_radius))
    Hz = H.copy()

    def current_obj(Zc, Hc):
        p = extract(Zc, s)
        return objective(p[..., :nc], p[..., nc], Hc, hf_hat, hm_hat, cfg)

    def project_fm(W):
        out = np.zeros_like(W)
        sel = W[support]
        f_new, m_new = _kernels.project_ordered_box(sel[:, :nc], sel[:, nc])
        out[support] = np.concatenate([f_new, m_new[:, None]], axis=1)
        return out

    trace = [current_obj(Z, Hz)]
    best = (trace[0], Z.copy(), Hz.copy())
    k_f = _rfft(Hz)
    den = None
    used = 0
    h_active = False
    for it in range(1, cfg.iterations + 1):
        h_active = h_active or (cfg.optimize_h and it > cfg.warmup)
        # ---- (F, M) step with H fixed
        if den is None:
            den = (np.abs(k_f) ** 2)[..., None] + rho * dtd + rho
            rhs_data = np.conj(k_f)[..., None] * y_f
        for _ in range(cfg.inner_fm):
            back = (
                np.roll(Vx - Ax, 1, axis=1) - (Vx - Ax)
                + np.roll(Vy - Ay, 1, axis=0) - (Vy - Ay)
                + Z - Bz
            )
            X = _irfft((rhs_data + rho * _rfft(back)) / den, shape)
            gx = np.roll(X, -1, axis=1) - X
            gy = np.roll(X, -1, axis=0) - X
            Vx = _shrink(gx + Ax, alpha_x)
            Vy = _shrink(gy + Ay, alpha_y)
            Z = project_fm(X + Bz)
            Ax += gx - Vx
            Ay += gy - Vy
            Bz += X - Z

        # ---- H step with (F, M) fixed: accelerated projected gradient
        if h_active:
            p_f = _rfft(Z)
            gram = (np.abs(p_f) ** 2).sum(axis=2)
            corr = (np.conj(p_f) * y_f).sum(axis=2)
            step = 1.0 / max(float(gram.max()), 1e-12)
            Hz = _refine_kernel(Hz, gram, corr, step, h_support, cfg.inner_h, shape)
            k_f = _rfft(Hz)
            den = None

        obj = current_obj(Z, Hz)
        if not math.isfinite(obj) or not np.all(np.isfinite(Z)):
            raise DeblurError(f"non-finite iterate at outer iteration {it}")
        trace.append(obj)
        used = it
        if obj < best[0]:
            best = (obj, Z.copy(), Hz.copy())
        prev = trace[-2]
        if abs(prev - obj) <= cfg.tolerance * max(abs(prev), 1e-300):
            if cfg.optimize_h and not h_active:
                # (F, M) settled for the initial kernel; now let H move
                h_active = True
                continue
            break

    # the best iterate is already feasible: Z is a projection and Hz a simplex point
    _, Zb, Hb = best
    patch = extract(Zb, s)
    F = patch[..., :nc]
    M = patch[..., nc]
    f_fix, m_fix = _kernels.project_ordered_box(F.reshape(-1, nc), M.reshape(-1))
    F = f_fix.reshape(F.shape)
    M = m_fix.reshape(M.shape)
    Hb = np.maximum(Hb, 0.0)
    Hb = Hb / Hb.sum()
    return SolveReport(
        F=F,
        M=M,
        H=Hb,
        objective_trace=trace,
        violation=constraint_violation(F, M, Hb),
        iterations=used,
        seconds=time.perf_counter() - t_start,
        extras={"patch_size": s, "final_objective": objective(F, M, Hb, hf_hat, hm_hat, cfg)},
    )
