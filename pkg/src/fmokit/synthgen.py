"""Synthetic fast-moving-object frames with full ground truth.

Textured discs travel along random trajectories over natural (or procedural)
backgrounds. Every sample is a pure function of ``(config, split, index)``.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import cv2
import numpy as np
from scipy import ndimage

from . import io as fio
from .formation import ObjectModel, add_observation_noise, blend, guard_clamp, render_matting
from .imgcore import PixelDomain
from .trajectory import (
    Curve,
    arc_length,
    eval_curve,
    load_curve,
    normalize_curve,
    rasterize_kernel,
    sample_curve,
    save_curve,
    tdf,
)

TEXTURES = ("stripes", "checker", "rings", "solid")
CURVE_KINDS = ("line", "parabola", "piecewise")
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")
SPLITS = ("train", "val")


class GenerationError(RuntimeError):
    pass


@dataclass
class GenConfig:
    seed: int = 0
    frame_size: tuple = (256, 512)
    radius_range: tuple = (5.0, 100.0)
    train_count: int = 5000
    val_count: int = 500
    background_dir: str | None = None
    # None draws a family per sample
    texture: str | None = None
    contrast_floor: float = 0.1
    noise_sigma: float = 0.005
    # arc length range in multiples of the object radius
    speed_range: tuple = (2.0, 8.0)
    negative_fraction: float = 0.1

    def __post_init__(self):
        self.frame_size = tuple(int(v) for v in self.frame_size)
        self.radius_range = tuple(float(v) for v in self.radius_range)
        self.speed_range = tuple(float(v) for v in self.speed_range)
        if self.train_count < 1 or self.val_count < 0:
            raise ValueError("need at least one training sample")
        if self.texture is not None and self.texture not in TEXTURES:
            raise ValueError(f"unknown texture family {self.texture!r}")
        if not 0.0 <= self.contrast_floor <= 1.0:
            raise ValueError("contrast floor must lie in [0, 1]")
        if self.noise_sigma < 0:
            raise ValueError("noise sigma must be non-negative")
        lo, hi = self.radius_range
        if not 0 < lo <= hi:
            raise ValueError("bad radius range")

    def count(self, split: str) -> int:
        return self.train_count if split == "train" else self.val_count

    def to_json(self) -> dict:
        d = asdict(self)
        d["frame_size"] = list(self.frame_size)
        d["radius_range"] = list(self.radius_range)
        d["speed_range"] = list(self.speed_range)
        return d


@dataclass
class FmoSample:
    frame: np.ndarray
    background: np.ndarray
    tdf: np.ndarray
    curve: Curve
    hf: np.ndarray
    hm: np.ndarray
    obj: ObjectModel | None
    r: float
    b: bool
    kernel: np.ndarray
    meta: dict = field(default_factory=dict)


# ------------------------------------------------------------------ textures


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def disc_mask(r: float) -> np.ndarray:
    """Anti-aliased disc on a (2 ceil(r) + 1)^2 patch: 1 inside, 1 px linear edge."""
    half = int(math.ceil(r))
    yy, xx = np.mgrid[-half : half + 1, -half : half + 1]
    return np.clip(r + 0.5 - np.hypot(xx, yy), 0.0, 1.0)


def gen_texture(family: str, r: float, seed, color=None) -> ObjectModel:
    if family not in TEXTURES:
        raise ValueError(f"unknown texture family {family!r}")
    if r <= 0:
        raise ValueError("radius must be positive")
    rng = _rng(seed)
    M = disc_mask(r)
    half = M.shape[0] // 2
    yy, xx = np.mgrid[-half : half + 1, -half : half + 1].astype(np.float64)
    col_a = np.asarray(color, dtype=np.float64) if color is not None else rng.uniform(0, 1, 3)
    col_b = rng.uniform(0, 1, 3)
    theta = rng.uniform(0, math.pi)
    u = xx * math.cos(theta) + yy * math.sin(theta)
    v = -xx * math.sin(theta) + yy * math.cos(theta)
    period = rng.uniform(3.0, max(4.0, r))
    if family == "solid":
        sel = np.ones_like(M, dtype=bool)
    elif family == "stripes":
        sel = np.floor(u / period + rng.uniform()) % 2 == 0
    elif family == "checker":
        off = rng.uniform(0, 1, 2)
        sel = (np.floor(u / period + off[0]) + np.floor(v / period + off[1])) % 2 == 0
    else:
        sel = np.floor(np.hypot(xx, yy) / (0.5 * period)) % 2 == 0
    pattern = np.where(sel[..., None], col_a, col_b)
    return ObjectModel(F=pattern * M[..., None], M=M, r=float(r))


# ------------------------------------------------------------------ curves


def _rot(v, ang):
    c, s = math.cos(ang), math.sin(ang)
    return np.array([c * v[0] - s * v[1], s * v[0] + c * v[1]])


def _unit_shape(kind, rng):
    """A curve of the given class with c0 = 0 and arc length 1."""
    theta = rng.uniform(0, 2 * math.pi)
    u = np.array([math.cos(theta), math.sin(theta)])
    n = np.array([-u[1], u[0]])
    zero = np.zeros(2)
    if kind == "line":
        c = Curve(zero, u)
    elif kind == "parabola":
        bend = rng.uniform(0.15, 0.6) * rng.choice([-1.0, 1.0])
        c = Curve(zero, u, bend * n + rng.uniform(-0.2, 0.2) * u)
    else:
        frac = rng.uniform(0.3, 0.7)
        ang = rng.uniform(math.radians(20), math.radians(120)) * rng.choice([-1.0, 1.0])
        c = Curve(zero, frac * u, zero, (1 - frac) * _rot(u, ang))
    return c.scaled(1.0 / arc_length(c))


def gen_curve(domain: PixelDomain, r: float, speed_range, seed, max_attempts: int = 1000) -> Curve:
    """Random normalized curve that keeps at least ``r`` px from every border.

    ``speed_range`` bounds the arc length in pixels. The class is drawn
    uniformly first so rejections do not bias class frequencies.
    """
    rng = _rng(seed)
    lo, hi = (float(v) for v in speed_range)
    if lo < 0 or hi < lo:
        raise ValueError("bad speed range")
    x_lo, x_hi = r, domain.width - 1 - r
    y_lo, y_hi = r, domain.height - 1 - r
    if x_lo > x_hi or y_lo > y_hi:
        raise GenerationError(f"domain {domain} too small for radius {r}")
    if hi == 0:
        return Curve((rng.uniform(x_lo, x_hi), rng.uniform(y_lo, y_hi)))
    kind = CURVE_KINDS[int(rng.integers(len(CURVE_KINDS)))]
    for _ in range(max_attempts):
        length = rng.uniform(lo, hi)
        shape = _unit_shape(kind, rng).scaled(length)
        if kind == "piecewise" and math.hypot(*shape.c3) <= 1.0:
            continue
        pts = sample_curve(shape, 201)
        mn, mx = pts.min(axis=0), pts.max(axis=0)
        if mx[0] - mn[0] > x_hi - x_lo or mx[1] - mn[1] > y_hi - y_lo:
            continue
        c0 = (rng.uniform(x_lo - mn[0], x_hi - mx[0]), rng.uniform(y_lo - mn[1], y_hi - mx[1]))
        c = normalize_curve(shape.translated(*c0))
        check = eval_curve(c, np.linspace(0, 1, 101))
        if np.all(domain.contains(check[:, 0], check[:, 1], margin=r)):
            return c
    raise GenerationError(f"no {kind} curve satisfied the constraints in {max_attempts} attempts")


# ------------------------------------------------------------------ backgrounds


def list_backgrounds(directory) -> list:
    if directory is None:
        return []
    path = Path(directory)
    files = sorted(p for p in path.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not files:
        raise GenerationError(f"no background images in {directory}")
    return files


def procedural_background(size, rng) -> np.ndarray:
    """Smooth colour field standing in for a natural photo."""
    h, w = size
    base = rng.uniform(0.2, 0.8, 3)
    noise = rng.normal(0.0, 1.0, (h // 8 + 2, w // 8 + 2, 3))
    noise = ndimage.gaussian_filter(noise, sigma=(1.5, 1.5, 0))
    noise = cv2.resize(noise, (w, h), interpolation=cv2.INTER_CUBIC)
    noise = noise / (np.abs(noise).max() + 1e-12)
    return np.clip(base + 0.2 * noise, 0.0, 1.0)


def load_background(path, size) -> np.ndarray:
    try:
        img = fio.read_png(path)
    except OSError as exc:
        raise GenerationError(f"unreadable background {path}") from exc
    if img.ndim == 2:
        img = np.repeat(img[..., None], 3, axis=2)
    img = img[..., :3]
    h, w = size
    return np.clip(cv2.resize(img, (w, h), interpolation=cv2.INTER_AREA), 0.0, 1.0)


# ------------------------------------------------------------------ samples


def contrast(frame: np.ndarray, background: np.ndarray, hm: np.ndarray) -> float:
    """Mean |I - B| / Hm over the region where Hm is at least half its maximum.

    Dividing by the blurred mask undoes the blur attenuation, so the value is
    the apparent object-background colour difference.
    """
    peak = float(hm.max())
    if peak <= 0:
        return 0.0
    region = hm >= 0.5 * peak
    diff = np.abs(frame - background)[region] / hm[region][:, None]
    return float(diff.mean())


def _sample_rng(cfg: GenConfig, split: str, index: int):
    return np.random.default_rng([cfg.seed, SPLITS.index(split), index])


def _background(cfg, rng, backgrounds):
    if backgrounds:
        path = backgrounds[int(rng.integers(len(backgrounds)))]
        img = load_background(path, cfg.frame_size)
    else:
        img = procedural_background(cfg.frame_size, rng)
    # the stored PNG is 16-bit; compose against exactly what gets stored
    return fio.quantize(img, 16)


def gen_sample(cfg: GenConfig, index: int, split: str = "train", backgrounds=None) -> FmoSample:
    if backgrounds is None:
        backgrounds = list_backgrounds(cfg.background_dir)
    rng = _sample_rng(cfg, split, index)
    domain = PixelDomain(*cfg.frame_size)
    B = _background(cfg, rng, backgrounds)
    noise_seed = int(rng.integers(2**31))
    meta = {"seed": cfg.seed, "split": split, "index": index, "sigma": cfg.noise_sigma,
            "noise_seed": noise_seed}

    if rng.uniform() < cfg.negative_fraction:
        frame = add_observation_noise(B, cfg.noise_sigma, noise_seed)
        zeros = np.zeros(cfg.frame_size)
        meta.update(r=0.0, b=False, kind=None, texture=None, contrast=0.0)
        return FmoSample(frame, B, zeros, Curve(), np.zeros(B.shape), zeros, None, 0.0, False,
                         zeros, meta)

    r_max = min(cfg.radius_range[1], (min(cfg.frame_size) - 1) / 2.0 - 1.0)
    r = float(rng.uniform(cfg.radius_range[0], max(cfg.radius_range[0], r_max)))
    avail = math.hypot(domain.width - 1 - 2 * r, domain.height - 1 - 2 * r)
    hi = min(cfg.speed_range[1] * r, 0.9 * avail)
    lo = min(cfg.speed_range[0] * r, hi)
    curve = gen_curve(domain, r, (lo, hi), rng)
    H = rasterize_kernel(curve, domain)

    family = cfg.texture or TEXTURES[int(rng.integers(len(TEXTURES)))]
    for _ in range(100):
        obj = gen_texture(family, r, rng)
        pair = render_matting(obj, H)
        clean = guard_clamp(blend(pair.hf, pair.hm, B))
        score = contrast(clean, B, pair.hm)
        if score >= cfg.contrast_floor:
            break
    else:
        raise GenerationError(
            f"sample {split}/{index}: contrast floor {cfg.contrast_floor} not reached"
        )
    frame = add_observation_noise(clean, cfg.noise_sigma, noise_seed)
    D = tdf(curve, r, domain)
    meta.update(r=r, b=True, kind=curve.kind, texture=family, contrast=score)
    return FmoSample(frame, B, D, curve, pair.hf, pair.hm, obj, r, True, H, meta)


def write_sample(sample: FmoSample, directory) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    fio.write_png(d / "frame.png", sample.frame, bits=16)
    fio.write_png(d / "bg.png", sample.background, bits=16)
    fio.write_fmoa(d / "tdf.fmoa", sample.tdf)
    fio.write_fmoa(d / "hf.fmoa", sample.hf)
    fio.write_fmoa(d / "hm.fmoa", sample.hm)
    if sample.obj is not None:
        fio.write_fmoa(d / "f.fmoa", sample.obj.F)
        fio.write_fmoa(d / "m.fmoa", sample.obj.M)
    else:
        fio.write_fmoa(d / "f.fmoa", np.zeros((1, 1, 3)))
        fio.write_fmoa(d / "m.fmoa", np.zeros((1, 1)))
    save_curve(d / "curve.json", sample.curve)
    fio.write_json(d / "meta.json", sample.meta)


def _write_one(args):
    cfg, split, index, root = args
    sample = gen_sample(cfg, index, split)
    rel = f"{split}/{index}"
    write_sample(sample, Path(root) / rel)
    return {
        "index": index,
        "dir": rel,
        "b": sample.b,
        "r": sample.r,
        "kind": sample.meta["kind"],
        "files": ["frame.png", "bg.png", "tdf.fmoa", "hf.fmoa", "hm.fmoa", "f.fmoa", "m.fmoa",
                  "curve.json", "meta.json"],
    }


def gen_dataset(cfg: GenConfig, root, jobs: int = 1) -> dict:
    """Write the whole dataset under ``root`` and return the manifest."""
    list_backgrounds(cfg.background_dir)  # fail early on an empty directory
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    tasks = [(cfg, split, i, os.fspath(root)) for split in SPLITS for i in range(cfg.count(split))]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            entries = list(pool.map(_write_one, tasks, chunksize=4))
    else:
        entries = [_write_one(t) for t in tasks]
    manifest = {"config": cfg.to_json(), "splits": {s: [] for s in SPLITS}}
    for (_, split, _, _), entry in zip(tasks, entries):
        manifest["splits"][split].append(entry)
    fio.write_json(root / "manifest.json", manifest)
    return manifest


# ------------------------------------------------------------------ verification


def _recon_tol():
    # half a 16-bit step plus float32 storage dust
    return 0.5 / 65535.0 + 1e-6


def verify_sample(directory) -> list:
    """Re-derive a stored sample from its ground truth; returns a list of problems."""
    d = Path(directory)
    problems = []
    try:
        meta = fio.read_json(d / "meta.json")
        frame = fio.read_png(d / "frame.png")
        B = fio.read_png(d / "bg.png")
        D = fio.read_fmoa(d / "tdf.fmoa")
        hf = fio.read_fmoa(d / "hf.fmoa")
        hm = fio.read_fmoa(d / "hm.fmoa")
        F = fio.read_fmoa(d / "f.fmoa")
        M = fio.read_fmoa(d / "m.fmoa")
        curve = load_curve(d / "curve.json")
    except (OSError, ValueError, KeyError) as exc:
        return [f"unreadable: {exc}"]

    domain = PixelDomain.of(frame)
    if B.shape != frame.shape or hm.shape != domain or hf.shape != frame.shape or D.shape != domain:
        return ["array shapes disagree"]
    sigma, noise_seed = float(meta["sigma"]), int(meta["noise_seed"])

    if not meta["b"]:
        if np.any(hf != 0) or np.any(hm != 0) or np.any(D != 0):
            problems.append("negative sample carries ground truth")
        expected = add_observation_noise(B, sigma, noise_seed)
        if np.abs(expected - frame).max() > _recon_tol():
            problems.append("negative frame is not background plus noise")
        return problems

    tol = 1e-6
    r = float(meta["r"])
    if not curve.is_normalized():
        problems.append("curve is not normalized")
    if hf.min() < -tol or (hf - hm[..., None]).max() > tol or hm.max() > 1 + tol:
        problems.append("matting pair violates 0 <= Hf <= Hm <= 1")
    try:
        H = rasterize_kernel(curve, domain)
        pair = render_matting(ObjectModel(F=F, M=M, r=r), H)
    except ValueError as exc:
        return problems + [f"ground truth inconsistent: {exc}"]
    if np.abs(pair.hf - hf).max() > tol or np.abs(pair.hm - hm).max() > tol:
        problems.append("hf/hm do not match F, M blurred along the curve")
    if np.abs(tdf(curve, r, domain) - D).max() > tol:
        problems.append("tdf does not match the curve")
    recon = add_observation_noise(np.clip(blend(hf, hm, B), 0, 1), sigma, noise_seed)
    if np.abs(recon - frame).max() > _recon_tol():
        problems.append("frame does not match Hf + (1 - Hm) B + noise")
    return problems


def verify_dataset(root) -> dict:
    """Map of sample dir -> problems, for every sample with at least one problem."""
    root = Path(root)
    manifest = fio.read_json(root / "manifest.json")
    bad = {}
    for split in SPLITS:
        for entry in manifest["splits"].get(split, []):
            problems = verify_sample(root / entry["dir"])
            if problems:
                bad[entry["dir"]] = problems
    return bad


# ------------------------------------------------------------------ sequences


@dataclass
class FmoSequence:
    frames: list
    background: np.ndarray
    curves: list
    radius: float
    hms: list


def gen_sequence(cfg: GenConfig, length: int, seed: int | None = None,
                 exposure: float = 0.4) -> FmoSequence:
    """A static background crossed by one object moving at constant speed.

    The shutter is open for the first ``exposure`` fraction of each frame
    interval, so every frame shows a straight streak followed by an unseen
    gap. The object reflects off the borders between frames.
    """
    if not 0.0 < exposure <= 1.0:
        raise ValueError("exposure must lie in (0, 1]")
    if length < 1:
        raise ValueError("sequence needs at least one frame")
    rng = np.random.default_rng([cfg.seed if seed is None else seed, 99])
    backgrounds = list_backgrounds(cfg.background_dir)
    domain = PixelDomain(*cfg.frame_size)
    B = _background(cfg, rng, backgrounds)
    r_max = min(cfg.radius_range[1], min(cfg.frame_size) / 6.0)
    r = float(rng.uniform(cfg.radius_range[0], max(cfg.radius_range[0], r_max)))
    lo_b = np.array([r + 1.0, r + 1.0])
    hi_b = np.array([domain.width - 2.0 - r, domain.height - 2.0 - r])
    speed = float(rng.uniform(*cfg.speed_range)) * r
    # speed is the streak length; one frame interval covers speed / exposure
    step = min(speed / exposure, 0.45 * float(min(hi_b - lo_b)))
    ang = rng.uniform(0, 2 * math.pi)
    vel = step * np.array([math.cos(ang), math.sin(ang)])
    pos = rng.uniform(lo_b, hi_b)
    family = cfg.texture or TEXTURES[int(rng.integers(len(TEXTURES)))]
    obj = gen_texture(family, r, rng)
    frames, curves, hms = [], [], []
    for k in range(length):
        nxt = pos + vel
        for axis in range(2):
            if not lo_b[axis] <= nxt[axis] <= hi_b[axis]:
                vel[axis] = -vel[axis]
                nxt[axis] = pos[axis] + vel[axis]
        half = 0.5 * exposure * (nxt - pos)
        # uniform speed while the shutter is open: each half covers half the streak
        c = normalize_curve(Curve(pos, half, (0.0, 0.0), half))
        H = rasterize_kernel(c, domain)
        pair = render_matting(obj, H)
        clean = guard_clamp(blend(pair.hf, pair.hm, B))
        frames.append(add_observation_noise(clean, cfg.noise_sigma, int(rng.integers(2**31))))
        curves.append(c)
        hms.append(pair.hm)
        pos = nxt
    return FmoSequence(frames, B, curves, r, hms)
