"""Frame-sequence pipeline: background, detection, trajectory fit and optional deblurring."""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import io as fio
from .deblur import DeblurConfig, solve
from .detect import EPSILON, DetectError, detect, skeleton_polyline
from .evalkit import bbox_stats, draw_trajectories
from .fitcurve import FitError, fit_polyline
from .imgcore import PixelDomain, median_background
from .synthgen import disc_mask
from .trajectory import rasterize_kernel, sample_curve

REPORT_VERSION = 1


@dataclass
class PipelineConfig:
    epsilon: float = EPSILON
    deblur: bool = False
    fix_h: bool = False
    iters: int = 50
    alpha_f: float = 0.001
    alpha_m: float = 0.05
    jobs: int = 1

    def deblur_config(self) -> DeblurConfig:
        return DeblurConfig(alpha_f=self.alpha_f, alpha_m=self.alpha_m, iterations=self.iters,
                            optimize_h=not self.fix_h)


def _window(curve, r, domain: PixelDomain):
    """Frame window holding the whole blurred streak plus a margin."""
    pts = sample_curve(curve, 65)
    pad = int(np.ceil(3 * r)) + 4
    x0 = max(int(np.floor(pts[:, 0].min())) - pad, 0)
    y0 = max(int(np.floor(pts[:, 1].min())) - pad, 0)
    x1 = min(int(np.ceil(pts[:, 0].max())) + pad + 1, domain.width)
    y1 = min(int(np.ceil(pts[:, 1].max())) + pad + 1, domain.height)
    return y0, x0, y1, x1


def matting_estimate(frame, B, H, r):
    """Classical matting pair: a disc blurred by ``H`` for Hm, then Hf = I - (1 - Hm) B."""
    from .formation import ObjectModel, render_matting

    M = disc_mask(r)
    pair = render_matting(ObjectModel(F=np.zeros(M.shape + (3,)), M=M, r=r), H)
    hm = pair.hm
    hf = np.clip(frame - (1.0 - hm)[..., None] * B, 0.0, hm[..., None])
    return hf, hm


def deblur_detection(frame, B, curve, r, cfg: DeblurConfig):
    domain = PixelDomain.of(frame)
    y0, x0, y1, x1 = _window(curve, r, domain)
    local = curve.translated(-x0, -y0)
    win = PixelDomain(y1 - y0, x1 - x0)
    H = rasterize_kernel(local, win)
    hf, hm = matting_estimate(frame[y0:y1, x0:x1], B[y0:y1, x0:x1], H, r)
    s = min(2 * int(np.ceil(r)) + 3, min(win) - (1 - min(win) % 2))
    return solve(hf, hm, H, replace(cfg, patch_size=s)), (y0, x0, y1, x1)


def process_frame(index: int, frames, names, out_dir, cfg: PipelineConfig) -> dict:
    frame = frames[2]
    B = median_background(frames)
    name = names[2]
    entry = {"index": index, "frame": name, "detections": [], "errors": []}
    curves = []
    for k, det in enumerate(detect(frame, B, cfg.epsilon)):
        item = {
            "bbox": list(det.bbox),
            "crop_box": list(det.crop_box),
            "scale": det.scale,
            "radius": det.radius,
        }
        try:
            poly = det.to_frame(skeleton_polyline(det))
            fit = fit_polyline(poly)
        except (DetectError, FitError) as exc:
            entry["errors"].append(f"detection {k}: {exc}")
            continue
        item.update(curve=fit.curve.to_dict(), kind=fit.kind, residual=fit.residual)
        curves.append(fit.curve)
        if cfg.deblur:
            stem = f"{Path(name).stem}_det{k}"
            try:
                rep, window = deblur_detection(frame, B, fit.curve, det.radius, cfg.deblur_config())
            except ValueError as exc:
                entry["errors"].append(f"detection {k}: deblur failed: {exc}")
            else:
                files = {}
                for key, arr in (("f", rep.F), ("m", rep.M), ("h", rep.H)):
                    files[key] = f"{stem}_{key}.fmoa"
                    fio.write_fmoa(Path(out_dir) / files[key], arr)
                summary = rep.to_json()
                # wall-clock time would break byte-identical reports
                summary.pop("seconds")
                item["deblur"] = {"window": list(window), "files": files, "report": summary}
        entry["detections"].append(item)
    overlay = f"{Path(name).stem}_traj.png"
    fio.write_png(Path(out_dir) / overlay, draw_trajectories(frame, curves) / 255.0, bits=8)
    entry["overlay"] = overlay
    return entry


def _job(args):
    index, paths, out_dir, cfg = args
    frames = [fio.read_png(p)[..., :3] for p in paths]
    return process_frame(index, frames, [Path(p).name for p in paths], out_dir, cfg)


def run_pipeline(frame_paths, out_dir, cfg: PipelineConfig | None = None) -> dict:
    """Process every frame that has two predecessors and write ``report.json``."""
    cfg = cfg or PipelineConfig()
    paths = [os.fspath(p) for p in frame_paths]
    if len(paths) < 3:
        raise ValueError("the pipeline needs at least 3 frames")
    names = [Path(p).name for p in paths]
    if len(set(names)) != len(names):
        raise ValueError("frame file names must be unique")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tasks = [(t, paths[t - 2 : t + 1], os.fspath(out), cfg) for t in range(2, len(paths))]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            entries = list(pool.map(_job, tasks))
    else:
        entries = [_job(t) for t in tasks]

    boxes = [e["detections"][0]["bbox"] for e in entries if len(e["detections"]) == 1]
    report = {
        "version": REPORT_VERSION,
        "config": asdict(cfg) | {"jobs": None},
        "frames": entries,
        "box_stats": bbox_stats(boxes) if len(boxes) >= 2 else None,
    }
    fio.write_json(out / "report.json", report)
    return report
