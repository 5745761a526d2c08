"""Command-line entry point: ``fmokit <subcommand> [options]``.

Settings resolve as flags, then ``--config`` file entries (``key = value``
lines, ``#`` comments), then built-in defaults.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io as fio

log = logging.getLogger("fmokit")


class CliError(Exception):
    pass


# ------------------------------------------------------------------ config file


def read_config(path) -> dict:
    """Parse ``key = value`` lines; values are read as JSON when possible."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line or line.startswith("["):
                continue
            if "=" not in line:
                raise CliError(f"{path}:{lineno}: expected key = value")
            key, value = (p.strip() for p in line.split("=", 1))
            try:
                parsed = json.loads(value)
            except json.JSONDecodeError:
                parsed = value.strip("'\"")
            out[key.replace("-", "_")] = parsed
    return out


# ------------------------------------------------------------------ subcommands


def cmd_synth(args) -> int:
    from .synthgen import GenConfig, gen_dataset, gen_sequence

    cfg = GenConfig(
        seed=args.seed,
        train_count=args.count,
        val_count=args.val_count,
        background_dir=args.backgrounds,
        contrast_floor=args.contrast_floor,
        noise_sigma=args.noise_sigma,
        radius_range=(args.r_min, args.r_max),
    )
    out = Path(args.out)
    if args.sequence:
        seq = gen_sequence(cfg, args.sequence)
        out.mkdir(parents=True, exist_ok=True)
        names = []
        for k, frame in enumerate(seq.frames):
            names.append(f"{k:04d}.png")
            fio.write_png(out / names[-1], frame, bits=16)
        fio.write_json(out / "sequence.json", {
            "config": cfg.to_json(),
            "frames": names,
            "radius": seq.radius,
            "curves": [c.to_dict() for c in seq.curves],
        })
        print(f"wrote {len(names)} frames to {out}")
        return 0
    manifest = gen_dataset(cfg, out, jobs=args.jobs)
    total = sum(len(v) for v in manifest["splits"].values())
    print(f"wrote {total} samples to {out}")
    return 0


def cmd_verify(args) -> int:
    from .synthgen import verify_dataset

    bad = verify_dataset(args.root)
    for name in sorted(bad):
        print(f"{name}: {'; '.join(bad[name])}")
    if bad:
        print(f"{len(bad)} bad sample(s)", file=sys.stderr)
        return 1
    print("all samples consistent")
    return 0


def cmd_detect(args) -> int:
    from .detect import detect, estimate_tdf_from_response, skeleton_polyline
    from .fitcurve import fit_polyline

    frame = fio.read_png(args.frame)[..., :3]
    B = fio.read_png(args.background)[..., :3]
    injected = fio.read_fmoa(args.inject_tdf) if args.inject_tdf else None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    items = []
    for k, det in enumerate(detect(frame, B, args.epsilon, tdf=injected)):
        poly = skeleton_polyline(det)
        fio.write_fmoa(out / f"tdf_{k}.fmoa", estimate_tdf_from_response(det, poly))
        fit = fit_polyline(det.to_frame(poly))
        items.append({
            "bbox": list(det.bbox),
            "crop_box": list(det.crop_box),
            "scale": det.scale,
            "radius": det.radius,
            "tdf": f"tdf_{k}.fmoa",
            "curve": fit.curve.to_dict(),
            "kind": fit.kind,
        })
    fio.write_json(out / "detections.json", {"epsilon": args.epsilon, "detections": items})
    print(json.dumps({"detections": len(items)}))
    return 0


def cmd_fit(args) -> int:
    from .fitcurve import fit_curve
    from .trajectory import save_curve

    H = fio.read_fmoa(args.kernel)
    if H.sum() <= 0:
        raise CliError("kernel has no mass")
    fit = fit_curve(H / H.sum(), min_mass=args.min_mass)
    if args.out:
        save_curve(args.out, fit.curve)
    print(json.dumps({"curve": fit.curve.to_dict(), "kind": fit.kind, "residual": fit.residual},
                     sort_keys=True))
    return 0


def cmd_deblur(args) -> int:
    from .deblur import DeblurConfig, solve
    from .imgcore import PixelDomain
    from .trajectory import load_curve, rasterize_kernel

    hf = fio.read_fmoa(args.hf)
    hm = fio.read_fmoa(args.hm)
    H = rasterize_kernel(load_curve(args.curve), PixelDomain.of(hm))
    cfg = DeblurConfig(alpha_f=args.alpha_f, alpha_m=args.alpha_m, iterations=args.iters,
                       optimize_h=not args.fix_h, patch_size=args.patch_size)
    rep = solve(hf, hm, H, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fio.write_fmoa(out / "f.fmoa", rep.F)
    fio.write_fmoa(out / "m.fmoa", rep.M)
    fio.write_fmoa(out / "h.fmoa", rep.H)
    fio.write_json(out / "report.json", rep.to_json() | {"patch_size": rep.extras["patch_size"]})
    print(json.dumps({"objective": rep.objective_trace[-1], "iterations": rep.iterations}))
    return 0


def cmd_loss(args) -> int:
    from .losses import LossWeights, detection_loss, matting_fitting_loss
    from .trajectory import load_curve

    gt_dir = Path(args.sample)
    pred_dir = Path(args.pred)
    meta = fio.read_json(gt_dir / "meta.json")
    gt = {
        "hf": fio.read_fmoa(gt_dir / "hf.fmoa"),
        "hm": fio.read_fmoa(gt_dir / "hm.fmoa"),
        "curve": load_curve(gt_dir / "curve.json"),
        "b": 1.0 if meta["b"] else 0.0,
    }
    pred = {
        "hf": fio.read_fmoa(pred_dir / "hf.fmoa"),
        "hm": fio.read_fmoa(pred_dir / "hm.fmoa"),
        "curve": load_curve(pred_dir / "curve.json"),
        "b": args.b_hat,
    }
    w = LossWeights(args.alpha_a, args.alpha_b, args.alpha_c)
    result = matting_fitting_loss(gt, pred, w)
    tdf_pred = pred_dir / "tdf.fmoa"
    if tdf_pred.exists():
        result["detection"] = detection_loss(fio.read_fmoa(gt_dir / "tdf.fmoa"), fio.read_fmoa(tdf_pred))
    print(json.dumps(result, sort_keys=True, indent=2))
    return 0


def _classical_predictions(root: Path, entries, epsilon):
    from .detect import DetectError, detect, skeleton_polyline
    from .fitcurve import FitError, fit_polyline

    preds = {}
    for e in entries:
        d = root / e["dir"]
        frame = fio.read_png(d / "frame.png")
        B = fio.read_png(d / "bg.png")
        items = []
        for det in detect(frame, B, epsilon):
            try:
                fit = fit_polyline(det.to_frame(skeleton_polyline(det)))
            except (DetectError, FitError):
                continue
            items.append({"curve": fit.curve.to_dict(), "radius": det.radius})
        preds[e["dir"]] = items
    return preds


def cmd_eval(args) -> int:
    from .evalkit import bbox_stats, draw_trajectories, match_frame, precision_recall, tiou, write_histograms
    from .imgcore import PixelDomain
    from .trajectory import Curve, eval_curve, load_curve

    manifest_path = Path(args.manifest)
    root = manifest_path.parent
    manifest = fio.read_json(manifest_path)
    entries = manifest["splits"][args.split]
    if args.predictions:
        preds = fio.read_json(args.predictions)
    else:
        preds = _classical_predictions(root, entries, args.epsilon)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    dets, gts, radii, tious, iou, speed = [], [], [], [], [], []
    for e in entries:
        d = root / e["dir"]
        items = preds.get(e["dir"], [])
        curves = [Curve.from_dict(p["curve"]) for p in items]
        dets.append(curves)
        radii.append([float(p["radius"]) for p in items])
        hm = fio.read_fmoa(d / "hm.fmoa")
        region = hm > args.gt_threshold
        gts.append([region] if e["b"] else [])
        if e["b"]:
            gt_curve = load_curve(d / "curve.json")
            r = float(e["r"])
            for i, _, _ in match_frame(curves, [region], radii[-1], PixelDomain.of(hm)):
                tious.append(tiou(curves[i], gt_curve, r))
            # object boxes at the start and the end of the exposure
            a, b = eval_curve(gt_curve, np.array([0.0, 1.0]))
            boxes = [(p[1] - r, p[0] - r, p[1] + r, p[0] + r) for p in (a, b)]
            st = bbox_stats(boxes)
            iou += st["iou"]
            speed += st["speed"]
        if args.overlays:
            frame = fio.read_png(d / "frame.png")
            name = e["dir"].replace("/", "_")
            fio.write_png(out / f"{name}_traj.png", draw_trajectories(frame, curves) / 255.0, bits=8)

    scores = precision_recall(dets, gts, radii)
    scores["tiou_matched"] = float(np.mean(tious)) if tious else None
    stats = {"iou": iou, "speed": speed}
    hist = write_histograms(stats, out) if iou else []
    fio.write_json(out / "metrics.json", {
        "split": args.split,
        "scores": scores,
        "histograms": [p.name for p in hist],
        "stats": stats,
    })
    print(json.dumps(scores, sort_keys=True))
    return 0


def cmd_pipeline(args) -> int:
    from .pipeline import PipelineConfig, run_pipeline

    if args.frames_dir:
        frames = sorted(p for p in Path(args.frames_dir).iterdir() if p.suffix.lower() == ".png")
    else:
        frames = [Path(p) for p in args.frames]
    cfg = PipelineConfig(epsilon=args.epsilon, deblur=args.deblur, fix_h=args.fix_h, iters=args.iters,
                         alpha_f=args.alpha_f, alpha_m=args.alpha_m, jobs=args.jobs)
    report = run_pipeline(frames, args.out, cfg)
    n = sum(len(f["detections"]) for f in report["frames"])
    print(f"{len(report['frames'])} frames, {n} detections")
    return 0


# ------------------------------------------------------------------ parser


def _common(p, out_default=None):
    p.add_argument("--config", help="key = value settings file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default=out_default, required=out_default is None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fmokit", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset or sequence")
    _common(p)
    p.add_argument("--count", type=int, default=5000, help="training samples")
    p.add_argument("--val-count", type=int, default=0)
    p.add_argument("--sequence", type=int, default=0, help="write a frame sequence of this length instead")
    p.add_argument("--backgrounds", help="directory of background images")
    p.add_argument("--contrast-floor", type=float, default=0.1)
    p.add_argument("--noise-sigma", type=float, default=0.005)
    p.add_argument("--r-min", type=float, default=5.0)
    p.add_argument("--r-max", type=float, default=100.0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("verify", help="re-check every sample of a dataset")
    p.add_argument("root")
    p.add_argument("--config")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("detect", help="detect fast moving objects in one frame")
    _common(p)
    p.add_argument("--frame", required=True)
    p.add_argument("--background", required=True)
    p.add_argument("--epsilon", type=float, default=0.3)
    p.add_argument("--inject-tdf", help="FMOA raster used instead of the difference response")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("fit", help="fit a trajectory to a blur kernel")
    p.add_argument("--config")
    p.add_argument("--kernel", required=True)
    p.add_argument("--min-mass", type=float, default=0.05)
    p.add_argument("--out", help="also write the curve JSON here")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("deblur", help="recover appearance, mask and kernel from a matting pair")
    _common(p)
    p.add_argument("--hf", required=True)
    p.add_argument("--hm", required=True)
    p.add_argument("--curve", required=True)
    p.add_argument("--fix-h", action="store_true")
    p.add_argument("--iters", type=int, default=50)
    p.add_argument("--alpha-f", type=float, default=0.001)
    p.add_argument("--alpha-m", type=float, default=0.05)
    p.add_argument("--patch-size", type=int)
    p.set_defaults(func=cmd_deblur)

    p = sub.add_parser("loss", help="training losses of a prediction against a sample")
    p.add_argument("--config")
    p.add_argument("--sample", required=True)
    p.add_argument("--pred", required=True, help="directory with hf.fmoa, hm.fmoa, curve.json [, tdf.fmoa]")
    p.add_argument("--b-hat", type=float, default=1.0 - 1e-12)
    p.add_argument("--alpha-a", type=float, default=15.0)
    p.add_argument("--alpha-b", type=float, default=0.4)
    p.add_argument("--alpha-c", type=float, default=4.0 / 256.0)
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("eval", help="score predictions on a dataset split")
    _common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="train", choices=("train", "val"))
    p.add_argument("--predictions", help="JSON: sample dir -> [{curve, radius}]; default runs the detector")
    p.add_argument("--epsilon", type=float, default=0.3)
    p.add_argument("--gt-threshold", type=float, default=1e-3)
    p.add_argument("--overlays", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pipeline", help="run detection, fitting and deblurring over a sequence")
    _common(p)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--frames", nargs="+")
    src.add_argument("--frames-dir")
    p.add_argument("--epsilon", type=float, default=0.3)
    p.add_argument("--deblur", action="store_true")
    p.add_argument("--fix-h", action="store_true")
    p.add_argument("--iters", type=int, default=50)
    p.add_argument("--alpha-f", type=float, default=0.001)
    p.add_argument("--alpha-m", type=float, default=0.05)
    p.set_defaults(func=cmd_pipeline)
    return parser


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        # config entries become defaults, so explicit flags still win
        settings = read_config(args.config)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = sorted(set(settings) - known)
        if unknown:
            parser.error(f"unknown config keys: {', '.join(unknown)}")
        sub.set_defaults(**settings)
        args = parser.parse_args(argv)
    return args


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except CliError as exc:
        print(f"fmokit: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CliError, OSError, ValueError, RuntimeError) as exc:
        print(f"fmokit {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
