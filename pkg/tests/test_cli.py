import json
import shutil
import subprocess
import sys

import numpy as np
import pytest

from conftest import write_sequence
from fmokit import io as fio
from fmokit.cli import main, parse_args
from fmokit.pipeline import PipelineConfig, run_pipeline
from fmokit.trajectory import Curve


def _files(root):
    return {p.relative_to(root): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("ds")
    assert main(["synth", "--seed", "7", "--count", "4", "--val-count", "2", "--out", str(root / "a"),
                 "--contrast-floor", "0.2", "--r-min", "8", "--r-max", "30"]) == 0
    return root / "a"


def test_synth_layout(dataset):
    manifest = fio.read_json(dataset / "manifest.json")
    assert len(manifest["splits"]["train"]) == 4 and len(manifest["splits"]["val"]) == 2


def test_synth_is_byte_identical(dataset, tmp_path):
    assert main(["synth", "--seed", "7", "--count", "4", "--val-count", "2", "--out", str(tmp_path / "b"),
                 "--contrast-floor", "0.2", "--r-min", "8", "--r-max", "30"]) == 0
    assert _files(dataset) == _files(tmp_path / "b")


def test_verify_fresh_and_tampered(dataset, tmp_path, capsys):
    assert main(["verify", str(dataset)]) == 0
    bad = tmp_path / "bad"
    shutil.copytree(dataset, bad)
    manifest = fio.read_json(bad / "manifest.json")
    target = next(e["dir"] for e in manifest["splits"]["train"] if e["b"])
    hf = fio.read_fmoa(bad / target / "hf.fmoa")
    hf += 0.1 * (hf > 0)
    fio.write_fmoa(bad / target / "hf.fmoa", np.minimum(hf, 1.0))
    capsys.readouterr()
    assert main(["verify", str(bad)]) != 0
    assert target in capsys.readouterr().out


def test_unknown_flag_fails():
    proc = subprocess.run([sys.executable, "-m", "fmokit", "synth", "--out", "x", "--bogus"],
                          capture_output=True, text=True)
    assert proc.returncode != 0 and "usage" in proc.stderr


def test_config_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# settings\nepsilon = 0.45\niters = 7\n")
    args = parse_args(["pipeline", "--frames-dir", "x", "--out", "o", "--config", str(cfg), "--iters", "3"])
    assert args.epsilon == 0.45 and args.iters == 3
    assert parse_args(["pipeline", "--frames-dir", "x", "--out", "o"]).epsilon == 0.3
    cfg.write_text("nonsense_key = 1\n")
    with pytest.raises(SystemExit):
        parse_args(["pipeline", "--frames-dir", "x", "--out", "o", "--config", str(cfg)])


def test_fit_deblur_loss_subcommands(dataset, tmp_path, capsys):
    manifest = fio.read_json(dataset / "manifest.json")
    d = dataset / next(e["dir"] for e in manifest["splits"]["train"] if e["b"])
    H = fio.read_fmoa(d / "hf.fmoa")  # any non-negative raster works as a kernel
    fio.write_fmoa(tmp_path / "k.fmoa", H.sum(axis=2))
    capsys.readouterr()
    assert main(["fit", "--kernel", str(tmp_path / "k.fmoa"), "--out", str(tmp_path / "c.json")]) == 0
    out = json.loads(capsys.readouterr().out)
    assert Curve.from_dict(out["curve"]).is_normalized()

    assert main(["deblur", "--hf", str(d / "hf.fmoa"), "--hm", str(d / "hm.fmoa"), "--curve",
                 str(d / "curve.json"), "--iters", "3", "--fix-h", "--out", str(tmp_path / "db")]) == 0
    rep = fio.read_json(tmp_path / "db" / "report.json")
    assert rep["violation"] <= 1e-6 and len(rep["objective_trace"]) == rep["iterations"] + 1
    for name in ("f.fmoa", "m.fmoa", "h.fmoa"):
        assert (tmp_path / "db" / name).exists()

    capsys.readouterr()
    assert main(["loss", "--sample", str(d), "--pred", str(d)]) == 0
    loss = json.loads(capsys.readouterr().out)
    assert loss["total"] <= 1e-9 and loss["detection"] == 0.0


def test_detect_and_eval_subcommands(dataset, tmp_path, capsys):
    manifest = fio.read_json(dataset / "manifest.json")
    d = dataset / next(e["dir"] for e in manifest["splits"]["train"] if e["b"])
    assert main(["detect", "--frame", str(d / "frame.png"), "--background", str(d / "bg.png"),
                 "--out", str(tmp_path / "det")]) == 0
    dets = fio.read_json(tmp_path / "det" / "detections.json")
    for item in dets["detections"]:
        assert (tmp_path / "det" / item["tdf"]).exists()

    assert main(["eval", "--manifest", str(dataset / "manifest.json"), "--out", str(tmp_path / "ev"),
                 "--overlays"]) == 0
    metrics = fio.read_json(tmp_path / "ev" / "metrics.json")
    assert 0 <= metrics["scores"]["precision"] <= 1 and 0 <= metrics["scores"]["recall"] <= 1
    for name in metrics["histograms"]:
        assert (tmp_path / "ev" / name).exists()


def test_missing_input_is_an_error(tmp_path, capsys):
    assert main(["fit", "--kernel", str(tmp_path / "nope.fmoa")]) == 1


# ---------------------------------------------------------------- pipeline


def test_pipeline_identical_frames(tmp_path, rng):
    frame = rng.uniform(size=(64, 96, 3))
    paths = []
    for k in range(3):
        paths.append(tmp_path / f"f{k}.png")
        fio.write_png(paths[-1], frame, bits=16)
    report = run_pipeline(paths, tmp_path / "out")
    assert [len(f["detections"]) for f in report["frames"]] == [0]
    with pytest.raises(ValueError):
        run_pipeline(paths[:2], tmp_path / "out")


@pytest.fixture(scope="module")
def sequence20(tmp_path_factory):
    root = tmp_path_factory.mktemp("seq")
    paths, seq = write_sequence(root / "frames", length=20, seed=5)
    return root, paths, seq


def test_pipeline_report_schema(sequence20):
    root, paths, _ = sequence20
    out = root / "run1"
    assert main(["pipeline", "--frames-dir", str(root / "frames"), "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert set(report) == {"version", "config", "frames", "box_stats"}
    assert len(report["frames"]) == 18
    n = 0
    for entry in report["frames"]:
        assert (out / entry["overlay"]).exists()
        for det in entry["detections"]:
            assert Curve.from_dict(det["curve"]).is_normalized()
            n += 1
    assert n >= 14


def test_pipeline_reports_are_deterministic(sequence20):
    root, paths, _ = sequence20
    a = run_pipeline(paths[:8], root / "d1", PipelineConfig(deblur=True, iters=3))
    b = run_pipeline(paths[:8], root / "d2", PipelineConfig(deblur=True, iters=3, jobs=2))
    assert a == b
    assert (root / "d1" / "report.json").read_bytes() == (root / "d2" / "report.json").read_bytes()
    for entry in a["frames"]:
        for det in entry["detections"]:
            for name in det["deblur"]["files"].values():
                assert (root / "d1" / name).exists()
