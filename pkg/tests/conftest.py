import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(params=["numpy", "numba"])
def backend(request):
    """Each hot-loop implementation, so both are held to the same contract."""
    if request.param == "numpy":
        from fmokit._kernels import _numpy as mod
    else:
        mod = pytest.importorskip("fmokit._kernels._numba")
    return mod


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def write_sequence(directory, length=12, seed=3, **overrides):
    """Seeded synthetic frame sequence as 16-bit PNGs; returns (paths, sequence)."""
    from fmokit import io as fio
    from fmokit.synthgen import GenConfig, gen_sequence

    params = dict(seed=seed, radius_range=(8.0, 20.0), contrast_floor=0.2)
    params.update(overrides)
    seq = gen_sequence(GenConfig(**params), length)
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for k, frame in enumerate(seq.frames):
        p = directory / f"{k:04d}.png"
        fio.write_png(p, frame, bits=16)
        paths.append(p)
    return paths, seq


@pytest.fixture
def sequence_dir(tmp_path):
    paths, seq = write_sequence(tmp_path / "seq")
    return tmp_path / "seq", paths, seq


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance suite's per-criterion lines at the end of the run."""
    lines = []
    for key in ("passed", "failed"):
        for rep in terminalreporter.stats.get(key, []):
            if getattr(rep, "when", None) == "call" and "test_acceptance" in rep.nodeid:
                lines += [ln for ln in rep.capstdout.splitlines() if ln.startswith("criterion")]
    if lines:
        terminalreporter.section("acceptance criteria")
        for ln in sorted(lines):
            terminalreporter.write_line(ln)
