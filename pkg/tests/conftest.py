import numpy as np
import pytest
from PIL import Image

from evslice.events import EventStream, SensorGeometry
from evslice.formats import write_events, write_tensor


def write_frame_dump(directory, frames, timestamps):
    directory.mkdir(parents=True, exist_ok=True)
    for k, f in enumerate(frames):
        Image.fromarray(f).save(directory / f"frame_{k:05d}.png")
    (directory / "timestamps.txt").write_text("".join(f"{t}\n" for t in timestamps))
    return directory


def moving_bar_frames(n=6, H=24, W=32, width=4):
    frames = []
    for k in range(n):
        f = np.full((H, W), 30, np.uint8)
        x0 = 2 + 3 * k
        f[:, x0:x0 + width] = 220
        frames.append(f)
    return frames


@pytest.fixture
def bar_dir(tmp_path):
    frames = moving_bar_frames()
    return write_frame_dump(tmp_path / "bar", frames, [k * 33_333 for k in range(len(frames))])


@pytest.fixture
def dense_evst(tmp_path):
    """Uniform 1000 ev/s on a 10x10 sensor: with alpha 0.1 (M = 10) the break-even slice rate is 100/s."""
    t = np.arange(0, 3_000_000, 1000)
    s = EventStream.from_arrays(SensorGeometry(10, 10), t, t % 10, (t // 10) % 10,
                                np.where((t // 1000) % 3 == 0, -1, 1))
    path = tmp_path / "dense.evst"
    write_events(s, path)
    return path


@pytest.fixture
def tensor_pair(tmp_path):
    rng = np.random.default_rng(0)
    a = np.cumsum(rng.normal(size=(2, 7, 3, 4, 4)), axis=1).astype(np.float32)
    b = (a + 0.3 * rng.normal(size=a.shape)).astype(np.float32)
    write_tensor(a, tmp_path / "gen.lat5")
    write_tensor(b, tmp_path / "ev.lat5")
    return tmp_path / "gen.lat5", tmp_path / "ev.lat5"


@pytest.fixture
def metric_dirs(tmp_path):
    rng = np.random.default_rng(1)
    ref, cand = tmp_path / "ref", tmp_path / "cand"
    for bucket in ("blur", "lowlight", "normal", "overexposure"):
        (ref / bucket).mkdir(parents=True)
        (cand / bucket).mkdir(parents=True)
        for k in range(3):
            img = rng.integers(0, 256, size=(32, 40, 3)).astype(np.uint8)
            noisy = np.clip(img.astype(int) + rng.integers(-20, 21, img.shape), 0, 255).astype(np.uint8)
            Image.fromarray(img).save(ref / bucket / f"{k:04d}.png")
            Image.fromarray(noisy).save(cand / bucket / f"{k:04d}.png")
    return ref, cand


# -- acceptance reporting ---------------------------------------------------

_acceptance_key = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line per acceptance criterion; echoed in the terminal summary."""
    lines = request.config.stash.setdefault(_acceptance_key, [])

    def report(number, ok, detail, blocking=True):
        status = "PASS" if ok else ("FAIL" if blocking else "BELOW TARGET (non-blocking)")
        line = f"criterion {number}: {status}: {detail}"
        lines.append((number, line))
        print(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_acceptance_key, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
