"""``evslice`` command-line frontend.

Every subcommand accepts ``--config FILE`` with ``key = value`` lines naming
its long options (``theta-min`` or ``theta_min``); options given on the
command line win over the file. The fully resolved configuration is printed
first. Lines starting with ``#`` carry timing only.

Exit codes: 0 success, 1 usage error, 2 data error. Errors are reported on
stderr as one line: ``evslice: error[usage|data]: <message>``.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
from PIL import Image

from . import augment as aug
from .events import stream_stats
from .formats import (FormatError, read_events, read_manifest, read_png, read_tensor, write_events,
                      write_manifest, write_slice_png)
from .mga import MgaConfig, mga_pipeline, similarity_matrix
from .metrics import FrameScore, psnr, ssim, summarize
from .simulator import FrameSequence, SimulatorConfig, simulate, to_luminance
from .tcb import (AdaptiveMedianTheta, FixedTheta, ManifestRecord, SliceManifest, TcbConfig, iter_slices,
                  render_slice)

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2
IMAGE_SUFFIXES = (".png",)


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# -- option types -----------------------------------------------------------

def _int_list(n: int, what: str):
    def parse(text: str):
        parts = [p.strip() for p in str(text).split(",")]
        try:
            values = [int(p) for p in parts]
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected {what}, got {text!r}") from None
        if len(values) != n:
            raise argparse.ArgumentTypeError(f"expected {what}, got {text!r}")
        return tuple(values)
    return parse


def _kernel(text: str):
    try:
        values = tuple(float(p) for p in str(text).split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"kernel must be 3 comma-separated numbers, got {text!r}") from None
    if len(values) != 3:
        raise argparse.ArgumentTypeError(f"kernel must be 3 comma-separated numbers, got {text!r}")
    return values


def _theta(text: str):
    text = str(text).strip()
    if text == "adaptive":
        return "adaptive"
    if text.startswith("fixed:"):
        try:
            return float(text[6:])
        except ValueError:
            pass
    raise argparse.ArgumentTypeError(f"theta must be 'adaptive' or 'fixed:<value>', got {text!r}")


def _positive(kind):
    def parse(text):
        value = kind(text)
        if not value > 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text!r}")
        return value
    return parse


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"expected a boolean, got {text!r}")


# -- parser -----------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="evslice", description="Event-camera slicing and evaluation toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", help="key = value file supplying defaults for the options below")
        p.add_argument("--jobs", type=_positive(int), default=1, help="worker threads (default 1)")

    p = sub.add_parser("simulate", help="convert a frame dump into an EVST event file")
    p.add_argument("frames", help="directory of numbered PNG frames")
    p.add_argument("-o", "--output", required=True, help="output .evst path")
    p.add_argument("--timestamps", help="one microsecond timestamp per frame (default FRAMES/timestamps.txt)")
    p.add_argument("--contrast", "--C", dest="contrast", type=_positive(float), default=0.2,
                   help="log-intensity contrast threshold (default 0.2)")
    p.add_argument("--eps", type=_positive(float), default=1e-3, help="intensity floor before log (default 1e-3)")
    common(p)

    p = sub.add_parser("slice", help="cut an EVST file into PNG polarity slices plus a manifest")
    p.add_argument("input", help="input .evst file")
    p.add_argument("-o", "--output-dir", required=True)
    p.add_argument("--fps", type=_positive(float), default=30.0, help="slices per second (default 30)")
    p.add_argument("--alpha", type=_positive(float), default=0.1, help="events per slice per pixel (default 0.1)")
    p.add_argument("--theta", type=_theta, default="adaptive", help="'adaptive' (default) or 'fixed:<value>'")
    p.add_argument("--theta-min", type=float, default=20.0)
    p.add_argument("--theta-max", type=float, default=50.0)
    p.add_argument("--window-k", type=_positive(int), default=16)
    p.add_argument("--render", choices=("binary", "magnitude"), default="binary")
    p.add_argument("--phi-max", type=_positive(float), default=None, help="clamp for magnitude rendering")
    p.add_argument("--t-origin", type=int, default=None, help="first window start (default first event)")
    common(p)

    p = sub.add_parser("augment", help="seeded event translation and protected-region cropping")
    p.add_argument("--events", help="input .evst to translate")
    p.add_argument("--events-out")
    p.add_argument("--translate", type=_int_list(2, "MAX_DX,MAX_DY"), default=None)
    p.add_argument("--per-slice", action="store_true", help="one shift per manifest window")
    p.add_argument("--manifest", help="slice manifest CSV for --per-slice")
    p.add_argument("--image", help="reference image to crop")
    p.add_argument("--image-out")
    p.add_argument("--crop", type=_int_list(2, "W,H"), default=None)
    p.add_argument("--protected", type=_int_list(4, "x0,y0,w,h"), default=None)
    p.add_argument("--seed", type=int, default=0)
    common(p)

    p = sub.add_parser("mga", help="motion gradient alignment loss between two LAT5 tensors")
    p.add_argument("generated")
    p.add_argument("event")
    p.add_argument("--tau", type=_positive(float), default=0.07)
    p.add_argument("--kernel", type=_kernel, default=(0.3, 0.4, 0.3))
    p.add_argument("--norm-eps", type=_positive(float), default=1e-8)
    p.add_argument("--csv", help="write the spatially averaged similarity matrix here")
    common(p)

    p = sub.add_parser("metrics", help="PSNR/SSIM between reference and candidate frame directories")
    p.add_argument("--ref", required=True)
    p.add_argument("--cand", required=True)
    p.add_argument("--buckets", action="store_true", help="score each subdirectory separately")
    p.add_argument("--csv", help="per-frame CSV output")
    common(p)

    p = sub.add_parser("inspect", help="print stream statistics and an event-rate histogram")
    p.add_argument("input")
    p.add_argument("--bins", type=_positive(int), default=10)
    common(p)
    return parser


def _subparser(parser: _Parser, name: str) -> _Parser:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def load_config(path) -> Dict[str, str]:
    values = {}
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    for n, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    ns = parser.parse_args(argv)
    if ns.config:
        sub = _subparser(parser, ns.command)
        options = {a.dest: a for a in sub._actions if a.option_strings and a.dest not in ("help", "config")}
        defaults = {}
        for key, value in load_config(ns.config).items():
            if key not in options:
                raise UsageError(f"{ns.config}: unknown key {key!r} for '{ns.command}'")
            action = options[key]
            if isinstance(action, argparse._StoreTrueAction):
                defaults[key] = _bool(value)
            else:
                # argparse runs string defaults through the option's type
                defaults[key] = value
        sub.set_defaults(**defaults)
        ns = parser.parse_args(argv)
    return ns


def print_config(ns: argparse.Namespace, out=None):
    out = out or sys.stdout
    for key in sorted(vars(ns)):
        if key in ("command", "config"):
            continue
        value = getattr(ns, key)
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        elif key == "theta" and value != "adaptive":
            value = f"fixed:{value}"
        print(f"config.{ns.command}.{key}={value}", file=out)


# -- subcommands ------------------------------------------------------------

def list_frames(directory) -> List[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"not a directory: {directory}")
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def read_timestamps(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"timestamps file not found: {path}")
    values = []
    for n, line in enumerate(path.read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            values.append(int(line))
        except ValueError:
            raise FormatError(f"not an integer timestamp: {line!r}", path, line=n) from None
    return np.array(values, dtype=np.int64)


def load_frame_sequence(frames_dir, timestamps_path=None) -> FrameSequence:
    ts_path = Path(timestamps_path) if timestamps_path else Path(frames_dir) / "timestamps.txt"
    timestamps = read_timestamps(ts_path)
    paths = list_frames(frames_dir)
    if len(paths) != len(timestamps):
        raise DataError(f"{len(paths)} frames in {frames_dir} but {len(timestamps)} timestamps in {ts_path}")
    frames = np.stack([to_luminance(read_png(p)) / 255.0 for p in paths]) if paths else np.zeros((0, 1, 1))
    return FrameSequence(frames, timestamps)


def cmd_simulate(ns) -> int:
    seq = load_frame_sequence(ns.frames, ns.timestamps)
    cfg = SimulatorConfig(seq.geometry, C=ns.contrast, eps=ns.eps)
    stream = simulate(seq, cfg, jobs=ns.jobs)
    write_events(stream, ns.output)
    print(f"events={len(stream)}")
    print(f"output={ns.output}")
    return EXIT_OK


def tcb_config(ns) -> TcbConfig:
    if ns.theta == "adaptive":
        policy = AdaptiveMedianTheta(ns.window_k, ns.theta_min, ns.theta_max)
    else:
        policy = FixedTheta(ns.theta)
    return TcbConfig(ns.fps, ns.alpha, policy)


def cmd_slice(ns) -> int:
    stream = read_events(ns.input)
    cfg = tcb_config(ns)
    if ns.render == "magnitude" and ns.phi_max is None:
        raise UsageError("--render magnitude needs --phi-max")
    out_dir = Path(ns.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = []

    def emit(s):
        name = f"slice_{s.index:06d}.png"
        write_slice_png(render_slice(s, ns.render, ns.phi_max), out_dir / name)
        return name

    batch = []

    def flush(pool):
        names = list(pool.map(emit, batch)) if pool else [emit(s) for s in batch]
        for s, name in zip(batch, names):
            records.append(ManifestRecord(s.index, s.t_start, s.t_end, s.regime, s.theta, s.M,
                                          s.event_count, name))
        batch.clear()

    pool = ThreadPoolExecutor(max_workers=ns.jobs) if ns.jobs > 1 else None
    try:
        for s in iter_slices(stream, cfg, ns.t_origin):
            batch.append(s)
            if len(batch) >= 64:
                flush(pool)
        flush(pool)
    finally:
        if pool:
            pool.shutdown()
    manifest = SliceManifest(records)
    write_manifest(manifest, out_dir / "manifest.csv")
    counts = {}
    for r in records:
        counts[r.regime.value] = counts.get(r.regime.value, 0) + 1
    print(f"slices={len(records)}")
    print(f"intersect={counts.get('intersect', 0)} union={counts.get('union', 0)}")
    return EXIT_OK


def cmd_augment(ns) -> int:
    did = False
    if ns.events or ns.translate or ns.events_out:
        if not (ns.events and ns.events_out and ns.translate):
            raise UsageError("event translation needs --events, --events-out and --translate")
        stream = read_events(ns.events)
        manifest = None
        if ns.per_slice:
            if not ns.manifest:
                raise UsageError("--per-slice needs --manifest")
            manifest = read_manifest(ns.manifest)
        spec = aug.TranslationSpec(ns.translate[0], ns.translate[1], ns.per_slice, ns.seed)
        out = aug.translate_events(stream, spec, manifest)
        write_events(out, ns.events_out)
        if not ns.per_slice:
            print("shift={},{}".format(*aug.global_shift(spec)))
        print(f"events_in={len(stream)} events_out={len(out)}")
        did = True
    if ns.image or ns.crop or ns.image_out:
        if not (ns.image and ns.image_out and ns.crop and ns.protected):
            raise UsageError("cropping needs --image, --image-out, --crop and --protected")
        image = read_png(ns.image)
        spec = aug.CropSpec(ns.crop[0], ns.crop[1], aug.Rect(*ns.protected), ns.seed)
        cropped, rect = aug.crop_reference(image, spec)
        Image.fromarray(cropped).save(ns.image_out, format="PNG")
        print("crop={},{},{},{}".format(*rect))
        did = True
    if not did:
        raise UsageError("nothing to do: give --translate and/or --crop")
    return EXIT_OK


def cmd_mga(ns) -> int:
    gen, ev = read_tensor(ns.generated), read_tensor(ns.event)
    if gen.shape != ev.shape:
        raise DataError(f"tensor shapes differ: {gen.shape} vs {ev.shape}")
    if gen.shape[1] < 3:
        raise DataError(f"need T >= 3 time steps, got {gen.shape[1]}")
    cfg = MgaConfig(ns.kernel, ns.tau, ns.norm_eps)
    loss = mga_pipeline(gen, ev, cfg)
    print(f"loss={loss!r}")
    if ns.csv:
        S = similarity_matrix(gen, ev, cfg)
        with open(ns.csv, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["b", "i", "j", "s"])
            for b, i, j in np.ndindex(*S.shape):
                w.writerow([b, i, j, repr(float(S[b, i, j]))])
    return EXIT_OK


def _score_dir(ref_dir: Path, cand_dir: Path, bucket: str, jobs: int) -> List[FrameScore]:
    refs = list_frames(ref_dir)
    cands = {p.name: p for p in list_frames(cand_dir)}
    missing = [p.name for p in refs if p.name not in cands]
    if missing or len(cands) != len(refs):
        raise DataError(f"frame sets differ between {ref_dir} and {cand_dir}"
                        + (f" (missing {missing[0]})" if missing else ""))

    def score(k):
        r, c = read_png(refs[k]), read_png(cands[refs[k].name])
        return FrameScore(k, psnr(r, c), ssim(r, c), refs[k].name)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(score, range(len(refs))))
    return [score(k) for k in range(len(refs))]


def _fmt(v: float) -> str:
    return "inf" if v == math.inf else repr(v)


def cmd_metrics(ns) -> int:
    ref, cand = Path(ns.ref), Path(ns.cand)
    for d in (ref, cand):
        if not d.is_dir():
            raise DataError(f"not a directory: {d}")
    if ns.buckets:
        buckets = sorted(p.name for p in ref.iterdir() if p.is_dir())
        if not buckets:
            raise DataError(f"no bucket subdirectories in {ref}")
        groups = [(b, ref / b, cand / b) for b in buckets]
    else:
        groups = [("all", ref, cand)]

    rows = []
    for bucket, r, c in groups:
        report = summarize(_score_dir(r, c, bucket, ns.jobs))
        print(f"bucket={bucket} frames={len(report.frames)} mean_psnr={_fmt(report.mean_psnr)} "
              f"mean_ssim={_fmt(report.mean_ssim)} psnr_excluded={report.psnr_excluded}")
        rows.extend((bucket, s) for s in report.frames)
    if ns.csv:
        with open(ns.csv, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            # lpips/fid are left empty for external tools to fill in
            w.writerow(["bucket", "index", "frame", "psnr", "ssim", "lpips", "fid"])
            for bucket, s in rows:
                w.writerow([bucket, s.index, s.name, _fmt(s.psnr), _fmt(s.ssim), "", ""])
    return EXIT_OK


def cmd_inspect(ns) -> int:
    stream = read_events(ns.input)
    st = stream_stats(stream)
    g = stream.geometry
    print(f"geometry={g.width}x{g.height}")
    print(f"count={st.count}")
    print(f"duration_us={st.duration_us}")
    print(f"mean_rate_events_per_s={st.mean_rate_events_per_s!r}")
    print(f"polarity_balance={st.polarity_balance!r}")
    if st.count:
        t0 = int(stream.t[0])
        span = max(st.duration_us, 1)
        edges = [t0 + (span * k) // ns.bins for k in range(ns.bins + 1)]
        edges[-1] = t0 + span + (1 if st.duration_us else 0)
        counts, _ = np.histogram(stream.t, bins=np.array(edges, dtype=np.int64))
        peak = max(int(counts.max()), 1)
        for k, n in enumerate(counts):
            a, b = edges[k], edges[k + 1]
            rate = int(n) * 1e6 / (b - a)
            bar = "#" * int(round(40 * int(n) / peak))
            print(f"bin {k:3d} [{a}, {b}) count={int(n)} rate={rate:.1f} |{bar}")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "slice": cmd_slice,
    "augment": cmd_augment,
    "mga": cmd_mga,
    "metrics": cmd_metrics,
    "inspect": cmd_inspect,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        ns = parse_args(argv)
        print_config(ns)
        started = time.perf_counter()
        code = COMMANDS[ns.command](ns)
        print(f"# elapsed_s={time.perf_counter() - started:.3f}")
        return code
    except UsageError as exc:
        print(f"evslice: error[usage]: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FormatError, ValueError, OSError) as exc:
        msg = str(exc)
        if isinstance(exc, OSError) and exc.filename is not None:
            msg = f"{exc.strerror}: {exc.filename}"
        print(f"evslice: error[data]: {' '.join(msg.split())}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
