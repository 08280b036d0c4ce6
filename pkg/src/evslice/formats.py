"""Binary and text file formats.

EVST event file (little-endian)::

    offset  size  field
    0       4     magic b"EVST"
    4       2     version (u16) = 1
    6       2     width (u16)
    8       2     height (u16)
    10      4     reserved, must be zero
    14      8     event count (u64)
    22      13*n  records: t (u64, us), x (u16), y (u16), p (i8, -1 or +1)

LAT5 tensor file (little-endian)::

    0       4     magic b"LAT5"
    4       2     version (u16) = 1
    6       20    B, T, C, H, W (u32 each)
    26      4*n   float32 values, [B, T, C, H, W] row-major

Slice manifests are CSV with columns
``index,t_start_us,t_end_us,regime,theta,M,event_count,path``.
"""

from __future__ import annotations

import csv
import math
import os
import struct
import warnings
from typing import Optional

import numpy as np
from PIL import Image

from .events import EventStream, SensorGeometry
from .tcb import ManifestRecord, Regime, SliceManifest

EVST_MAGIC = b"EVST"
EVST_VERSION = 1
EVST_HEADER = struct.Struct("<4sHHH4sQ")
EVST_RECORD = np.dtype([("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "i1")])
assert EVST_HEADER.size == 22 and EVST_RECORD.itemsize == 13

LAT5_MAGIC = b"LAT5"
LAT5_VERSION = 1
LAT5_HEADER = struct.Struct("<4sH5I")

MANIFEST_COLUMNS = ["index", "t_start_us", "t_end_us", "regime", "theta", "M", "event_count", "path"]


class FormatError(ValueError):
    """Malformed input file. ``offset`` is a byte offset, ``line`` a 1-based line number."""

    def __init__(self, message: str, path=None, offset: Optional[int] = None, line: Optional[int] = None):
        self.path = None if path is None else os.fspath(path)
        self.offset = offset
        self.line = line
        where = []
        if self.path is not None:
            where.append(self.path)
        if offset is not None:
            where.append(f"byte {offset}")
        if line is not None:
            where.append(f"line {line}")
        prefix = f"{': '.join(where)}: " if where else ""
        super().__init__(prefix + message)


# -- events -----------------------------------------------------------------

def encode_events(stream: EventStream) -> bytes:
    W, H = stream.geometry.width, stream.geometry.height
    if W > 0xFFFF or H > 0xFFFF:
        raise ValueError(f"geometry {W}x{H} does not fit the u16 header fields")
    rec = np.empty(len(stream), dtype=EVST_RECORD)
    rec["t"], rec["x"], rec["y"], rec["p"] = stream.t, stream.x, stream.y, stream.p
    header = EVST_HEADER.pack(EVST_MAGIC, EVST_VERSION, W, H, b"\0" * 4, len(stream))
    return header + rec.tobytes()


def decode_events(data: bytes, path=None) -> EventStream:
    if len(data) < EVST_HEADER.size:
        raise FormatError(f"truncated header ({len(data)} of {EVST_HEADER.size} bytes)", path, len(data))
    magic, version, W, H, reserved, count = EVST_HEADER.unpack_from(data, 0)
    if magic != EVST_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {EVST_MAGIC!r}", path, 0)
    if version != EVST_VERSION:
        raise FormatError(f"unsupported version {version}", path, 4)
    if W < 1 or H < 1:
        raise FormatError(f"invalid geometry {W}x{H}", path, 6)
    if reserved != b"\0" * 4:
        raise FormatError("reserved header bytes are not zero", path, 10)
    expected = EVST_HEADER.size + count * EVST_RECORD.itemsize
    if len(data) < expected:
        full = (len(data) - EVST_HEADER.size) // EVST_RECORD.itemsize
        raise FormatError(f"truncated payload: header declares {count} events, file holds {full}",
                          path, EVST_HEADER.size + full * EVST_RECORD.itemsize)
    if len(data) > expected:
        raise FormatError(f"{len(data) - expected} trailing bytes after {count} events", path, expected)

    rec = np.frombuffer(data, dtype=EVST_RECORD, count=count, offset=EVST_HEADER.size)
    t = rec["t"]

    def offset_of(i, field=""):
        return EVST_HEADER.size + int(i) * EVST_RECORD.itemsize + (EVST_RECORD.fields[field][1] if field else 0)

    problems = []
    big = np.flatnonzero(t > np.iinfo(np.int64).max)
    if big.size:
        problems.append((int(big[0]), "t", "timestamp exceeds int64 range"))
    t = t.astype(np.int64)
    if count > 1:
        back = np.flatnonzero(t[1:] < t[:-1])
        if back.size:
            problems.append((int(back[0]) + 1, "t", "timestamp order"))
    for name, bad, rule in (("x", rec["x"] >= W, "x bound"), ("y", rec["y"] >= H, "y bound"),
                            ("p", (rec["p"] != 1) & (rec["p"] != -1), "polarity")):
        idx = np.flatnonzero(bad)
        if idx.size:
            problems.append((int(idx[0]), name, rule))
    if problems:
        i, name, rule = min(problems)
        value = rec[name][i]
        raise FormatError(f"record {i}: {rule} violated ({name}={value})", path, offset_of(i, name))
    return EventStream.from_arrays(SensorGeometry(W, H), t, rec["x"], rec["y"], rec["p"])


def write_events(stream: EventStream, path) -> None:
    data = encode_events(stream)
    with open(path, "wb") as fh:
        fh.write(data)


def read_events(path) -> EventStream:
    with open(path, "rb") as fh:
        data = fh.read()
    return decode_events(data, path)


def read_events_csv(path, geometry: SensorGeometry, zero_is_negative: bool = False) -> EventStream:
    """Read ``t_us,x,y,p`` rows after a header line.

    ``p`` must be -1 or 1, or 0/1 with ``zero_is_negative``. Unsorted input is
    stably sorted with a warning.
    """
    W, H = geometry.width, geometry.height
    allowed = {0: -1, 1: 1} if zero_is_negative else {-1: -1, 1: 1}
    cols = [[], [], [], []]
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise FormatError("missing header line", path, line=1)
        if [h.strip() for h in header] != ["t_us", "x", "y", "p"]:
            raise FormatError(f"expected header t_us,x,y,p, got {','.join(header)}", path, line=1)
        for row in reader:
            lineno = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise FormatError(f"expected 4 fields, got {len(row)}", path, line=lineno)
            try:
                t, x, y, p = (int(c.strip()) for c in row)
            except ValueError:
                raise FormatError(f"unparseable row {','.join(row)!r}", path, line=lineno) from None
            if t < 0:
                raise FormatError(f"negative timestamp {t}", path, line=lineno)
            if not 0 <= x < W:
                raise FormatError(f"x={x} outside sensor width {W}", path, line=lineno)
            if not 0 <= y < H:
                raise FormatError(f"y={y} outside sensor height {H}", path, line=lineno)
            if p not in allowed:
                raise FormatError(f"invalid polarity {p}", path, line=lineno)
            for col, v in zip(cols, (t, x, y, allowed[p])):
                col.append(v)
    t = np.array(cols[0], dtype=np.int64)
    if t.size > 1 and np.any(np.diff(t) < 0):
        warnings.warn(f"{os.fspath(path)}: events not in time order; sorting", stacklevel=2)
    return EventStream.from_arrays(geometry, t, cols[1], cols[2], cols[3], sort=True)


# -- tensors ----------------------------------------------------------------

def encode_tensor(values: np.ndarray) -> bytes:
    values = np.asarray(values)
    if values.ndim != 5:
        raise ValueError(f"tensor must be 5-D [B, T, C, H, W], got shape {values.shape}")
    if not np.all(np.isfinite(values)):
        raise ValueError("tensor contains non-finite values")
    header = LAT5_HEADER.pack(LAT5_MAGIC, LAT5_VERSION, *values.shape)
    return header + np.ascontiguousarray(values, dtype="<f4").tobytes()


def decode_tensor(data: bytes, path=None) -> np.ndarray:
    if len(data) < LAT5_HEADER.size:
        raise FormatError(f"truncated header ({len(data)} of {LAT5_HEADER.size} bytes)", path, len(data))
    magic, version, *dims = LAT5_HEADER.unpack_from(data, 0)
    if magic != LAT5_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {LAT5_MAGIC!r}", path, 0)
    if version != LAT5_VERSION:
        raise FormatError(f"unsupported version {version}", path, 4)
    n = math.prod(dims)
    expected = LAT5_HEADER.size + 4 * n
    if len(data) != expected:
        raise FormatError(f"payload is {len(data) - LAT5_HEADER.size} bytes, dims {tuple(dims)} "
                          f"need {4 * n}", path, min(len(data), expected))
    values = np.frombuffer(data, dtype="<f4", count=n, offset=LAT5_HEADER.size).reshape(dims)
    bad = np.flatnonzero(~np.isfinite(values.ravel()))
    if bad.size:
        raise FormatError("non-finite value", path, LAT5_HEADER.size + 4 * int(bad[0]))
    return values.astype(np.float32)


def write_tensor(values: np.ndarray, path) -> None:
    data = encode_tensor(values)
    with open(path, "wb") as fh:
        fh.write(data)


def read_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    return decode_tensor(data, path)


# -- images -----------------------------------------------------------------

def write_slice_png(rgb: np.ndarray, path) -> None:
    rgb = np.asarray(rgb)
    if rgb.dtype != np.uint8 or rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) uint8 image, got {rgb.dtype} {rgb.shape}")
    Image.fromarray(rgb, mode="RGB").save(path, format="PNG")


def read_png(path) -> np.ndarray:
    """Read an 8-bit PNG as (H, W) grayscale or (H, W, 3) RGB."""
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode in ("L", "RGB"):
                return np.asarray(im).copy()
            if im.mode in ("I;16", "I", "F"):
                raise FormatError(f"unsupported image mode {im.mode}", path)
            return np.asarray(im.convert("RGB")).copy()
    except (OSError, SyntaxError) as exc:
        raise FormatError(f"cannot decode image: {exc}", path) from None


# -- manifests --------------------------------------------------------------

def write_manifest(manifest: SliceManifest, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_COLUMNS)
        for r in manifest.records:
            w.writerow([r.index, r.t_start, r.t_end, r.regime.value, repr(float(r.theta_used)),
                        r.M, r.event_count, r.output_path])


def read_manifest(path) -> SliceManifest:
    records = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != MANIFEST_COLUMNS:
            raise FormatError(f"expected manifest header {','.join(MANIFEST_COLUMNS)}", path, line=1)
        for row in reader:
            if not row:
                continue
            try:
                index, t0, t1, regime, theta, M, count, out = row
                records.append(ManifestRecord(int(index), int(t0), int(t1), Regime(regime),
                                              float(theta), int(M), int(count), out))
            except ValueError as exc:
                raise FormatError(f"bad manifest row: {exc}", path, line=reader.line_num) from None
    for k, r in enumerate(records):
        if r.index != k:
            raise FormatError(f"manifest indices must be contiguous from 0, found {r.index} at row {k}",
                              path, line=k + 2)
    return SliceManifest(records)
