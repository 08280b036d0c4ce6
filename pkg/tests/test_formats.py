import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from evslice.events import EventStream, SensorGeometry
from evslice.formats import (FormatError, decode_events, decode_tensor, encode_events, encode_tensor, read_events,
                             read_events_csv, read_manifest, read_png, read_tensor, write_events, write_manifest,
                             write_slice_png, write_tensor)
from evslice.tcb import FixedTheta, TcbConfig, slice_stream

from helpers import random_stream


def test_empty_stream_is_header_only(tmp_path):
    path = tmp_path / "e.evst"
    write_events(EventStream.empty(SensorGeometry(346, 260)), path)
    data = path.read_bytes()
    assert len(data) == 22
    assert data[:4] == b"EVST" and struct.unpack_from("<HHH", data, 4) == (1, 346, 260)
    assert read_events(path) == EventStream.empty(SensorGeometry(346, 260))


def test_record_layout():
    s = EventStream.from_arrays(SensorGeometry(300, 200), [2**40 + 5], [299], [7], [-1])
    data = encode_events(s)
    assert len(data) == 22 + 13
    assert struct.unpack_from("<QHHb", data, 22) == (2**40 + 5, 299, 7, -1)


def test_large_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    n = 100_000
    t = np.sort(rng.integers(0, 2**45, n))
    s = EventStream.from_arrays(SensorGeometry(640, 480), t, rng.integers(0, 640, n), rng.integers(0, 480, n),
                                rng.choice([-1, 1], n))
    path = tmp_path / "big.evst"
    write_events(s, path)
    data = path.read_bytes()
    back = read_events(path)
    assert back == s
    assert encode_events(back) == data


def _corrupt(data, offset, value):
    b = bytearray(data)
    b[offset] = value
    return bytes(b)


def test_zero_polarity_error_offset():
    s = EventStream.from_arrays(SensorGeometry(4, 4), [1, 2, 3], [0, 1, 2], [0, 0, 0], [1, 1, 1])
    data = _corrupt(encode_events(s), 22 + 13 * 2 + 12, 0)
    with pytest.raises(FormatError, match="polarity") as exc:
        decode_events(data)
    assert exc.value.offset == 22 + 13 * 2 + 12


def test_bad_magic_and_truncation():
    data = encode_events(EventStream.from_arrays(SensorGeometry(4, 4), [1, 2], [0, 1], [0, 0], [1, -1]))
    with pytest.raises(FormatError, match="magic") as exc:
        decode_events(b"XXXX" + data[4:])
    assert exc.value.offset == 0
    with pytest.raises(FormatError, match="truncated") as exc:
        decode_events(data[:-3])
    assert exc.value.offset == 22 + 13
    with pytest.raises(FormatError, match="truncated header"):
        decode_events(data[:10])
    with pytest.raises(FormatError, match="trailing"):
        decode_events(data + b"\0")


def test_bound_and_order_errors():
    data = encode_events(EventStream.from_arrays(SensorGeometry(4, 4), [1, 2], [0, 1], [0, 0], [1, -1]))
    with pytest.raises(FormatError, match="x bound") as exc:
        decode_events(_corrupt(data, 22 + 13 + 8, 4))
    assert exc.value.offset == 22 + 13 + 8
    with pytest.raises(FormatError, match="timestamp order") as exc:
        decode_events(_corrupt(data, 22, 9))
    assert exc.value.offset == 22 + 13


@settings(max_examples=200, deadline=None)
@given(st.binary(max_size=120))
def test_reader_never_crashes(blob):
    for data in (blob, encode_events(EventStream.empty(SensorGeometry(3, 3)))[:14] + blob):
        try:
            decode_events(data)
        except FormatError:
            pass
        try:
            decode_tensor(b"LAT5" + blob)
        except FormatError:
            pass


@pytest.mark.parametrize("seed", range(10))
def test_random_round_trip(seed):
    s = random_stream(np.random.default_rng(seed))
    data = encode_events(s)
    assert decode_events(data) == s
    assert encode_events(decode_events(data)) == data


# -- csv --------------------------------------------------------------------

def test_csv_header_only(tmp_path):
    path = tmp_path / "e.csv"
    path.write_text("t_us,x,y,p\n")
    assert len(read_events_csv(path, SensorGeometry(4, 4))) == 0


def test_csv_rows(tmp_path):
    path = tmp_path / "e.csv"
    path.write_text("t_us,x,y,p\n0,1,2,1\n5,3,3,-1\n9,0,0,1\n")
    s = read_events_csv(path, SensorGeometry(4, 4))
    assert [tuple(e) for e in s] == [(0, 1, 2, 1), (5, 3, 3, -1), (9, 0, 0, 1)]


def test_csv_zero_polarity_flag(tmp_path):
    path = tmp_path / "e.csv"
    path.write_text("t_us,x,y,p\n0,1,2,0\n5,3,3,1\n")
    with pytest.raises(FormatError, match="line 2"):
        read_events_csv(path, SensorGeometry(4, 4))
    s = read_events_csv(path, SensorGeometry(4, 4), zero_is_negative=True)
    assert s.p.tolist() == [-1, 1]


def test_csv_bound_error_names_line(tmp_path):
    path = tmp_path / "e.csv"
    path.write_text("t_us,x,y,p\n0,1,2,1\n1,4,0,1\n")
    with pytest.raises(FormatError, match="line 3") as exc:
        read_events_csv(path, SensorGeometry(4, 4))
    assert exc.value.line == 3


def test_csv_unparseable(tmp_path):
    path = tmp_path / "e.csv"
    path.write_text("t_us,x,y,p\n0,1,2,1\nabc,1,1,1\n")
    with pytest.raises(FormatError, match="line 3"):
        read_events_csv(path, SensorGeometry(4, 4))


def test_csv_unsorted_warns(tmp_path):
    path = tmp_path / "e.csv"
    path.write_text("t_us,x,y,p\n9,0,0,1\n1,1,0,1\n1,2,0,-1\n")
    with pytest.warns(UserWarning, match="sorting"):
        s = read_events_csv(path, SensorGeometry(4, 4))
    assert [tuple(e) for e in s] == [(1, 1, 0, 1), (1, 2, 0, -1), (9, 0, 0, 1)]


# -- tensors ----------------------------------------------------------------

def test_tensor_layout(tmp_path):
    values = np.arange(2 * 3 * 1 * 2 * 2, dtype=np.float32).reshape(2, 3, 1, 2, 2)
    path = tmp_path / "x.lat5"
    write_tensor(values, path)
    data = path.read_bytes()
    assert data[:4] == b"LAT5" and struct.unpack_from("<H5I", data, 4) == (1, 2, 3, 1, 2, 2)
    assert len(data) == 26 + 4 * values.size
    assert np.array_equal(read_tensor(path), values)


def test_tensor_errors():
    good = encode_tensor(np.zeros((1, 3, 1, 1, 1), np.float32))
    with pytest.raises(FormatError, match="payload"):
        decode_tensor(good[:-1])
    bad = good[:26] + struct.pack("<f", float("nan")) + good[30:]
    with pytest.raises(FormatError, match="non-finite") as exc:
        decode_tensor(bad)
    assert exc.value.offset == 26
    with pytest.raises(ValueError):
        encode_tensor(np.zeros((2, 2)))


@settings(max_examples=100, deadline=None)
@given(arrays(np.float32, st.tuples(*[st.integers(1, 3)] * 5),
              elements=st.floats(width=32, allow_nan=False, allow_infinity=False)))
def test_tensor_round_trip(values):
    data = encode_tensor(values)
    back = decode_tensor(data)
    assert back.tobytes() == values.tobytes()
    assert encode_tensor(back) == data


# -- png --------------------------------------------------------------------

def test_png_black_and_green(tmp_path):
    img = np.zeros((5, 7, 3), np.uint8)
    write_slice_png(img, tmp_path / "a.png")
    assert np.array_equal(read_png(tmp_path / "a.png"), img)
    img[2, 3] = (0, 255, 0)
    write_slice_png(img, tmp_path / "b.png")
    assert np.array_equal(read_png(tmp_path / "b.png"), img)


@pytest.mark.parametrize("seed", range(5))
def test_png_random_round_trip(tmp_path, seed):
    img = np.random.default_rng(seed).integers(0, 256, size=(13, 29, 3)).astype(np.uint8)
    write_slice_png(img, tmp_path / "r.png")
    assert np.array_equal(read_png(tmp_path / "r.png"), img)


def test_png_garbage(tmp_path):
    (tmp_path / "g.png").write_bytes(b"not a png")
    with pytest.raises(FormatError):
        read_png(tmp_path / "g.png")


# -- manifest ---------------------------------------------------------------

def test_manifest_round_trip(tmp_path):
    s = random_stream(np.random.default_rng(4), max_events=3000)
    _, manifest = slice_stream(s, TcbConfig(13.0, 0.02, FixedTheta(20.5)))
    for r in manifest.records:
        r.output_path = f"slice_{r.index:06d}.png"
    path = tmp_path / "manifest.csv"
    write_manifest(manifest, path)
    assert path.read_text().splitlines()[0] == "index,t_start_us,t_end_us,regime,theta,M,event_count,path"
    assert read_manifest(path) == manifest


def test_manifest_rejects_gaps(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("index,t_start_us,t_end_us,regime,theta,M,event_count,path\n1,0,10,union,20.0,5,3,a.png\n")
    with pytest.raises(FormatError, match="contiguous"):
        read_manifest(path)
