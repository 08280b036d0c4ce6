"""Core event containers.

Events are stored column-wise (``t``, ``x``, ``y``, ``p`` numpy arrays) inside an
immutable :class:`EventStream`. Timestamps are integer microseconds.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, List, NamedTuple, Sequence

import numpy as np

US_PER_S = 1_000_000


class Event(NamedTuple):
    t: int
    x: int
    y: int
    p: int


@dataclass(frozen=True)
class SensorGeometry:
    width: int
    height: int

    def __post_init__(self):
        if int(self.width) < 1 or int(self.height) < 1:
            raise ValueError(f"sensor geometry must be positive, got {self.width}x{self.height}")

    @property
    def n_pixels(self) -> int:
        return self.width * self.height


def _column(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True).reshape(-1)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class EventStream:
    """Time-ordered events over a fixed sensor geometry.

    Use :meth:`from_arrays` or :meth:`from_events` to build a checked stream.
    The raw constructor does not validate; it exists for readers and tests that
    need to hand possibly-broken data to :func:`validate_stream`.
    """

    geometry: SensorGeometry
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    p: np.ndarray
    _pix: np.ndarray | None = field(default=None, repr=False, compare=False)

    @classmethod
    def from_arrays(cls, geometry: SensorGeometry, t, x, y, p, sort: bool = False) -> "EventStream":
        """Build a validated stream.

        With ``sort=True`` out-of-order input is stably sorted by timestamp;
        otherwise it is rejected.
        """
        t = np.asarray(t)
        if t.size and not np.issubdtype(t.dtype, np.integer):
            if not np.all(np.isfinite(t)) or np.any(t != np.floor(t)):
                raise ValueError("timestamps must be integer microseconds")
        stream = cls(geometry, _column(t, np.int64), _column(x, np.int32),
                     _column(y, np.int32), _column(p, np.int8))
        n = len(stream.t)
        if not (len(stream.x) == len(stream.y) == len(stream.p) == n):
            raise ValueError("event columns have different lengths")
        if sort and n > 1 and np.any(np.diff(stream.t) < 0):
            order = np.argsort(stream.t, kind="stable")
            stream = cls(geometry, _column(stream.t[order], np.int64), _column(stream.x[order], np.int32),
                         _column(stream.y[order], np.int32), _column(stream.p[order], np.int8))
        report = validate_stream(stream)
        if not report.ok:
            first = report.violations[0]
            raise ValueError(f"invalid event stream: {len(report.violations)} violation(s), "
                             f"first at index {first.index}: {first.rule}")
        return stream

    @classmethod
    def from_events(cls, geometry: SensorGeometry, events: Sequence[Event], sort: bool = False) -> "EventStream":
        if len(events) == 0:
            return cls.empty(geometry)
        t, x, y, p = zip(*events)
        return cls.from_arrays(geometry, t, x, y, p, sort=sort)

    @classmethod
    def empty(cls, geometry: SensorGeometry) -> "EventStream":
        return cls(geometry, _column([], np.int64), _column([], np.int32),
                   _column([], np.int32), _column([], np.int8))

    def __len__(self) -> int:
        return len(self.t)

    def __iter__(self) -> Iterator[Event]:
        for row in zip(self.t.tolist(), self.x.tolist(), self.y.tolist(), self.p.tolist()):
            yield Event(*row)

    def __getitem__(self, k: int) -> Event:
        return Event(int(self.t[k]), int(self.x[k]), int(self.y[k]), int(self.p[k]))

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventStream):
            return NotImplemented
        return (self.geometry == other.geometry
                and np.array_equal(self.t, other.t) and np.array_equal(self.x, other.x)
                and np.array_equal(self.y, other.y) and np.array_equal(self.p, other.p))

    __hash__ = None

    @property
    def pixel_index(self) -> np.ndarray:
        """Flat pixel index ``y * W + x`` (cached)."""
        if self._pix is None:
            pix = self.y.astype(np.int64) * self.geometry.width + self.x
            pix.flags.writeable = False
            object.__setattr__(self, "_pix", pix)
        return self._pix

    def take(self, mask_or_index) -> "EventStream":
        """Subset in stream order. The result is re-validated."""
        return EventStream.from_arrays(self.geometry, self.t[mask_or_index], self.x[mask_or_index],
                                       self.y[mask_or_index], self.p[mask_or_index])


class Violation(NamedTuple):
    index: int
    rule: str


@dataclass
class ValidationReport:
    violations: List[Violation]

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_stream(stream: EventStream) -> ValidationReport:
    """Check ordering, bounds and polarity; every offending index is listed."""
    W, H = stream.geometry.width, stream.geometry.height
    t, x, y, p = stream.t, stream.x, stream.y, stream.p
    checks = [
        ("timestamp sign", t < 0),
        ("x bound", (x < 0) | (x >= W)),
        ("y bound", (y < 0) | (y >= H)),
        ("polarity", (p != 1) & (p != -1)),
    ]
    order = np.zeros(len(t), dtype=bool)
    if len(t) > 1:
        order[1:] = t[1:] < t[:-1]
    checks.insert(0, ("timestamp order", order))

    found = []
    for rule, bad in checks:
        found.extend((int(i), rule) for i in np.flatnonzero(bad))
    rank = {rule: k for k, (rule, _) in enumerate(checks)}
    found.sort(key=lambda v: (v[0], rank[v[1]]))
    return ValidationReport([Violation(i, r) for i, r in found])


@dataclass(frozen=True)
class StreamStats:
    count: int
    duration_us: int
    mean_rate_events_per_s: float
    polarity_balance: float


def stream_stats(stream: EventStream) -> StreamStats:
    n = len(stream)
    if n == 0:
        return StreamStats(0, 0, 0.0, 0.0)
    duration = int(stream.t[-1] - stream.t[0]) if n > 1 else 0
    rate = n / (duration / US_PER_S) if duration > 0 else 0.0
    n_pos = int(np.count_nonzero(stream.p > 0))
    balance = (n_pos - (n - n_pos)) / n
    return StreamStats(n, duration, rate, balance)
