"""Time-count balanced slicing of event streams.

Every slice starts from its nominal window ``[t_i, t_i+1)`` (width ``1/F``) and
from the first ``M`` events at or after ``t_i``. Below the rate threshold the
two sets are intersected, which caps over-dense windows at ``M`` events; at or
above it they are united, which tops up sparse windows to ``M`` events.

Because the stream is time ordered, both sets are index ranges that start at
the same position, so each slice's event set is itself a contiguous range of
the stream and no explicit set operations are needed.
"""

from __future__ import annotations

import enum
import statistics
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from .events import US_PER_S, EventStream, SensorGeometry, validate_stream


class Regime(str, enum.Enum):
    INTERSECT = "intersect"
    UNION = "union"


@dataclass(frozen=True)
class FixedTheta:
    theta: float


@dataclass(frozen=True)
class AdaptiveMedianTheta:
    """Threshold from the median event rate of the last ``window_k`` slices."""

    window_k: int = 16
    theta_min: float = 20.0
    theta_max: float = 50.0

    def __post_init__(self):
        if self.window_k < 1:
            raise ValueError("window_k must be >= 1")
        if self.theta_min > self.theta_max:
            raise ValueError(f"theta_min {self.theta_min} > theta_max {self.theta_max}")


ThetaPolicy = Union[FixedTheta, AdaptiveMedianTheta]


@dataclass(frozen=True)
class TcbConfig:
    fps: float
    alpha: float
    theta_policy: ThetaPolicy = field(default_factory=AdaptiveMedianTheta)

    def __post_init__(self):
        if not (self.fps > 0 and np.isfinite(self.fps)):
            raise ValueError(f"slice rate F must be positive, got {self.fps}")
        if self.fps > US_PER_S:
            raise ValueError(f"slice rate F={self.fps} gives windows shorter than 1 us")
        if not (self.alpha > 0 and np.isfinite(self.alpha)):
            raise ValueError(f"alpha must be positive, got {self.alpha}")


@dataclass
class PolaritySlice:
    index: int
    t_start: int
    t_end: int
    regime: Regime
    theta: float
    M: int
    start: int
    stop: int
    phi: np.ndarray

    @property
    def event_count(self) -> int:
        return self.stop - self.start

    @property
    def event_indices(self) -> range:
        """Stream indices of the slice's events."""
        return range(self.start, self.stop)


@dataclass
class ManifestRecord:
    index: int
    t_start: int
    t_end: int
    regime: Regime
    theta_used: float
    M: int
    event_count: int
    output_path: str = ""


@dataclass
class SliceManifest:
    records: List[ManifestRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def window_of(self, t: np.ndarray) -> np.ndarray:
        """Record position containing each timestamp, or -1 outside all windows."""
        if not self.records:
            return np.full(len(t), -1, dtype=np.int64)
        starts = np.array([r.t_start for r in self.records], dtype=np.int64)
        ends = np.array([r.t_end for r in self.records], dtype=np.int64)
        pos = np.searchsorted(starts, t, side="right") - 1
        inside = (pos >= 0) & (t < ends[np.clip(pos, 0, None)])
        return np.where(inside, pos, -1)


def compute_M(geometry: SensorGeometry, alpha: float) -> int:
    """Target event count per slice, ``max(1, round(alpha * H * W))``."""
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    return max(1, int(round(alpha * geometry.height * geometry.width)))


def effective_theta(recent_densities: Sequence[float], M: int, policy: ThetaPolicy) -> float:
    """Slice-rate threshold for the next slice.

    For the adaptive policy, ``median_rate / M`` is the slice rate at which a
    nominal window holds exactly ``M`` events. It is clamped to
    ``[theta_min, theta_max]``; with no history yet, ``theta_min`` is used.
    """
    if isinstance(policy, FixedTheta):
        return float(policy.theta)
    recent = list(recent_densities)[-policy.window_k:]
    if not recent:
        return float(policy.theta_min)
    theta = statistics.median(recent) / M
    return float(min(max(theta, policy.theta_min), policy.theta_max))


def window_start(i: int, fps: float, t_origin: int = 0) -> int:
    """``t_origin + round(i * 1e6 / F)`` in exact rational arithmetic (half to even)."""
    return t_origin + round(Fraction(i * US_PER_S) / Fraction(fps))


def iter_slices(stream: EventStream, cfg: TcbConfig, t_origin: Optional[int] = None,
                check: bool = True) -> Iterator[PolaritySlice]:
    """Yield slices one at a time; see :func:`slice_stream`."""
    if check:
        report = validate_stream(stream)
        if not report.ok:
            v = report.violations[0]
            raise ValueError(f"invalid stream at index {v.index}: {v.rule}")
    n = len(stream)
    if n == 0:
        return
    t = stream.t
    if t_origin is None:
        t_origin = int(t[0])
    elif t_origin > t[0]:
        raise ValueError(f"t_origin {t_origin} is after the first event at {int(t[0])}")
    t_last = int(t[-1])

    geometry = stream.geometry
    n_pix = geometry.n_pixels
    M = compute_M(geometry, cfg.alpha)
    pix = stream.pixel_index
    pol = stream.p.astype(np.float64)
    policy = cfg.theta_policy
    history: deque = deque(maxlen=getattr(policy, "window_k", 1))

    i = 0
    t_i = window_start(0, cfg.fps, t_origin)
    lo = int(np.searchsorted(t, t_i, side="left"))
    while t_i <= t_last:
        t_next = window_start(i + 1, cfg.fps, t_origin)
        hi = int(np.searchsorted(t, t_next, side="left"))
        theta = effective_theta(history, M, policy)
        if cfg.fps < theta:
            regime = Regime.INTERSECT
            stop = min(hi, lo + M)
        else:
            regime = Regime.UNION
            stop = min(max(hi, lo + M), n)
        counts = np.bincount(pix[lo:stop], weights=pol[lo:stop], minlength=n_pix)
        phi = counts.astype(np.int32).reshape(geometry.height, geometry.width)
        yield PolaritySlice(i, t_i, t_next, regime, theta, M, lo, stop, phi)

        history.append((hi - lo) * US_PER_S / (t_next - t_i))
        i += 1
        t_i, lo = t_next, hi


def slice_stream(stream: EventStream, cfg: TcbConfig,
                 t_origin: Optional[int] = None) -> Tuple[List[PolaritySlice], SliceManifest]:
    """Cut a stream into polarity slices.

    Slice ``i`` covers ``[t_origin + round(i*1e6/F), t_origin + round((i+1)*1e6/F))``
    and slicing stops once a window starts after the last event. The
    threshold for slice ``i`` only sees event rates of slices before it.
    Union slices may share events with their neighbours.
    """
    slices = list(iter_slices(stream, cfg, t_origin))
    manifest = SliceManifest([
        ManifestRecord(s.index, s.t_start, s.t_end, s.regime, s.theta, s.M, s.event_count)
        for s in slices
    ])
    return slices, manifest


def render_slice(phi_or_slice, mode: str = "binary", phi_max: Optional[float] = None) -> np.ndarray:
    """Three-channel uint8 image: red for negative, green for positive, black for zero.

    ``mode="magnitude"`` scales the active channel by ``min(|phi|, phi_max) / phi_max``.
    """
    phi = phi_or_slice.phi if isinstance(phi_or_slice, PolaritySlice) else np.asarray(phi_or_slice)
    rgb = np.zeros(phi.shape + (3,), dtype=np.uint8)
    if mode == "binary":
        level = np.full(phi.shape, 255, dtype=np.uint8)
    elif mode == "magnitude":
        if phi_max is None or not phi_max > 0:
            raise ValueError(f"magnitude mode needs phi_max > 0, got {phi_max}")
        mag = np.minimum(np.abs(phi).astype(np.float64), phi_max) / phi_max
        level = np.floor(mag * 255.0 + 0.5).astype(np.uint8)
    else:
        raise ValueError(f"unknown render mode {mode!r}")
    neg, pos = phi < 0, phi > 0
    rgb[..., 0][neg] = level[neg]
    rgb[..., 1][pos] = level[pos]
    return rgb
