"""Cross-person augmentations: seeded event translation and protected-region cropping."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional, Tuple

import numpy as np

from .events import EventStream
from .rng import SplitMix64
from .tcb import SliceManifest


class Rect(NamedTuple):
    x0: int
    y0: int
    w: int
    h: int

    def contains(self, other: "Rect") -> bool:
        return (self.x0 <= other.x0 and self.y0 <= other.y0
                and other.x0 + other.w <= self.x0 + self.w
                and other.y0 + other.h <= self.y0 + self.h)


@dataclass(frozen=True)
class TranslationSpec:
    max_dx: int
    max_dy: int
    per_slice: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.max_dx < 0 or self.max_dy < 0:
            raise ValueError("maximum shifts must be non-negative")


@dataclass(frozen=True)
class CropSpec:
    out_w: int
    out_h: int
    protected: Rect
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "protected", Rect(*self.protected))
        if self.out_w < 1 or self.out_h < 1:
            raise ValueError("crop size must be positive")


class NoValidPlacement(ValueError):
    pass


def draw_shift(rng: SplitMix64, max_dx: int, max_dy: int) -> Tuple[int, int]:
    """Draw ``dx`` then ``dy`` uniformly from the closed ranges."""
    dx = rng.integer(-max_dx, max_dx)
    dy = rng.integer(-max_dy, max_dy)
    return dx, dy


def global_shift(spec: TranslationSpec) -> Tuple[int, int]:
    return draw_shift(SplitMix64(spec.seed), spec.max_dx, spec.max_dy)


def slice_shift(spec: TranslationSpec, index: int) -> Tuple[int, int]:
    return draw_shift(SplitMix64.keyed(spec.seed, index), spec.max_dx, spec.max_dy)


def shift_events(stream: EventStream, dx, dy) -> EventStream:
    """Shift by scalar or per-event offsets; events leaving the sensor are dropped."""
    x = stream.x.astype(np.int64) + dx
    y = stream.y.astype(np.int64) + dy
    W, H = stream.geometry.width, stream.geometry.height
    keep = (x >= 0) & (x < W) & (y >= 0) & (y < H)
    return EventStream.from_arrays(stream.geometry, stream.t[keep], x[keep], y[keep], stream.p[keep])


def translate_events(stream: EventStream, spec: TranslationSpec,
                     manifest: Optional[SliceManifest] = None) -> EventStream:
    """Randomly translate events, globally or with one shift per manifest window.

    In per-slice mode every event must fall in some manifest window; the shift
    for window ``i`` comes from the generator keyed on ``(seed, i)``.
    """
    W, H = stream.geometry.width, stream.geometry.height
    if spec.max_dx >= W or spec.max_dy >= H:
        raise ValueError(f"maximum shift ({spec.max_dx}, {spec.max_dy}) must be below sensor size {W}x{H}")
    if not spec.per_slice:
        dx, dy = global_shift(spec)
        return shift_events(stream, dx, dy)
    if manifest is None:
        raise ValueError("per-slice translation requires a slice manifest")
    pos = manifest.window_of(stream.t)
    if np.any(pos < 0):
        k = int(np.flatnonzero(pos < 0)[0])
        raise ValueError(f"event {k} at t={int(stream.t[k])} lies outside every manifest window")
    shifts = np.array([slice_shift(spec, r.index) for r in manifest.records], dtype=np.int64).reshape(-1, 2)
    return shift_events(stream, shifts[pos, 0], shifts[pos, 1])


def placement_range(image_w: int, image_h: int, spec: CropSpec) -> Tuple[range, range]:
    """Feasible top-left corners for a crop that contains the protected rectangle."""
    pr = spec.protected
    if not Rect(0, 0, image_w, image_h).contains(pr) or pr.w < 0 or pr.h < 0:
        raise NoValidPlacement(f"no valid placement: protected region {tuple(pr)} is not inside "
                               f"the {image_w}x{image_h} image")
    xs = range(max(0, pr.x0 + pr.w - spec.out_w), min(pr.x0, image_w - spec.out_w) + 1)
    ys = range(max(0, pr.y0 + pr.h - spec.out_h), min(pr.y0, image_h - spec.out_h) + 1)
    if len(xs) == 0 or len(ys) == 0:
        raise NoValidPlacement(f"no valid placement: {spec.out_w}x{spec.out_h} crop cannot hold "
                               f"protected region {tuple(pr)} inside a {image_w}x{image_h} image")
    return xs, ys


def crop_reference(image: np.ndarray, spec: CropSpec) -> Tuple[np.ndarray, Rect]:
    """Random crop containing ``spec.protected``; returns the pixels and the applied rectangle."""
    image = np.asarray(image)
    H, W = image.shape[:2]
    xs, ys = placement_range(W, H, spec)
    rng = SplitMix64(spec.seed)
    x0 = xs[rng.below(len(xs))]
    y0 = ys[rng.below(len(ys))]
    rect = Rect(x0, y0, spec.out_w, spec.out_h)
    return image[y0:y0 + spec.out_h, x0:x0 + spec.out_w].copy(), rect
