"""Frame-level quality metrics: PSNR and Gaussian-window SSIM on 8-bit frames.

RGB frames are converted to Rec. 601 luma (unrounded) before scoring.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

from .simulator import to_luminance

DATA_RANGE = 255.0
SSIM_WIN = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _pair(ref, cand):
    a = to_luminance(np.asarray(ref))
    b = to_luminance(np.asarray(cand))
    if a.shape != b.shape:
        raise ValueError(f"frame size mismatch: {a.shape} vs {b.shape}")
    return a, b


def psnr(ref, cand) -> float:
    """PSNR in dB on the 0-255 scale; ``math.inf`` for identical frames."""
    a, b = _pair(ref, cand)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 20.0 * math.log10(DATA_RANGE) - 10.0 * math.log10(mse)


def gaussian_window(size: int = SSIM_WIN, sigma: float = SSIM_SIGMA) -> np.ndarray:
    """Normalised 1-D Gaussian taps; the 2-D window is their outer product."""
    r = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(r * r) / (2.0 * sigma * sigma))
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    win = np.lib.stride_tricks.sliding_window_view
    rows = win(img, g.size, axis=1) @ g
    return win(rows, g.size, axis=0) @ g


def ssim_map(ref, cand) -> np.ndarray:
    a, b = _pair(ref, cand)
    if min(a.shape) < SSIM_WIN:
        raise ValueError(f"SSIM needs frames of at least {SSIM_WIN}x{SSIM_WIN}, got {a.shape}")
    g = gaussian_window()
    c1 = (SSIM_K1 * DATA_RANGE) ** 2
    c2 = (SSIM_K2 * DATA_RANGE) ** 2
    mu_a, mu_b = _filter_valid(a, g), _filter_valid(b, g)
    var_a = _filter_valid(a * a, g) - mu_a * mu_a
    var_b = _filter_valid(b * b, g) - mu_b * mu_b
    cov = _filter_valid(a * b, g) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return num / den


def ssim(ref, cand) -> float:
    """Mean SSIM over all fully-inside 11x11 windows (sigma 1.5, K1 0.01, K2 0.03)."""
    return float(np.mean(ssim_map(ref, cand)))


@dataclass
class FrameScore:
    index: int
    psnr: float
    ssim: float
    name: str = ""


@dataclass
class SequenceReport:
    frames: List[FrameScore] = field(default_factory=list)
    mean_psnr: float = math.inf
    mean_ssim: float = math.nan
    psnr_excluded: int = 0


def summarize(scores: List[FrameScore]) -> SequenceReport:
    """Means over frames; infinite PSNR values are left out of the PSNR mean and counted.

    If every PSNR is infinite the mean PSNR is reported as ``inf``.
    """
    finite = [s.psnr for s in scores if math.isfinite(s.psnr)]
    mean_psnr = math.fsum(finite) / len(finite) if finite else math.inf
    mean_ssim = math.fsum(s.ssim for s in scores) / len(scores) if scores else math.nan
    return SequenceReport(scores, mean_psnr, mean_ssim, len(scores) - len(finite))


def sequence_report(ref_frames: Sequence, cand_frames: Sequence, names: Sequence[str] = ()) -> SequenceReport:
    if len(ref_frames) != len(cand_frames):
        raise ValueError(f"sequence length mismatch: {len(ref_frames)} vs {len(cand_frames)}")
    names = list(names) or [""] * len(ref_frames)
    scores = [FrameScore(k, psnr(r, c), ssim(r, c), names[k])
              for k, (r, c) in enumerate(zip(ref_frames, cand_frames))]
    return summarize(scores)
