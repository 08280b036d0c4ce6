"""Motion gradient alignment loss on [B, T, C, H, W] latent tensors.

Pipeline: a three-tap temporal kernel over each latent, L2 normalisation of
every channel fibre, channel inner products between all pairs of time steps,
a spatial mean, and finally a row-wise softmax cross-entropy whose targets are
the matching time steps.

All arithmetic is float64. Reductions run along a single axis per element, so a
batch entry's result does not depend on where it sits in the batch, and the
final mean uses :func:`math.fsum`, which is order independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

DEFAULT_KERNEL = (0.3, 0.4, 0.3)


@dataclass(frozen=True)
class MgaConfig:
    kernel: Tuple[float, float, float] = DEFAULT_KERNEL
    tau: float = 0.07
    norm_eps: float = 1e-8

    def __post_init__(self):
        if len(self.kernel) != 3:
            raise ValueError(f"kernel needs 3 weights, got {len(self.kernel)}")
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if not self.norm_eps > 0:
            raise ValueError(f"norm_eps must be positive, got {self.norm_eps}")


def _as_latent(L) -> np.ndarray:
    L = np.asarray(L, dtype=np.float64)
    if L.ndim != 5:
        raise ValueError(f"latent must be 5-D [B, T, C, H, W], got shape {L.shape}")
    if L.shape[1] < 3:
        raise ValueError(f"need T >= 3 time steps, got T={L.shape[1]}")
    if not np.all(np.isfinite(L)):
        raise ValueError("latent contains non-finite values")
    return L


def temporal_gradient(L, w: Sequence[float] = DEFAULT_KERNEL) -> np.ndarray:
    """``G[:, t] = w0*L[:, t] + w1*L[:, t+1] + w2*L[:, t+2]``, shape [B, T-2, C, H, W]."""
    L = _as_latent(L)
    w0, w1, w2 = (float(v) for v in w)
    return w0 * L[:, :-2] + w1 * L[:, 1:-1] + w2 * L[:, 2:]


def normalize_channels(G, norm_eps: float = 1e-8) -> np.ndarray:
    """Divide every channel fibre ``G[b, t, :, h, w]`` by its L2 norm plus ``norm_eps``."""
    G = np.asarray(G, dtype=np.float64)
    norm = np.sqrt(np.sum(G * G, axis=2, keepdims=True))
    return G / (norm + norm_eps)


def similarity(G_gen, G_ev) -> np.ndarray:
    """Channel inner products between every pair of time steps, [B, T', T', H, W]."""
    G_gen = np.asarray(G_gen, dtype=np.float64)
    G_ev = np.asarray(G_ev, dtype=np.float64)
    if G_gen.shape != G_ev.shape:
        raise ValueError(f"shape mismatch: {G_gen.shape} vs {G_ev.shape}")
    if G_gen.ndim != 5:
        raise ValueError(f"expected 5-D gradients, got shape {G_gen.shape}")
    return np.sum(G_gen[:, :, None] * G_ev[:, None, :], axis=3)


def reduce_spatial(S) -> np.ndarray:
    """Spatial mean of a [B, T', T', H, W] similarity volume."""
    S = np.asarray(S, dtype=np.float64)
    B, T1, T2 = S.shape[:3]
    return S.reshape(B, T1, T2, -1).mean(axis=3)


def mga_loss(S, tau: float) -> float:
    """Contrastive loss from a [B, T', T', H, W] similarity volume.

    Each row of the spatially averaged matrix is treated as logits (scaled by
    ``1/tau``) whose correct class is the diagonal entry.
    """
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 5 or S.shape[1] != S.shape[2]:
        raise ValueError(f"expected [B, T', T', H, W] similarity, got shape {S.shape}")
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    logits = reduce_spatial(S) / tau
    peak = logits.max(axis=2, keepdims=True)
    lse = peak[..., 0] + np.log(np.exp(logits - peak).sum(axis=2))
    diag = np.diagonal(logits, axis1=1, axis2=2)
    terms = (lse - diag).ravel()
    return math.fsum(terms.tolist()) / terms.size


def similarity_matrix(L_gen, L_ev, cfg: MgaConfig = MgaConfig()) -> np.ndarray:
    """Spatially averaged similarity [B, T-2, T-2] between two latents."""
    L_gen, L_ev = _as_latent(L_gen), _as_latent(L_ev)
    if L_gen.shape != L_ev.shape:
        raise ValueError(f"shape mismatch: {L_gen.shape} vs {L_ev.shape}")
    G_gen = normalize_channels(temporal_gradient(L_gen, cfg.kernel), cfg.norm_eps)
    G_ev = normalize_channels(temporal_gradient(L_ev, cfg.kernel), cfg.norm_eps)
    return reduce_spatial(similarity(G_gen, G_ev))


def mga_pipeline(L_gen, L_ev, cfg: MgaConfig = MgaConfig()) -> float:
    L_gen, L_ev = _as_latent(L_gen), _as_latent(L_ev)
    if L_gen.shape != L_ev.shape:
        raise ValueError(f"shape mismatch: {L_gen.shape} vs {L_ev.shape}")
    G_gen = normalize_channels(temporal_gradient(L_gen, cfg.kernel), cfg.norm_eps)
    G_ev = normalize_channels(temporal_gradient(L_ev, cfg.kernel), cfg.norm_eps)
    return mga_loss(similarity(G_gen, G_ev), cfg.tau)
