"""Event-camera data toolkit: simulation, time-count balanced slicing,
augmentation, motion gradient alignment loss and frame metrics."""

from .events import Event, EventStream, SensorGeometry, StreamStats, stream_stats, validate_stream
from .mga import MgaConfig, mga_loss, mga_pipeline, normalize_channels, similarity, temporal_gradient
from .simulator import FrameSequence, SimulatorConfig, simulate
from .tcb import (AdaptiveMedianTheta, FixedTheta, PolaritySlice, Regime, SliceManifest, TcbConfig, compute_M,
                  effective_theta, render_slice, slice_stream)

__version__ = "0.1.0"

__all__ = [
    "Event", "EventStream", "SensorGeometry", "StreamStats", "stream_stats", "validate_stream",
    "MgaConfig", "mga_loss", "mga_pipeline", "normalize_channels", "similarity", "temporal_gradient",
    "FrameSequence", "SimulatorConfig", "simulate",
    "AdaptiveMedianTheta", "FixedTheta", "PolaritySlice", "Regime", "SliceManifest", "TcbConfig", "compute_M",
    "effective_theta", "render_slice", "slice_stream",
]
