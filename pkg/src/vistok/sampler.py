"""Frame sampling policies and key/intermediate frame classification.

A video enters the pipeline as metadata only (duration, native size,
optionally codec I-frame timestamps); decoding is out of scope. Frames
are sampled at a fixed rate up to a cap, falling back to equidistant
sampling over the whole duration, and classified as key frames (rapid
temporal change) or intermediate frames (stable context).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .geometry import PixelSize


class FrameClass(Enum):
    KEY = "key"
    INTERMEDIATE = "intermediate"


@dataclass(frozen=True)
class VideoMeta:
    """Sidecar description of one video: duration, resolution, I-frames."""

    duration: float
    native_size: PixelSize
    iframe_times: Optional[tuple[float, ...]] = None

    def __post_init__(self) -> None:
        if not self.duration > 0:
            raise ValueError(f"duration must be positive, got {self.duration}")
        if self.iframe_times is not None:
            times = tuple(float(t) for t in self.iframe_times)
            object.__setattr__(self, "iframe_times", times)
            for prev, cur in zip(times, times[1:]):
                if cur <= prev:
                    raise ValueError("iframe_times must be strictly increasing")
            if times and not (0.0 <= times[0] and times[-1] < self.duration):
                raise ValueError("iframe_times must lie in [0, duration)")


@dataclass(frozen=True)
class SamplerConfig:
    fps: float = 1.0
    max_frames: int = 180
    key_threshold: float = 0.15

    def __post_init__(self) -> None:
        if not self.fps > 0:
            raise ValueError(f"fps must be positive, got {self.fps}")
        if self.max_frames < 1:
            raise ValueError(f"max_frames must be >= 1, got {self.max_frames}")
        if not 0.0 <= self.key_threshold <= 1.0:
            raise ValueError(f"key_threshold must be in [0, 1], got {self.key_threshold}")


@dataclass(frozen=True)
class SampledFrame:
    timestamp: float
    frame_class: FrameClass


def sample_uniform(duration: float, n: int) -> list[float]:
    """``n`` equidistant timestamps over [0, duration), at bin centers.

    Centers avoid double-counting the endpoints: t_i = (i + 0.5) * d / n.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return [(i + 0.5) * duration / n for i in range(n)]


def sample_fixed_fps(meta: VideoMeta, cfg: SamplerConfig) -> list[float]:
    """Timestamps 0, 1/fps, 2/fps, ... < duration, capped at max_frames.

    When the plain enumeration would exceed the cap, the schedule is
    replaced by ``max_frames`` equidistant samples over the full duration.
    """
    count = max(1, math.ceil(meta.duration * cfg.fps))
    times = [k / cfg.fps for k in range(count)]
    times = [t for t in times if t < meta.duration] or [0.0]
    if len(times) > cfg.max_frames:
        return sample_uniform(meta.duration, cfg.max_frames)
    return times


def classify_frames(thumbnails: Sequence[np.ndarray], cfg: SamplerConfig) -> list[FrameClass]:
    """Label each frame Key or Intermediate from luminance thumbnails.

    Frame 0 is always Key (the first reference). A later frame becomes
    Key when its mean absolute luminance difference from the most recent
    Key exceeds ``key_threshold``; comparing against the last Key rather
    than the previous frame lets slow drift accumulate into a new Key.
    Thumbnail values are expected in [0, 1] and all shapes must match.
    """
    if len(thumbnails) == 0:
        raise ValueError("need at least one frame")
    thumbs = [np.asarray(t, dtype=float) for t in thumbnails]
    shape = thumbs[0].shape
    for i, t in enumerate(thumbs):
        if t.shape != shape:
            raise ValueError(f"thumbnail {i} has shape {t.shape}, expected {shape}")

    labels = [FrameClass.KEY]
    reference = thumbs[0]
    for t in thumbs[1:]:
        if float(np.mean(np.abs(t - reference))) > cfg.key_threshold:
            labels.append(FrameClass.KEY)
            reference = t
        else:
            labels.append(FrameClass.INTERMEDIATE)
    return labels


def _uniform_indices(m: int, n: int) -> list[int]:
    # n indices spread linspace-style over range(m), endpoints included.
    if n >= m:
        return list(range(m))
    if n == 1:
        return [0]
    step = (m - 1) / (n - 1)
    return [int(math.floor(j * step + 0.5)) for j in range(n)]


def sample_tra_codec(meta: VideoMeta, cfg: SamplerConfig) -> list[SampledFrame]:
    """Codec-aware sampling: keys from container I-frames.

    I-frame timestamps become the Key frames; Intermediates are sampled
    at ``cfg.fps`` inside each I-frame interval. When the I-frames alone
    exceed ``max_frames`` they are uniformly subsampled by index and no
    intermediates are kept. When keys plus intermediates overflow the
    cap, intermediates are dropped from the shortest intervals first, so
    long intervals keep their temporal context.
    """
    if meta.iframe_times is None or len(meta.iframe_times) == 0:
        raise ValueError("sample_tra_codec requires iframe_times in VideoMeta")

    keys = list(meta.iframe_times)
    if len(keys) > cfg.max_frames:
        keys = [keys[i] for i in _uniform_indices(len(keys), cfg.max_frames)]
        return [SampledFrame(t, FrameClass.KEY) for t in keys]

    # Per-interval intermediates, intervals ending at the next key or at
    # the video's end for the last one.
    bounds = keys[1:] + [meta.duration]
    interval_frames: list[list[float]] = []
    for start, end in zip(keys, bounds):
        frames = []
        k = 1
        while start + k / cfg.fps < end:
            frames.append(start + k / cfg.fps)
            k += 1
        interval_frames.append(frames)

    total = len(keys) + sum(len(f) for f in interval_frames)
    excess = total - cfg.max_frames
    if excess > 0:
        # Shortest intervals lose their intermediates first; within an
        # interval the latest timestamps go first.
        order = sorted(range(len(keys)), key=lambda i: (bounds[i] - keys[i], i))
        for i in order:
            if excess <= 0:
                break
            drop = min(len(interval_frames[i]), excess)
            if drop:
                interval_frames[i] = interval_frames[i][: len(interval_frames[i]) - drop]
                excess -= drop

    out = []
    for key_t, frames in zip(keys, interval_frames):
        out.append(SampledFrame(key_t, FrameClass.KEY))
        out.extend(SampledFrame(t, FrameClass.INTERMEDIATE) for t in frames)
    return out
