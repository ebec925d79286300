"""Three-stage token-budget cascade for sampled video frames.

Every frame arrives with a native token count (LLM-side, i.e. after the
post-encoder 2x merge): key frames at full resolution, intermediate
frames at a 4x spatial downscale, which puts their counts near a 16:1
ratio. The cascade then fits the whole video under a global budget:

  stage 1  keep native counts when they already fit,
  stage 2  scale every frame by the same factor alpha = budget / total,
  stage 3  clamp intermediates at the per-frame floor and split the
           remaining budget equally over the key frames.

Counts are quantized down to integers at every step, so the budget is a
hard cap; the actual patch grid realizing a planned count is produced
later by ``geometry.fit_grid``, which again only rounds down.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .geometry import PatchGrid, PixelSize, fit_grid, merge_2x
from .sampler import FrameClass

# Cap meaning "unconstrained" when fitting a native-resolution grid.
UNBOUNDED_TOKENS = 1 << 40

# Intermediate frames are processed at a 4x spatial downscale per side
# relative to key frames, which is where the 16:1 token ratio comes from.
INTERMEDIATE_DOWNSCALE = 4


@dataclass(frozen=True)
class FramePlanInput:
    frame_class: FrameClass
    native_tokens: int

    def __post_init__(self) -> None:
        if self.native_tokens < 1:
            raise ValueError(f"native_tokens must be >= 1, got {self.native_tokens}")


@dataclass(frozen=True)
class BudgetConfig:
    t_max: int = 10240
    t_min: int = 16
    ratio: float = 16.0

    def __post_init__(self) -> None:
        if not (self.t_max >= self.t_min >= 1):
            raise ValueError(f"need t_max >= t_min >= 1, got t_max={self.t_max} t_min={self.t_min}")
        if not self.ratio > 0:
            raise ValueError(f"ratio must be positive, got {self.ratio}")

    def validate_frame_cap(self, max_frames: int) -> None:
        """The floor-safety rule: max_frames * t_min must fit in t_max.

        Holding this at configuration time is what guarantees that no
        frame, key or intermediate, is ever pushed below t_min by the
        cascade, up to the longest supported video.
        """
        if max_frames * self.t_min > self.t_max:
            raise ValueError(
                f"infeasible budget config: max_frames*t_min = {max_frames * self.t_min} "
                f"exceeds t_max = {self.t_max}"
            )


@dataclass(frozen=True)
class BudgetPlan:
    per_frame_tokens: tuple[int, ...]
    stage: int
    alpha: float

    def total_tokens(self) -> int:
        return sum(self.per_frame_tokens)


def compute_alpha(total_native: int, t_max: int) -> float:
    """Synchronous downscaling factor: min(1, t_max / total_native)."""
    if total_native < 1:
        raise ValueError(f"total_native must be >= 1, got {total_native}")
    return min(1.0, t_max / total_native)


def _quantize_down(target: float) -> int:
    # Largest achievable integer count not exceeding the target; a frame
    # always keeps at least a 1x1 grid.
    return max(1, math.floor(target))


def plan_budget(frames: Sequence[FramePlanInput], cfg: BudgetConfig) -> BudgetPlan:
    """Assign final per-frame token counts under the global budget.

    Raises ValueError when ``len(frames) * t_min > t_max``: such configs
    cannot honor the per-frame floor and must be rejected upstream.
    """
    if len(frames) == 0:
        raise ValueError("plan_budget needs at least one frame")
    if len(frames) * cfg.t_min > cfg.t_max:
        raise ValueError(
            f"infeasible plan: {len(frames)} frames * t_min {cfg.t_min} > t_max {cfg.t_max}"
        )

    natives = [f.native_tokens for f in frames]
    total_native = sum(natives)
    if total_native <= cfg.t_max:
        return BudgetPlan(tuple(natives), stage=1, alpha=1.0)

    alpha = cfg.t_max / total_native
    scaled = [_quantize_down(alpha * n) for n in natives]
    inter_idx = [i for i, f in enumerate(frames) if f.frame_class is FrameClass.INTERMEDIATE]
    if all(scaled[i] >= cfg.t_min for i in inter_idx):
        return BudgetPlan(tuple(scaled), stage=2, alpha=alpha)

    # Stage 3: intermediates saturate at the floor, keys absorb the rest.
    key_idx = [i for i, f in enumerate(frames) if f.frame_class is FrameClass.KEY]
    remaining = cfg.t_max - cfg.t_min * len(inter_idx)
    per_key = _quantize_down(remaining / len(key_idx)) if key_idx else 0
    final = list(natives)
    for i in inter_idx:
        final[i] = cfg.t_min
    for i in key_idx:
        # Never upscale a frame past its native count; compression only
        # moves counts down.
        final[i] = min(natives[i], per_key)
    return BudgetPlan(tuple(final), stage=3, alpha=alpha)


def key_frame_grid(size: PixelSize, patch_size: int) -> PatchGrid:
    """LLM-side grid of a key frame: native-resolution patches, 2x merged."""
    return merge_2x(fit_grid(size, patch_size, UNBOUNDED_TOKENS))


def intermediate_frame_grid(size: PixelSize, patch_size: int) -> PatchGrid:
    """LLM-side grid of an intermediate frame: 4x downscaled, 2x merged."""
    quarter = PixelSize(
        max(1, size.width // INTERMEDIATE_DOWNSCALE),
        max(1, size.height // INTERMEDIATE_DOWNSCALE),
    )
    return merge_2x(fit_grid(quarter, patch_size, UNBOUNDED_TOKENS))


def native_tokens(size: PixelSize, patch_size: int, frame_class: FrameClass) -> int:
    """Native LLM-side token count of one frame of the given class."""
    if frame_class is FrameClass.KEY:
        return key_frame_grid(size, patch_size).tokens()
    return intermediate_frame_grid(size, patch_size).tokens()
