"""Patch-grid arithmetic and grounding-coordinate normalization.

Images and frames are tiled into square patches; a frame's visual-token
count is the area of its patch grid. Token budgets are hard caps, so
grids are floored and never rounded up. Region coordinates live in a
shared integer space of [0, 1000] relative to the image, top-left
origin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

COORD_SPACE = 1000


@dataclass(frozen=True)
class PixelSize:
    """Native width/height of an image or frame, in pixels."""

    width: int
    height: int

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError(f"pixel size must be positive, got {self.width}x{self.height}")


@dataclass(frozen=True)
class PatchGrid:
    """A cols x rows tiling of fixed-size square patches."""

    cols: int
    rows: int
    patch_size: int

    def __post_init__(self) -> None:
        if self.cols < 1 or self.rows < 1:
            raise ValueError(f"grid must be at least 1x1, got {self.cols}x{self.rows}")
        if self.patch_size < 1:
            raise ValueError(f"patch_size must be >= 1, got {self.patch_size}")

    def tokens(self) -> int:
        return self.cols * self.rows


@dataclass(frozen=True)
class BBox1000:
    """Axis-aligned box with integer coordinates in [0, 1000] relative space.

    (0, 0) is the top-left image corner and (1000, 1000) the bottom-right,
    independent of the image's pixel resolution.
    """

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self) -> None:
        ok = 0 <= self.x0 <= self.x1 <= COORD_SPACE and 0 <= self.y0 <= self.y1 <= COORD_SPACE
        if not ok:
            raise ValueError(f"invalid normalized box ({self.x0}, {self.y0}, {self.x1}, {self.y1})")


def _round_half_up(x: float) -> int:
    # round() is banker's rounding; coordinates round half away from zero.
    # All values handled here are non-negative.
    return int(math.floor(x + 0.5))


def fit_grid(size: PixelSize, patch_size: int, max_tokens: int) -> PatchGrid:
    """Largest patch grid for ``size`` whose token count is <= ``max_tokens``.

    The native grid (floor division per side, clamped to one patch) is
    returned unchanged when it already fits. Otherwise both sides shrink
    by the same factor sqrt(max_tokens / native_tokens): tokens scale
    with area, so the sqrt keeps the aspect ratio while landing on the
    budget, and flooring each side keeps the cap hard.
    """
    if patch_size < 1:
        raise ValueError(f"patch_size must be >= 1, got {patch_size}")
    if max_tokens < 1:
        raise ValueError(f"max_tokens must be >= 1, got {max_tokens}")

    cols = max(1, size.width // patch_size)
    rows = max(1, size.height // patch_size)
    if cols * rows <= max_tokens:
        return PatchGrid(cols, rows, patch_size)

    scale = math.sqrt(max_tokens / (cols * rows))
    new_cols = max(1, math.floor(cols * scale))
    new_rows = max(1, math.floor(rows * scale))
    if new_cols * new_rows > max_tokens:
        # Only reachable when one side was clamped up to a single patch
        # (extreme aspect ratio); spend the whole budget on the other side.
        if new_cols <= new_rows:
            new_rows = max(1, max_tokens // new_cols)
        else:
            new_cols = max(1, max_tokens // new_rows)
    return PatchGrid(new_cols, new_rows, patch_size)


def merge_2x(grid: PatchGrid) -> PatchGrid:
    """Spatial 2x downsampling applied to the token grid after encoding.

    Each side is halved with ceiling division, so odd sides keep their
    partial row/column.
    """
    return PatchGrid((grid.cols + 1) // 2, (grid.rows + 1) // 2, grid.patch_size)


def normalize_bbox(box: tuple[float, float, float, float], size: PixelSize) -> BBox1000:
    """Map a pixel rectangle (x0, y0, x1, y1) into the [0, 1000] space.

    The box must lie within the image bounds; coordinates are scaled,
    rounded half away from zero, and clamped.
    """
    x0, y0, x1, y1 = box
    if not (0 <= x0 <= x1 <= size.width and 0 <= y0 <= y1 <= size.height):
        raise ValueError(f"box {box} outside image bounds {size.width}x{size.height}")

    def norm(coord: float, dim: int) -> int:
        return min(COORD_SPACE, max(0, _round_half_up(COORD_SPACE * coord / dim)))

    return BBox1000(
        norm(x0, size.width),
        norm(y0, size.height),
        norm(x1, size.width),
        norm(y1, size.height),
    )


def denormalize_bbox(box: BBox1000, size: PixelSize) -> tuple[int, int, int, int]:
    """Map a [0, 1000]-space box back to pixel coordinates of ``size``."""

    def denorm(coord: int, dim: int) -> int:
        return _round_half_up(coord * dim / COORD_SPACE)

    return (
        denorm(box.x0, size.width),
        denorm(box.y0, size.height),
        denorm(box.x1, size.width),
        denorm(box.y1, size.height),
    )
