"""Toy-scale encoder kernel: patch projection, bidirectional attention
with 2D rotary position embeddings and QK normalization, and the
two-layer GELU projector mapping encoder features to the LLM width.

Everything here is a pure numpy forward pass at float64, sized for
numerically testing the mechanisms rather than for training. Weights are
random or loaded from the flat binary format documented at
``save_weights``.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

_EPS = 1e-12


@dataclass(frozen=True)
class AttentionConfig:
    dim: int
    heads: int
    rope_base: float = 10000.0

    def __post_init__(self) -> None:
        if self.dim % self.heads != 0:
            raise ValueError(f"dim {self.dim} not divisible by heads {self.heads}")
        if self.head_dim % 4 != 0:
            # Two position axes, each needing (sin, cos) channel pairs.
            raise ValueError(f"per-head dim {self.head_dim} must be divisible by 4")
        if not self.rope_base > 0:
            raise ValueError(f"rope_base must be positive, got {self.rope_base}")

    @property
    def head_dim(self) -> int:
        return self.dim // self.heads


@dataclass(frozen=True)
class TokenPos2D:
    row: int
    col: int

    def __post_init__(self) -> None:
        if self.row < 0 or self.col < 0:
            raise ValueError(f"positions must be non-negative, got ({self.row}, {self.col})")


def grid_positions(cols: int, rows: int) -> list[TokenPos2D]:
    """Row-major patch positions for a cols x rows grid."""
    return [TokenPos2D(r, c) for r in range(rows) for c in range(cols)]


def _positions_array(positions: Union[Sequence[TokenPos2D], np.ndarray]) -> np.ndarray:
    if isinstance(positions, np.ndarray):
        arr = np.asarray(positions, dtype=float)
    else:
        arr = np.array([(p.row, p.col) for p in positions], dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"positions must have shape (N, 2), got {arr.shape}")
    return arr


def validate_features(x: np.ndarray, name: str = "features") -> np.ndarray:
    """Check an N x D feature matrix: 2-D, finite, N >= 1, D >= 2."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 2:
        raise ValueError(f"{name} must be at least 1x2, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def embed_patches(
    patches: np.ndarray, weight: np.ndarray, bias: Optional[np.ndarray] = None
) -> np.ndarray:
    """Affine projection of flattened pixel patches into feature rows.

    ``patches`` is (N, P), ``weight`` is (D, P); each output row is
    ``weight @ patch + bias``.
    """
    patches = np.asarray(patches, dtype=float)
    weight = np.asarray(weight, dtype=float)
    if patches.ndim != 2 or weight.ndim != 2 or patches.shape[1] != weight.shape[1]:
        raise ValueError(
            f"shape mismatch: patches {patches.shape} vs weight {weight.shape}"
        )
    out = patches @ weight.T
    if bias is not None:
        bias = np.asarray(bias, dtype=float)
        if bias.shape != (weight.shape[0],):
            raise ValueError(f"bias shape {bias.shape} != ({weight.shape[0]},)")
        out = out + bias
    return out


def rope_frequencies(cfg: AttentionConfig) -> np.ndarray:
    """Per-pair angular frequencies for one position axis.

    Each head splits its channels in half per axis; an axis of d channels
    holds d/2 rotation pairs with frequency base^(-2j/d).
    """
    d_axis = cfg.head_dim // 2
    j = np.arange(d_axis // 2, dtype=float)
    return cfg.rope_base ** (-2.0 * j / d_axis)


def _rotate_pairs(x: np.ndarray, angles: np.ndarray) -> np.ndarray:
    # x: (..., 2*k) as adjacent (even, odd) pairs; angles: (..., k).
    even = x[..., 0::2]
    odd = x[..., 1::2]
    cos = np.cos(angles)
    sin = np.sin(angles)
    out = np.empty_like(x)
    out[..., 0::2] = even * cos - odd * sin
    out[..., 1::2] = even * sin + odd * cos
    return out


def rope2d_apply(
    x: np.ndarray, positions: Union[Sequence[TokenPos2D], np.ndarray], cfg: AttentionConfig
) -> np.ndarray:
    """Rotate each token row by its (row, col) position, per head.

    The first half of every head's channels rotates with the row index,
    the second half with the column index. Rotations are isometries, so
    row norms are preserved exactly.
    """
    x = np.asarray(x, dtype=float)
    pos = _positions_array(positions)
    n = x.shape[0]
    if x.ndim != 2 or x.shape[1] != cfg.dim:
        raise ValueError(f"expected shape (N, {cfg.dim}), got {x.shape}")
    if pos.shape[0] != n:
        raise ValueError(f"{pos.shape[0]} positions for {n} tokens")

    freqs = rope_frequencies(cfg)
    d_axis = cfg.head_dim // 2
    heads = x.reshape(n, cfg.heads, cfg.head_dim)
    row_angles = pos[:, 0:1, None] * freqs[None, None, :]  # (N, 1, k)
    col_angles = pos[:, 1:2, None] * freqs[None, None, :]
    out = np.empty_like(heads)
    out[:, :, :d_axis] = _rotate_pairs(heads[:, :, :d_axis], row_angles)
    out[:, :, d_axis:] = _rotate_pairs(heads[:, :, d_axis:], col_angles)
    return out.reshape(n, cfg.dim)


def rope2d_rotate(vec: np.ndarray, pos: TokenPos2D, cfg: AttentionConfig) -> np.ndarray:
    """Rotate a single token row; see ``rope2d_apply``."""
    vec = np.asarray(vec, dtype=float)
    if vec.shape != (cfg.dim,):
        raise ValueError(f"expected shape ({cfg.dim},), got {vec.shape}")
    return rope2d_apply(vec[None, :], [pos], cfg)[0]


@dataclass
class AttentionWeights:
    """Projection matrices plus the learned per-head QK-norm gains."""

    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    q_gain: np.ndarray
    k_gain: np.ndarray

    @classmethod
    def random(cls, cfg: AttentionConfig, rng: np.random.Generator) -> "AttentionWeights":
        d = cfg.dim
        scale = 1.0 / math.sqrt(d)
        return cls(
            wq=rng.standard_normal((d, d)) * scale,
            wk=rng.standard_normal((d, d)) * scale,
            wv=rng.standard_normal((d, d)) * scale,
            wo=rng.standard_normal((d, d)) * scale,
            q_gain=np.ones(cfg.heads),
            k_gain=np.ones(cfg.heads),
        )


def _qk_normalize(x: np.ndarray, gain: np.ndarray) -> np.ndarray:
    # x: (N, H, hd); unit-normalize each head vector, scale by its gain.
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    return x / np.maximum(norms, _EPS) * gain[None, :, None]


def attend_bidirectional(
    x: np.ndarray,
    weights: AttentionWeights,
    cfg: AttentionConfig,
    positions: Optional[Union[Sequence[TokenPos2D], np.ndarray]] = None,
    *,
    causal: bool = False,
    return_attn: bool = False,
):
    """Multi-head scaled-dot-product attention with no causal mask.

    Queries and keys are QK-normalized per head, then rotated by their
    2D positions when ``positions`` is given. Every output row depends
    on every input row; ``causal=True`` restores the masked variant and
    exists only as a control for bidirectionality checks.
    """
    x = validate_features(x, "attention input")
    n = x.shape[0]
    if x.shape[1] != cfg.dim:
        raise ValueError(f"input width {x.shape[1]} != config dim {cfg.dim}")

    q = (x @ weights.wq.T).reshape(n, cfg.heads, cfg.head_dim)
    k = (x @ weights.wk.T).reshape(n, cfg.heads, cfg.head_dim)
    v = (x @ weights.wv.T).reshape(n, cfg.heads, cfg.head_dim)

    q = _qk_normalize(q, weights.q_gain)
    k = _qk_normalize(k, weights.k_gain)
    if positions is not None:
        q = rope2d_apply(q.reshape(n, cfg.dim), positions, cfg).reshape(n, cfg.heads, cfg.head_dim)
        k = rope2d_apply(k.reshape(n, cfg.dim), positions, cfg).reshape(n, cfg.heads, cfg.head_dim)

    scores = np.einsum("ihd,jhd->hij", q, k) / math.sqrt(cfg.head_dim)
    if causal:
        mask = np.triu(np.ones((n, n), dtype=bool), k=1)
        scores = np.where(mask[None, :, :], -np.inf, scores)
    scores = scores - scores.max(axis=-1, keepdims=True)
    exp = np.exp(scores)
    attn = exp / exp.sum(axis=-1, keepdims=True)  # (H, N, N)

    ctx = np.einsum("hij,jhd->ihd", attn, v).reshape(n, cfg.dim)
    out = ctx @ weights.wo.T
    if return_attn:
        return out, attn
    return out


@dataclass
class MlpWeights:
    """Two-layer GELU projector: affine -> GELU -> affine."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    @classmethod
    def random(
        cls, in_dim: int, hidden: int, out_dim: int, rng: np.random.Generator
    ) -> "MlpWeights":
        return cls(
            w1=rng.standard_normal((hidden, in_dim)) / math.sqrt(in_dim),
            b1=rng.standard_normal(hidden) * 0.01,
            w2=rng.standard_normal((out_dim, hidden)) / math.sqrt(hidden),
            b2=rng.standard_normal(out_dim) * 0.01,
        )


_erf = np.vectorize(math.erf)


def gelu(x: np.ndarray) -> np.ndarray:
    """Exact (erf-based) GELU."""
    x = np.asarray(x, dtype=float)
    return 0.5 * x * (1.0 + _erf(x / math.sqrt(2.0)))


def project_to_llm(x: np.ndarray, weights: MlpWeights) -> np.ndarray:
    """Map encoder features to the LLM hidden size: affine, GELU, affine."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != weights.w1.shape[1]:
        raise ValueError(f"input shape {x.shape} does not match w1 {weights.w1.shape}")
    hidden = gelu(x @ weights.w1.T + weights.b1)
    return hidden @ weights.w2.T + weights.b2


@dataclass
class EncoderWeights:
    """All weights of the toy encoder: patch embed, attention, projector."""

    patch_weight: np.ndarray
    patch_bias: np.ndarray
    attention: AttentionWeights
    projector: MlpWeights

    @classmethod
    def random(
        cls,
        cfg: AttentionConfig,
        patch_len: int,
        hidden: int,
        out_dim: int,
        rng: np.random.Generator,
    ) -> "EncoderWeights":
        return cls(
            patch_weight=rng.standard_normal((cfg.dim, patch_len)) / math.sqrt(patch_len),
            patch_bias=rng.standard_normal(cfg.dim) * 0.01,
            attention=AttentionWeights.random(cfg, rng),
            projector=MlpWeights.random(cfg.dim, hidden, out_dim, rng),
        )


def full_forward(
    patches: np.ndarray,
    weights: EncoderWeights,
    positions: Union[Sequence[TokenPos2D], np.ndarray],
    cfg: AttentionConfig,
) -> np.ndarray:
    """Patch embed -> bidirectional attention (with RoPE) -> projector."""
    feats = embed_patches(patches, weights.patch_weight, weights.patch_bias)
    attended = attend_bidirectional(feats, weights.attention, cfg, positions)
    return project_to_llm(attended, weights.projector)


# --- weight file format ------------------------------------------------------
#
# Flat little-endian binary. Header:
#   magic   4 bytes  b"VTK1"
#   dim     uint32
#   heads   uint32
#   patch   uint32   flattened patch length
#   hidden  uint32   projector hidden width
#   out     uint32   projector output width
#   base    float32  rope base
# followed by float32 arrays, row-major, in this order:
#   patch_weight (dim x patch), patch_bias (dim),
#   wq, wk, wv, wo (each dim x dim), q_gain (heads), k_gain (heads),
#   w1 (hidden x dim), b1 (hidden), w2 (out x hidden), b2 (out).

_MAGIC = b"VTK1"
_HEADER = struct.Struct("<4sIIIIIf")


def save_weights(path: str, cfg: AttentionConfig, weights: EncoderWeights) -> None:
    patch_len = weights.patch_weight.shape[1]
    hidden = weights.projector.w1.shape[0]
    out_dim = weights.projector.w2.shape[0]
    arrays = _weight_arrays(weights)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, cfg.dim, cfg.heads, patch_len, hidden, out_dim, cfg.rope_base))
        for arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_weights(path: str) -> tuple[AttentionConfig, EncoderWeights]:
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise ValueError(f"{path}: truncated header")
        magic, dim, heads, patch_len, hidden, out_dim, base = _HEADER.unpack(header)
        if magic != _MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        cfg = AttentionConfig(dim=dim, heads=heads, rope_base=float(base))
        shapes = [
            (dim, patch_len), (dim,),
            (dim, dim), (dim, dim), (dim, dim), (dim, dim), (heads,), (heads,),
            (hidden, dim), (hidden,), (out_dim, hidden), (out_dim,),
        ]
        arrays = []
        for shape in shapes:
            count = int(np.prod(shape))
            buf = fh.read(4 * count)
            if len(buf) != 4 * count:
                raise ValueError(f"{path}: truncated weight data")
            arrays.append(np.frombuffer(buf, dtype="<f4").astype(float).reshape(shape))
        if fh.read(1):
            raise ValueError(f"{path}: trailing bytes after weight data")
    weights = EncoderWeights(
        patch_weight=arrays[0],
        patch_bias=arrays[1],
        attention=AttentionWeights(*arrays[2:8]),
        projector=MlpWeights(*arrays[8:12]),
    )
    return cfg, weights


def _weight_arrays(weights: EncoderWeights) -> list[np.ndarray]:
    a = weights.attention
    p = weights.projector
    return [
        weights.patch_weight, weights.patch_bias,
        a.wq, a.wk, a.wv, a.wo, a.q_gain, a.k_gain,
        p.w1, p.b1, p.w2, p.b2,
    ]
