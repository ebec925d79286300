"""vistok: deterministic visual-token budgeting pipeline.

Library and batch CLI covering patch-grid geometry, video frame
sampling, redundancy-aware token-budget compression, multimodal
sequence packing, a toy bidirectional 2D-RoPE encoder kernel,
feature-distillation losses with gradient verification, and
embedding-space corpus curation.
"""

from .budget import BudgetConfig, BudgetPlan, FramePlanInput, compute_alpha, native_tokens, plan_budget
from .config import ConfigError, PipelineConfig, load_config
from .curation import (
    ClusterNode,
    EmbeddingSet,
    KMeansResult,
    duration_aware_sample,
    greedy_diverse_select,
    kmeans,
    kmeans_hierarchical,
    motion_filter,
    motion_score,
)
from .encoder import (
    AttentionConfig,
    AttentionWeights,
    EncoderWeights,
    MlpWeights,
    TokenPos2D,
    attend_bidirectional,
    embed_patches,
    full_forward,
    grid_positions,
    load_weights,
    project_to_llm,
    rope2d_apply,
    rope2d_rotate,
    save_weights,
)
from .geometry import BBox1000, PatchGrid, PixelSize, denormalize_bbox, fit_grid, merge_2x, normalize_bbox
from .losses import LossValue, amplitude_loss, combined_loss, direction_loss, grad_check, relation_loss
from .sampler import (
    FrameClass,
    SampledFrame,
    SamplerConfig,
    VideoMeta,
    classify_frames,
    sample_fixed_fps,
    sample_tra_codec,
    sample_uniform,
)
from .sequence import (
    CONTEXT_LIMIT,
    VISUAL_TOKEN_LIMIT,
    FrameBlock,
    ImageBlock,
    LimitError,
    SequenceError,
    TextSpan,
    TokenSequence,
    pack_image_sequence,
    pack_streaming,
    pack_video_sequence,
    parse_record,
    parse_sequence,
)

__version__ = "0.1.0"
