import numpy as np
import pytest

from naive_reference import naive_affine, naive_attention, naive_mlp, naive_rope_rotate
from vistok.encoder import (
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

CFG = AttentionConfig(dim=32, heads=2)


def test_config_validation():
    with pytest.raises(ValueError):
        AttentionConfig(dim=30, heads=4)
    with pytest.raises(ValueError):
        AttentionConfig(dim=24, heads=12)  # head_dim 2 not divisible by 4
    assert AttentionConfig(dim=64, heads=4).head_dim == 16


def test_embed_patches_identity():
    basis = np.eye(5)
    out = embed_patches(basis, np.eye(5))
    assert np.array_equal(out, basis)


def test_embed_patches_zero_weights():
    out = embed_patches(np.random.default_rng(0).random((3, 4)), np.zeros((6, 4)))
    assert np.array_equal(out, np.zeros((3, 6)))


def test_embed_patches_matches_naive():
    rng = np.random.default_rng(1)
    patches = rng.standard_normal((3, 7))
    weight = rng.standard_normal((5, 7))
    bias = rng.standard_normal(5)
    assert np.allclose(embed_patches(patches, weight, bias), naive_affine(patches, weight, bias), atol=1e-12)


def test_embed_patches_shape_mismatch():
    with pytest.raises(ValueError):
        embed_patches(np.zeros((2, 4)), np.zeros((3, 5)))


def test_rope_zero_position_is_identity():
    rng = np.random.default_rng(2)
    vec = rng.standard_normal(CFG.dim)
    assert np.array_equal(rope2d_rotate(vec, TokenPos2D(0, 0), CFG), vec)


def test_rope_preserves_norm():
    rng = np.random.default_rng(3)
    for _ in range(200):
        vec = rng.standard_normal(CFG.dim)
        pos = TokenPos2D(int(rng.integers(0, 100)), int(rng.integers(0, 100)))
        rotated = rope2d_rotate(vec, pos, CFG)
        assert abs(np.linalg.norm(rotated) - np.linalg.norm(vec)) <= 1e-12


def test_rope_matches_naive():
    rng = np.random.default_rng(4)
    for _ in range(50):
        vec = rng.standard_normal(CFG.dim)
        row, col = int(rng.integers(0, 40)), int(rng.integers(0, 40))
        ours = rope2d_rotate(vec, TokenPos2D(row, col), CFG)
        ref = naive_rope_rotate(vec, row, col, CFG.heads, CFG.rope_base)
        assert np.allclose(ours, ref, atol=1e-12)


def test_rope_relative_position_identity():
    rng = np.random.default_rng(5)
    for _ in range(300):
        q = rng.standard_normal(CFG.dim)
        k = rng.standard_normal(CFG.dim)
        p1 = rng.integers(0, 50, size=2)
        p2 = rng.integers(0, 50, size=2)
        delta = rng.integers(0, 20, size=2)
        d1 = np.dot(
            rope2d_apply(q[None], p1[None], CFG)[0], rope2d_apply(k[None], p2[None], CFG)[0]
        )
        d2 = np.dot(
            rope2d_apply(q[None], (p1 + delta)[None], CFG)[0],
            rope2d_apply(k[None], (p2 + delta)[None], CFG)[0],
        )
        assert abs(d1 - d2) <= 1e-9


def test_grid_positions_row_major():
    pos = grid_positions(cols=3, rows=2)
    assert pos[0] == TokenPos2D(0, 0)
    assert pos[1] == TokenPos2D(0, 1)
    assert pos[3] == TokenPos2D(1, 0)
    assert len(pos) == 6


def test_attention_single_token_is_value_projection():
    rng = np.random.default_rng(6)
    weights = AttentionWeights.random(CFG, rng)
    x = rng.standard_normal((1, CFG.dim))
    out = attend_bidirectional(x, weights, CFG)
    expected = (x @ weights.wv.T) @ weights.wo.T
    assert np.allclose(out, expected, atol=1e-12)


def test_attention_identical_tokens_identical_outputs():
    rng = np.random.default_rng(7)
    weights = AttentionWeights.random(CFG, rng)
    x = np.tile(rng.standard_normal(CFG.dim), (5, 1))
    out = attend_bidirectional(x, weights, CFG)
    assert np.allclose(out, out[0], atol=1e-12)


def test_attention_rows_sum_to_one():
    rng = np.random.default_rng(8)
    weights = AttentionWeights.random(CFG, rng)
    x = rng.standard_normal((7, CFG.dim))
    _, attn = attend_bidirectional(x, weights, CFG, return_attn=True)
    assert np.max(np.abs(attn.sum(axis=-1) - 1.0)) <= 1e-12


def test_bidirectional_witness_vs_causal_control():
    rng = np.random.default_rng(9)
    weights = AttentionWeights.random(CFG, rng)
    positions = grid_positions(cols=3, rows=2)
    x = rng.standard_normal((6, CFG.dim))
    bumped = x.copy()
    bumped[-1] += rng.standard_normal(CFG.dim)

    out_a = attend_bidirectional(x, weights, CFG, positions)
    out_b = attend_bidirectional(bumped, weights, CFG, positions)
    assert np.max(np.abs(out_b[0] - out_a[0])) > 1e-6

    causal_a = attend_bidirectional(x, weights, CFG, positions, causal=True)
    causal_b = attend_bidirectional(bumped, weights, CFG, positions, causal=True)
    assert np.array_equal(causal_a[0], causal_b[0])  # exactly zero change


def test_attention_matches_naive():
    rng = np.random.default_rng(10)
    weights = AttentionWeights.random(CFG, rng)
    weights.q_gain = rng.uniform(0.5, 2.0, CFG.heads)
    weights.k_gain = rng.uniform(0.5, 2.0, CFG.heads)
    x = rng.standard_normal((5, CFG.dim))
    positions = [(i // 2, i % 2) for i in range(5)]
    ours = attend_bidirectional(x, weights, CFG, np.array(positions))
    ref = naive_attention(
        x, weights.wq, weights.wk, weights.wv, weights.wo,
        weights.q_gain, weights.k_gain, CFG.heads, positions, CFG.rope_base,
    )
    assert np.allclose(ours, ref, atol=1e-10)
    ours_causal = attend_bidirectional(x, weights, CFG, np.array(positions), causal=True)
    ref_causal = naive_attention(
        x, weights.wq, weights.wk, weights.wv, weights.wo,
        weights.q_gain, weights.k_gain, CFG.heads, positions, CFG.rope_base, causal=True,
    )
    assert np.allclose(ours_causal, ref_causal, atol=1e-10)


def test_projector_zero_weights():
    w = MlpWeights(np.zeros((6, 4)), np.zeros(6), np.zeros((3, 6)), np.zeros(3))
    out = project_to_llm(np.ones((2, 4)), w)
    assert np.array_equal(out, np.zeros((2, 3)))


def test_projector_matches_naive():
    rng = np.random.default_rng(11)
    w = MlpWeights.random(in_dim=4, hidden=9, out_dim=5, rng=rng)
    x = rng.standard_normal((3, 4))
    assert np.allclose(project_to_llm(x, w), naive_mlp(x, w.w1, w.b1, w.w2, w.b2), atol=1e-12)
    zero = np.zeros((2, 4))
    assert np.allclose(project_to_llm(zero, w), naive_mlp(zero, w.w1, w.b1, w.w2, w.b2), atol=1e-12)


def test_projector_shape_mismatch():
    w = MlpWeights.random(4, 8, 5, np.random.default_rng(0))
    with pytest.raises(ValueError):
        project_to_llm(np.zeros((2, 5)), w)


def test_full_forward_matches_naive_pipeline():
    rng = np.random.default_rng(12)
    weights = EncoderWeights.random(CFG, patch_len=12, hidden=24, out_dim=16, rng=rng)
    patches = rng.standard_normal((6, 12))
    positions = [(i // 3, i % 3) for i in range(6)]
    ours = full_forward(patches, weights, np.array(positions), CFG)

    feats = naive_affine(patches, weights.patch_weight, weights.patch_bias)
    a = weights.attention
    attended = naive_attention(
        feats, a.wq, a.wk, a.wv, a.wo, a.q_gain, a.k_gain, CFG.heads, positions, CFG.rope_base
    )
    p = weights.projector
    ref = naive_mlp(attended, p.w1, p.b1, p.w2, p.b2)
    assert np.allclose(ours, ref, atol=1e-10)


def test_weight_file_round_trip(tmp_path):
    rng = np.random.default_rng(13)
    weights = EncoderWeights.random(CFG, patch_len=10, hidden=20, out_dim=8, rng=rng)
    path = tmp_path / "enc.vtk"
    save_weights(str(path), CFG, weights)
    cfg2, loaded = load_weights(str(path))
    assert cfg2 == CFG
    # float32 storage precision
    assert np.allclose(loaded.patch_weight, weights.patch_weight, atol=1e-6)
    assert np.allclose(loaded.attention.wq, weights.attention.wq, atol=1e-6)
    assert np.allclose(loaded.projector.b2, weights.projector.b2, atol=1e-6)
    patches = rng.standard_normal((4, 10))
    positions = np.array([(0, 0), (0, 1), (1, 0), (1, 1)])
    out_orig = full_forward(patches, weights, positions, CFG)
    out_loaded = full_forward(patches, loaded, positions, CFG)
    assert np.allclose(out_orig, out_loaded, atol=1e-4)


def test_weight_file_rejects_garbage(tmp_path):
    path = tmp_path / "bad.vtk"
    path.write_bytes(b"not a weight file")
    with pytest.raises(ValueError):
        load_weights(str(path))
