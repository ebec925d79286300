"""Independent loop-based reference implementations used as test oracles.

Deliberately unvectorized and written from the definitions (plain Python
loops, math.erf, explicit pair rotations) so they share no code path
with the library.
"""

from __future__ import annotations

import math

import numpy as np


def naive_affine(patches, weight, bias=None):
    n = len(patches)
    d = len(weight)
    out = np.zeros((n, d))
    for i in range(n):
        for r in range(d):
            acc = 0.0
            for c in range(len(patches[i])):
                acc += weight[r][c] * patches[i][c]
            if bias is not None:
                acc += bias[r]
            out[i, r] = acc
    return out


def naive_gelu(x: float) -> float:
    return 0.5 * x * (1.0 + math.erf(x / math.sqrt(2.0)))


def naive_mlp(x, w1, b1, w2, b2):
    hidden = naive_affine(x, w1, b1)
    for i in range(hidden.shape[0]):
        for j in range(hidden.shape[1]):
            hidden[i, j] = naive_gelu(hidden[i, j])
    return naive_affine(hidden, w2, b2)


def naive_rope_rotate(vec, row, col, heads, base):
    """Per-head 2D rotary rotation: first half row-driven, second half col."""
    dim = len(vec)
    head_dim = dim // heads
    d_axis = head_dim // 2
    out = np.array(vec, dtype=float)
    for h in range(heads):
        off = h * head_dim
        for axis, position in ((0, row), (1, col)):
            start = off + axis * d_axis
            for j in range(d_axis // 2):
                theta = base ** (-2.0 * j / d_axis)
                angle = position * theta
                a = vec[start + 2 * j]
                b = vec[start + 2 * j + 1]
                out[start + 2 * j] = a * math.cos(angle) - b * math.sin(angle)
                out[start + 2 * j + 1] = a * math.sin(angle) + b * math.cos(angle)
    return out


def naive_attention(x, wq, wk, wv, wo, q_gain, k_gain, heads, positions=None, base=10000.0, causal=False):
    """Full multi-head attention with QK normalization and optional RoPE."""
    n, dim = x.shape
    head_dim = dim // heads
    eps = 1e-12

    def project(w):
        return naive_affine(x, w)

    q, k, v = project(wq), project(wk), project(wv)

    def normalize(mat, gain):
        out = mat.copy()
        for i in range(n):
            for h in range(heads):
                seg = mat[i, h * head_dim : (h + 1) * head_dim]
                norm = math.sqrt(sum(float(s) * float(s) for s in seg))
                out[i, h * head_dim : (h + 1) * head_dim] = seg / max(norm, eps) * gain[h]
        return out

    q = normalize(q, q_gain)
    k = normalize(k, k_gain)
    if positions is not None:
        q = np.array([naive_rope_rotate(q[i], positions[i][0], positions[i][1], heads, base) for i in range(n)])
        k = np.array([naive_rope_rotate(k[i], positions[i][0], positions[i][1], heads, base) for i in range(n)])

    ctx = np.zeros((n, dim))
    for h in range(heads):
        sl = slice(h * head_dim, (h + 1) * head_dim)
        for i in range(n):
            scores = []
            for j in range(n):
                if causal and j > i:
                    scores.append(-math.inf)
                else:
                    scores.append(float(np.dot(q[i, sl], k[j, sl])) / math.sqrt(head_dim))
            top = max(scores)
            exp = [math.exp(s - top) for s in scores]
            z = sum(exp)
            for j in range(n):
                ctx[i, sl] += (exp[j] / z) * v[j, sl]
    return naive_affine(ctx, wo)


def brute_force_two_partition(points):
    """Optimal 2-cluster partition of <= 12 points by total inertia."""
    m = len(points)
    best = None
    best_cost = math.inf
    for bits in range(1, 2 ** (m - 1)):
        left = [i for i in range(m) if bits >> i & 1]
        right = [i for i in range(m) if not bits >> i & 1]
        cost = 0.0
        for group in (left, right):
            if not group:
                continue
            center = np.mean([points[i] for i in group], axis=0)
            cost += sum(float(np.sum((points[i] - center) ** 2)) for i in group)
        if cost < best_cost - 1e-12:
            best_cost = cost
            best = (sorted(left), sorted(right))
    return best, best_cost


def brute_force_best_second_pick(points, first):
    """Highest achievable distance to `first` (the max-min pair containing it)."""
    return max(
        float(np.linalg.norm(np.asarray(points[j]) - np.asarray(points[first])))
        for j in range(len(points))
        if j != first
    )


def brute_force_partition_inertia(points, labels):
    cost = 0.0
    for lab in set(labels):
        group = [p for p, l in zip(points, labels) if l == lab]
        center = np.mean(group, axis=0)
        cost += sum(float(np.sum((np.asarray(p) - center) ** 2)) for p in group)
    return cost


def all_partitions(items, k):
    """Every partition of `items` into at most k non-empty groups."""
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for partial in all_partitions(rest, k):
        for i in range(len(partial)):
            yield partial[:i] + [[first] + partial[i]] + partial[i + 1 :]
        if len(partial) < k:
            yield [[first]] + partial
