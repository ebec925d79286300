"""Embedding-space corpus curation: clustering, diversity selection,
motion filtering, and duration-aware resampling.

Clustering is seeded k-means (k-means++ initialization, Lloyd updates,
deterministic empty-cluster repair) with a hierarchical variant that
fits centroids on a sampled subset and recurses inside each cluster,
keeping full-corpus clustering tractable. Within a cluster, a greedy
farthest-point pass picks items maximally spread in embedding space.
All operations are deterministic functions of (input, seed).

Distances are Euclidean throughout. Embeddings are ingested from a flat
binary matrix file (little-endian: uint32 M, uint32 D, then M*D float32
values row-major) plus a plain-text id manifest, one id per line.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

Seed = Union[int, Sequence[int]]


@dataclass(frozen=True)
class EmbeddingSet:
    vectors: np.ndarray
    ids: tuple[str, ...]

    def __post_init__(self) -> None:
        vectors = np.asarray(self.vectors, dtype=float)
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "ids", tuple(self.ids))
        if vectors.ndim != 2 or vectors.shape[0] < 1:
            raise ValueError(f"vectors must be a non-empty 2-D matrix, got shape {vectors.shape}")
        if not np.all(np.isfinite(vectors)):
            raise ValueError("vectors contain non-finite values")
        if len(self.ids) != vectors.shape[0]:
            raise ValueError(f"{len(self.ids)} ids for {vectors.shape[0]} vectors")

    @classmethod
    def from_vectors(cls, vectors: np.ndarray) -> "EmbeddingSet":
        vectors = np.asarray(vectors, dtype=float)
        return cls(vectors, tuple(str(i) for i in range(vectors.shape[0])))

    @property
    def size(self) -> int:
        return self.vectors.shape[0]

    def subset(self, indices: np.ndarray) -> "EmbeddingSet":
        return EmbeddingSet(self.vectors[indices], tuple(self.ids[i] for i in indices))


@dataclass(frozen=True)
class KMeansResult:
    labels: np.ndarray
    centroids: np.ndarray
    inertia_history: tuple[float, ...]

    @property
    def inertia(self) -> float:
        return self.inertia_history[-1]


@dataclass
class ClusterNode:
    """One node of the hierarchical clustering tree.

    ``centroid`` is the centroid this node's members were nearest to
    among its siblings; leaf members across the tree partition the
    input ids.
    """

    centroid: np.ndarray
    member_ids: tuple[str, ...]
    children: list["ClusterNode"] = field(default_factory=list)

    def leaves(self) -> list["ClusterNode"]:
        if not self.children:
            return [self]
        out = []
        for child in self.children:
            out.extend(child.leaves())
        return out


def _sq_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # (M, k) squared Euclidean distances.
    diff = points[:, None, :] - centroids[None, :, :]
    return np.einsum("mkd,mkd->mk", diff, diff)


def _assign(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    return np.argmin(_sq_distances(points, centroids), axis=1)


def _init_plusplus(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding; degenerate zero-weight rounds fall back to the
    lowest-index point not yet chosen, keeping the init deterministic."""
    m = points.shape[0]
    chosen = [int(rng.integers(m))]
    d2 = np.sum((points - points[chosen[0]]) ** 2, axis=1)
    while len(chosen) < k:
        total = float(d2.sum())
        if total <= 0.0:
            remaining = [i for i in range(m) if i not in set(chosen)]
            chosen.append(remaining[0])
        else:
            chosen.append(int(rng.choice(m, p=d2 / total)))
        d2 = np.minimum(d2, np.sum((points - points[chosen[-1]]) ** 2, axis=1))
    return points[chosen].copy()


def kmeans(points: EmbeddingSet, k: int, seed: Seed = 0, iters: int = 50) -> KMeansResult:
    """Seeded Lloyd's algorithm with k-means++ initialization.

    Inertia is recorded once per iteration and is non-increasing. An
    empty cluster is repaired by moving its centroid onto the point
    currently farthest from its assigned centroid. The returned labels
    are the nearest-centroid assignment against the returned centroids.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if k > points.size:
        raise ValueError(f"k = {k} exceeds the number of points {points.size}")
    if iters < 1:
        raise ValueError(f"iters must be >= 1, got {iters}")

    data = points.vectors
    rng = np.random.default_rng(seed)
    centroids = _init_plusplus(data, k, rng)
    history: list[float] = []
    labels = np.zeros(points.size, dtype=int)

    for _ in range(iters):
        d2 = _sq_distances(data, centroids)
        new_labels = np.argmin(d2, axis=1)
        history.append(float(d2[np.arange(points.size), new_labels].sum()))
        converged = bool(np.array_equal(new_labels, labels)) and len(history) > 1
        labels = new_labels

        point_d2 = d2[np.arange(points.size), labels]
        order = np.argsort(-point_d2, kind="stable")  # farthest first, for repair
        next_far = 0
        for j in range(k):
            members = labels == j
            if members.any():
                centroids[j] = data[members].mean(axis=0)
            else:
                centroids[j] = data[order[next_far]]
                next_far += 1
        if converged:
            break

    labels = _assign(data, centroids)
    return KMeansResult(labels, centroids, tuple(history))


def kmeans_hierarchical(
    points: EmbeddingSet,
    k_per_level: int,
    depth: int,
    sample_fraction: float = 1.0,
    seed: int = 0,
    iters: int = 50,
) -> ClusterNode:
    """Recursive k-means: coarse centroids from a sampled subset, full
    assignment, then finer clustering inside each cluster up to ``depth``.

    With depth 1 and sample_fraction 1.0 this reduces exactly to flat
    ``kmeans`` under the same seed. Clusters smaller than ``k_per_level``
    stop recursing early. Leaf members always partition the input ids.
    """
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")
    if not 0.0 < sample_fraction <= 1.0:
        raise ValueError(f"sample_fraction must be in (0, 1], got {sample_fraction}")
    root = ClusterNode(points.vectors.mean(axis=0), points.ids)
    root.children = _split(points, k_per_level, depth, sample_fraction, seed, iters)
    return root


def _split(
    points: EmbeddingSet, k: int, depth: int, fraction: float, seed: Seed, iters: int
) -> list[ClusterNode]:
    if depth < 1 or points.size < k:
        return []
    m = points.size
    n_sub = min(m, max(k, int(round(fraction * m))))
    if n_sub == m:
        fit_set = points
    else:
        rng = np.random.default_rng(seed)
        idx = np.sort(rng.choice(m, size=n_sub, replace=False))
        fit_set = points.subset(idx)
    fit = kmeans(fit_set, k, seed=seed, iters=iters)
    labels = _assign(points.vectors, fit.centroids)

    children = []
    for j in range(k):
        members = np.flatnonzero(labels == j)
        if members.size == 0:
            continue
        child_set = points.subset(members)
        child = ClusterNode(fit.centroids[j].copy(), child_set.ids)
        child.children = _split(child_set, k, depth - 1, fraction, _child_seed(seed, j), iters)
        children.append(child)
    return children


def _child_seed(seed: Seed, branch: int) -> list[int]:
    # Deterministic per-branch seed stream for the recursion.
    base = list(seed) if isinstance(seed, (list, tuple)) else [int(seed)]
    return base + [branch]


def greedy_diverse_select(cluster: EmbeddingSet, n: int) -> list[str]:
    """Pick ``n`` maximally spread members of one cluster.

    The first pick is the point nearest the cluster centroid; every
    later pick maximizes its minimum distance to the points already
    selected (farthest-point traversal). Ties break toward the lowest
    index, so the result is deterministic.
    """
    if n < 0 or n > cluster.size:
        raise ValueError(f"n must be in [0, {cluster.size}], got {n}")
    if n == 0:
        return []
    data = cluster.vectors
    centroid = data.mean(axis=0)
    first = int(np.argmin(np.linalg.norm(data - centroid, axis=1)))
    picked = [first]
    min_dist = np.linalg.norm(data - data[first], axis=1)
    min_dist[first] = -np.inf
    while len(picked) < n:
        nxt = int(np.argmax(min_dist))
        picked.append(nxt)
        min_dist = np.minimum(min_dist, np.linalg.norm(data - data[nxt], axis=1))
        min_dist[nxt] = -np.inf
    return [cluster.ids[i] for i in picked]


def motion_score(thumbnails: Sequence[np.ndarray]) -> float:
    """Mean absolute luminance difference over consecutive frame pairs.

    A frame-difference proxy standing in for optical-flow motion
    estimation; swap this function to substitute a flow backend.
    """
    if len(thumbnails) < 2:
        raise ValueError("motion_score needs at least two frames")
    thumbs = [np.asarray(t, dtype=float) for t in thumbnails]
    diffs = [float(np.mean(np.abs(b - a))) for a, b in zip(thumbs, thumbs[1:])]
    return float(np.mean(diffs))


def motion_filter(thumbnails: Sequence[np.ndarray], threshold: float) -> bool:
    """True to keep the video. Videos with fewer than two frames carry
    no motion evidence and are discarded; a score exactly at the
    threshold is kept."""
    if len(thumbnails) < 2:
        return False
    return motion_score(thumbnails) >= threshold


def duration_aware_sample(
    durations: Sequence[float],
    buckets: int,
    per_bucket_quota: int,
    seed: int = 0,
    ids: Optional[Sequence[str]] = None,
) -> list[str]:
    """Resample videos for uniform coverage across duration buckets.

    Durations are binned into ``buckets`` equal-width bins over
    [min, max]; up to ``per_bucket_quota`` members are kept per bin by
    seeded uniform choice without replacement.
    """
    if buckets < 1:
        raise ValueError(f"buckets must be >= 1, got {buckets}")
    if per_bucket_quota < 0:
        raise ValueError(f"per_bucket_quota must be >= 0, got {per_bucket_quota}")
    if len(durations) == 0:
        return []
    if ids is None:
        ids = [str(i) for i in range(len(durations))]
    elif len(ids) != len(durations):
        raise ValueError(f"{len(ids)} ids for {len(durations)} durations")

    lo = min(durations)
    width = (max(durations) - lo) / buckets
    members: list[list[int]] = [[] for _ in range(buckets)]
    for i, d in enumerate(durations):
        b = 0 if width == 0.0 else min(buckets - 1, int(math.floor((d - lo) / width)))
        members[b].append(i)

    rng = np.random.default_rng(seed)
    out: list[str] = []
    for bucket in members:
        if len(bucket) <= per_bucket_quota:
            keep = bucket
        else:
            keep = sorted(rng.choice(len(bucket), size=per_bucket_quota, replace=False))
            keep = [bucket[i] for i in keep]
        out.extend(ids[i] for i in keep)
    return out


# --- embedding file I/O ------------------------------------------------------

_MATRIX_HEADER = struct.Struct("<II")


def save_embedding_matrix(path: str, vectors: np.ndarray) -> None:
    vectors = np.asarray(vectors)
    if vectors.ndim != 2:
        raise ValueError(f"matrix must be 2-D, got shape {vectors.shape}")
    with open(path, "wb") as fh:
        fh.write(_MATRIX_HEADER.pack(vectors.shape[0], vectors.shape[1]))
        fh.write(np.ascontiguousarray(vectors, dtype="<f4").tobytes())


def load_embedding_matrix(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.read(_MATRIX_HEADER.size)
        if len(header) != _MATRIX_HEADER.size:
            raise ValueError(f"{path}: truncated header")
        m, d = _MATRIX_HEADER.unpack(header)
        buf = fh.read(4 * m * d)
        if len(buf) != 4 * m * d:
            raise ValueError(f"{path}: expected {m}x{d} float32 values")
        if fh.read(1):
            raise ValueError(f"{path}: trailing bytes after matrix data")
    return np.frombuffer(buf, dtype="<f4").astype(float).reshape(m, d)


def save_ids(path: str, ids: Sequence[str]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for item in ids:
            fh.write(f"{item}\n")


def load_ids(path: str) -> tuple[str, ...]:
    with open(path, encoding="utf-8") as fh:
        return tuple(line.rstrip("\n") for line in fh if line.strip() != "")


def load_embedding_set(matrix_path: str, ids_path: Optional[str] = None) -> EmbeddingSet:
    vectors = load_embedding_matrix(matrix_path)
    if ids_path is None:
        return EmbeddingSet.from_vectors(vectors)
    ids = load_ids(ids_path)
    return EmbeddingSet(vectors, ids)
