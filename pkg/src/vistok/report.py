"""Figure rendering for pipeline outputs.

Each CLI stage can drop PNG figures next to its line-delimited records
via ``--figures DIR``. Rendering is deterministic: the Agg backend,
fixed figure geometry, and pinned PNG metadata keep bytes identical
across runs with the same inputs and environment.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_PNG_METADATA = {"Software": "vistok"}
_KEY_COLOR = "#d1495b"
_INTER_COLOR = "#30638e"


def _save(fig, path: Path) -> None:
    fig.savefig(path, dpi=110, metadata=_PNG_METADATA)
    plt.close(fig)


def plan_figure(record: dict, path: Path) -> None:
    """Per-frame token allocation for one planned video."""
    frames = record["frames"]
    tokens = [f["tokens"] for f in frames]
    colors = [_KEY_COLOR if f["class"] == "key" else _INTER_COLOR for f in frames]
    fig, ax = plt.subplots(figsize=(8, 3))
    ax.bar(range(len(frames)), tokens, color=colors, width=0.9)
    ax.set_xlabel("frame index")
    ax.set_ylabel("tokens")
    ax.set_title(
        f"{record['id']}: stage {record['stage']}, "
        f"{record['total_tokens']} tokens, alpha={record['alpha']:.3f}"
    )
    fig.tight_layout()
    _save(fig, path)


def plan_summary_figure(records: Sequence[dict], path: Path) -> None:
    """Stage counts and total-token distribution over a batch of plans."""
    stages = [r["stage"] for r in records]
    totals = [r["total_tokens"] for r in records]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.2))
    counts = [stages.count(s) for s in (1, 2, 3)]
    ax1.bar(["stage 1", "stage 2", "stage 3"], counts, color="#575a5e")
    ax1.set_ylabel("videos")
    ax1.set_title("compression stage reached")
    if totals:
        ax2.hist(totals, bins=min(20, max(3, len(set(totals)))), color="#30638e")
    ax2.set_xlabel("total visual tokens")
    ax2.set_ylabel("videos")
    ax2.set_title("budget usage")
    fig.tight_layout()
    _save(fig, path)


def curation_figure(
    vectors: np.ndarray, ids: Sequence[str], selected: Sequence[str], path: Path
) -> None:
    """2-D projection of the embeddings with the selected items marked."""
    centered = vectors - vectors.mean(axis=0)
    if vectors.shape[1] > 2:
        _, _, vt = np.linalg.svd(centered, full_matrices=False)
        proj = centered @ vt[:2].T
    elif vectors.shape[1] == 2:
        proj = centered
    else:
        proj = np.column_stack([centered[:, 0], np.zeros(len(centered))])
    chosen = set(selected)
    mask = np.array([i in chosen for i in ids])
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.scatter(proj[~mask, 0], proj[~mask, 1], s=12, c="#b8b8b8", label="dropped")
    ax.scatter(proj[mask, 0], proj[mask, 1], s=22, c=_KEY_COLOR, label="selected")
    ax.legend(loc="best")
    ax.set_title(f"diversity selection: {mask.sum()}/{len(ids)} kept")
    fig.tight_layout()
    _save(fig, path)


def check_figure(entries: Sequence[dict], path: Path) -> None:
    """Observed numeric errors against their tolerances, log scale."""
    names = [e["name"] for e in entries]
    observed = [max(e["max_error"], 1e-18) for e in entries]
    tolerance = [e["tolerance"] for e in entries]
    y = np.arange(len(names))
    fig, ax = plt.subplots(figsize=(7, 0.5 * len(names) + 1.5))
    ax.barh(y, observed, color="#30638e", height=0.6, label="observed")
    ax.scatter(tolerance, y, marker="|", s=300, c=_KEY_COLOR, label="tolerance")
    ax.set_yticks(y, names)
    ax.set_xscale("log")
    ax.set_xlabel("max error")
    ax.invert_yaxis()
    ax.legend(loc="lower right")
    fig.tight_layout()
    _save(fig, path)
