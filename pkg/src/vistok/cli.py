"""Batch command-line frontend.

Subcommands compose the library into reproducible pipeline runs over
line-delimited record streams:

  sample   video metadata -> sampled, classified frames
  plan     video metadata -> per-frame token budgets (the cascade)
  pack     budget plans + prompts -> serialized token sequences
  check    numeric self-verification of the encoder kernel and losses
  curate   embedding matrix -> selected-id manifest

Outputs are deterministic for identical (inputs, config, seed): records
are compact JSON with sorted keys or fixed-grammar sequence records, and
figures are rendered with pinned settings. Exit codes: 0 success, 1
validation failure, 2 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import budget, curation, encoder, losses, report, sequence
from .config import ConfigError, PipelineConfig, load_config
from .geometry import PixelSize
from .sampler import FrameClass, SampledFrame, SamplerConfig, VideoMeta, sample_fixed_fps, sample_tra_codec

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2

_MAX_PER_VIDEO_FIGURES = 16


class RecordError(ValueError):
    """An invalid input record; message names the offending record."""


def _dump(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _write_lines(path: Optional[str], lines: list[str]) -> None:
    text = "".join(line + "\n" for line in lines)
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


# --- metadata ---------------------------------------------------------------


def _read_metadata(path: str) -> list[dict]:
    raw = Path(path).read_text(encoding="utf-8")
    records = []
    for lineno, line in enumerate(raw.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise RecordError(f"metadata record {lineno}: invalid JSON ({exc})") from exc
        if not isinstance(obj, dict):
            raise RecordError(f"metadata record {lineno}: expected an object")
        obj.setdefault("id", f"video{lineno}")
        records.append(obj)
    return records


def _video_meta(rec: dict, lineno: int) -> VideoMeta:
    label = f"metadata record {lineno} (id={rec.get('id')!r})"
    try:
        duration = float(rec["duration"])
        size = PixelSize(int(rec["width"]), int(rec["height"]))
        iframes = rec.get("iframe_times")
        return VideoMeta(
            duration=duration,
            native_size=size,
            iframe_times=tuple(float(t) for t in iframes) if iframes is not None else None,
        )
    except KeyError as exc:
        raise RecordError(f"{label}: missing field {exc.args[0]!r}") from exc
    except (TypeError, ValueError) as exc:
        raise RecordError(f"{label}: {exc}") from exc


def _sample_video(meta: VideoMeta, rec: dict, cfg: PipelineConfig, codec: bool) -> list[SampledFrame]:
    sampler_cfg = SamplerConfig(fps=cfg.fps, max_frames=cfg.max_frames, key_threshold=cfg.key_threshold)
    if codec:
        if meta.iframe_times is None:
            raise RecordError(f"metadata record (id={rec.get('id')!r}): codec mode needs iframe_times")
        return sample_tra_codec(meta, sampler_cfg)
    times = sample_fixed_fps(meta, sampler_cfg)
    key_times = [float(t) for t in rec.get("key_times", [])]
    half_gap = 0.5 / cfg.fps
    frames = []
    for i, t in enumerate(times):
        is_key = i == 0 or any(abs(t - kt) <= half_gap for kt in key_times)
        frames.append(SampledFrame(t, FrameClass.KEY if is_key else FrameClass.INTERMEDIATE))
    return frames


# --- subcommands ------------------------------------------------------------


def cmd_sample(args) -> int:
    cfg = _load_cfg(args)
    lines = []
    for lineno, rec in enumerate(_read_metadata(args.metadata), start=1):
        meta = _video_meta(rec, lineno)
        frames = _sample_video(meta, rec, cfg, args.codec)
        lines.append(
            _dump(
                {
                    "id": rec["id"],
                    "frames": [{"t": f.timestamp, "class": f.frame_class.value} for f in frames],
                }
            )
        )
    _write_lines(args.out, lines)
    return EXIT_OK


def _plan_record(rec: dict, lineno: int, cfg: PipelineConfig, codec: bool) -> dict:
    meta = _video_meta(rec, lineno)
    frames = _sample_video(meta, rec, cfg, codec)
    inputs = [
        budget.FramePlanInput(f.frame_class, budget.native_tokens(meta.native_size, cfg.patch_size, f.frame_class))
        for f in frames
    ]
    bcfg = budget.BudgetConfig(t_max=cfg.t_max, t_min=cfg.t_min, ratio=cfg.ratio)
    try:
        plan = budget.plan_budget(inputs, bcfg)
    except ValueError as exc:
        raise RecordError(f"metadata record {lineno} (id={rec['id']!r}): {exc}") from exc
    return {
        "id": rec["id"],
        "stage": plan.stage,
        "alpha": plan.alpha,
        "total_tokens": plan.total_tokens(),
        "frames": [
            {
                "t": f.timestamp,
                "class": f.frame_class.value,
                "native": inp.native_tokens,
                "tokens": tokens,
            }
            for f, inp, tokens in zip(frames, inputs, plan.per_frame_tokens)
        ],
    }


def cmd_plan(args) -> int:
    cfg = _load_cfg(args)
    records = [
        _plan_record(rec, lineno, cfg, args.codec)
        for lineno, rec in enumerate(_read_metadata(args.metadata), start=1)
    ]
    _write_lines(args.out, [_dump(r) for r in records])
    if args.figures:
        outdir = Path(args.figures)
        outdir.mkdir(parents=True, exist_ok=True)
        for i, rec in enumerate(records[:_MAX_PER_VIDEO_FIGURES]):
            name = re.sub(r"[^A-Za-z0-9_.-]", "_", str(rec["id"]))
            report.plan_figure(rec, outdir / f"plan_{i:04d}_{name}.png")
        report.plan_summary_figure(records, outdir / "plan_summary.png")
    return EXIT_OK


def cmd_pack(args) -> int:
    cfg = _load_cfg(args)
    plan_lines = [l for l in Path(args.plans).read_text(encoding="utf-8").splitlines() if l.strip()]
    texts = Path(args.text).read_text(encoding="utf-8").splitlines() if args.text else []

    record_lines = []
    display_parts = []
    failures = []
    for i, line in enumerate(plan_lines):
        label = f"plan record {i + 1}"
        try:
            rec = json.loads(line)
            label = f"plan record {i + 1} (id={rec.get('id')!r})"
            frames = [sequence.FrameBlock(f["t"], f["tokens"]) for f in rec["frames"]]
            text = texts[i] if i < len(texts) else ""
            seq = sequence.TokenSequence.build(
                list(frames) + [sequence.TextSpan(text)],
                visual_limit=cfg.t_max,
                total_limit=cfg.context_limit,
            )
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            failures.append(f"{label}: malformed plan ({exc})")
            continue
        except sequence.SequenceError as exc:
            failures.append(f"{label}: {exc}")
            continue
        record_lines.append(seq.record())
        display_parts.append(seq.display())

    _write_lines(args.out, record_lines)
    if args.out is not None:
        display_path = Path(args.out).with_suffix(Path(args.out).suffix + ".display")
        display_path.write_text("".join(p + "\n" for p in display_parts), encoding="utf-8")
    for message in failures:
        print(message, file=sys.stderr)
    return EXIT_VALIDATION if failures else EXIT_OK


# --- check ------------------------------------------------------------------


def _check_entries(dim: int, heads: int, trials: int, seed: int, corrupt: bool) -> list[dict]:
    cfg = encoder.AttentionConfig(dim=dim, heads=heads)
    rng = np.random.default_rng(seed)
    entries: list[dict] = []
    if trials < 1:
        return entries

    def add(name: str, observed: float, tolerance: float, minimum: bool = False) -> None:
        ok = observed >= tolerance if minimum else observed <= tolerance
        entries.append(
            {"name": name, "max_error": float(observed), "tolerance": tolerance, "ok": bool(ok), "minimum": minimum}
        )

    # RoPE isometry and relative-offset identity.
    iso_err = 0.0
    rel_err = 0.0
    for _ in range(trials):
        vec = rng.standard_normal(dim)
        pos = encoder.TokenPos2D(int(rng.integers(0, 64)), int(rng.integers(0, 64)))
        rotated = encoder.rope2d_rotate(vec, pos, cfg)
        iso_err = max(iso_err, abs(np.linalg.norm(rotated) - np.linalg.norm(vec)))

        q, k = rng.standard_normal(dim), rng.standard_normal(dim)
        p1 = rng.integers(0, 48, size=2)
        p2 = rng.integers(0, 48, size=2)
        delta = rng.integers(0, 16, size=2)
        base = np.dot(
            encoder.rope2d_apply(q[None, :], p1[None, :], cfg)[0],
            encoder.rope2d_apply(k[None, :], p2[None, :], cfg)[0],
        )
        shifted = np.dot(
            encoder.rope2d_apply(q[None, :], (p1 + delta)[None, :], cfg)[0],
            encoder.rope2d_apply(k[None, :], (p2 + delta)[None, :], cfg)[0],
        )
        rel_err = max(rel_err, abs(base - shifted))
    add("rope rotation isometry", iso_err, 1e-12)
    add("rope relative-offset identity", rel_err, 1e-9)

    # Attention: softmax row sums, bidirectional witness, causal control.
    n_tokens = 8
    weights = encoder.AttentionWeights.random(cfg, rng)
    positions = np.stack([np.arange(n_tokens) // 4, np.arange(n_tokens) % 4], axis=1)
    row_err = 0.0
    min_signal = np.inf
    causal_leak = 0.0
    for _ in range(max(1, trials // 10) if trials else 0):
        x = rng.standard_normal((n_tokens, dim))
        out, attn = encoder.attend_bidirectional(x, weights, cfg, positions, return_attn=True)
        row_err = max(row_err, float(np.max(np.abs(attn.sum(axis=-1) - 1.0))))
        bumped = x.copy()
        bumped[-1] += rng.standard_normal(dim)
        out_b = encoder.attend_bidirectional(bumped, weights, cfg, positions)
        min_signal = min(min_signal, float(np.max(np.abs(out_b[0] - out[0]))))
        c0 = encoder.attend_bidirectional(x, weights, cfg, positions, causal=True)
        c1 = encoder.attend_bidirectional(bumped, weights, cfg, positions, causal=True)
        causal_leak = max(causal_leak, float(np.max(np.abs(c1[0] - c0[0]))))
    if trials:
        add("attention row sums", row_err, 1e-12)
        add("bidirectional response to last token", min_signal, 1e-6, minimum=True)
        add("causal-control leak", causal_leak, 0.0)

    # Loss gradients and invariants.
    loss_fns = {
        "amplitude": losses.amplitude_loss,
        "direction": losses.direction_loss,
        "relation": losses.relation_loss,
    }
    step = 1e-5
    for name, fn in loss_fns.items():
        checked = fn
        if corrupt:
            def checked(a, b, _fn=fn):  # deliberately broken gradients (test hook)
                val = _fn(a, b)
                return losses.LossValue(val.value, val.gradient + 1e-3)
        worst = 0.0
        for _ in range(trials):
            f_s = rng.standard_normal((8, 16))
            f_t = rng.standard_normal((8, 16))
            exclude = np.abs(f_s - f_t) <= 10 * step if name == "amplitude" else None
            worst = max(worst, losses.grad_check(checked, f_s, f_t, step, exclude=exclude))
        if trials:
            add(f"{name} loss gradient vs finite differences", worst, 1e-4)

    if trials:
        f = rng.standard_normal((8, 16))
        add("zero loss at identity (amplitude)", losses.amplitude_loss(f, f).value, 0.0)
        add("zero loss at identity (direction)", losses.direction_loss(f, f).value, 1e-12)
        add("zero loss at identity (relation)", losses.relation_loss(f, f).value, 0.0)

        scale_err = 0.0
        orth_err = 0.0
        gscale_err = 0.0
        base_pair = (rng.standard_normal((8, 16)), rng.standard_normal((8, 16)))
        base_dir = losses.direction_loss(*base_pair).value
        base_rel = losses.relation_loss(*base_pair).value
        for _ in range(trials):
            c = rng.uniform(0.1, 10.0, size=(8, 1))
            scale_err = max(scale_err, abs(losses.direction_loss(base_pair[0] * c, base_pair[1]).value - base_dir))
            q_mat, r = np.linalg.qr(rng.standard_normal((16, 16)))
            q_mat = q_mat * np.sign(np.diag(r))
            orth_err = max(orth_err, abs(losses.relation_loss(base_pair[0] @ q_mat, base_pair[1]).value - base_rel))
            s = float(rng.uniform(0.1, 10.0))
            gscale_err = max(gscale_err, abs(losses.relation_loss(base_pair[0] * s, base_pair[1]).value - base_rel))
        add("direction loss per-token scale invariance", scale_err, 1e-10)
        add("relation loss orthogonal invariance", orth_err, 1e-10)
        add("relation loss global scale invariance", gscale_err, 1e-10)

    return entries


def cmd_check(args) -> int:
    entries = _check_entries(args.dim, args.heads, args.trials, args.seed, args.corrupt_gradients)
    for e in entries:
        relation = ">=" if e["minimum"] else "<="
        status = "PASS" if e["ok"] else "FAIL"
        print(f"{status} {e['name']}: {e['max_error']:.3e} ({relation} {e['tolerance']:.1e})")
    if args.figures and entries:
        outdir = Path(args.figures)
        outdir.mkdir(parents=True, exist_ok=True)
        report.check_figure(entries, outdir / "check.png")
    return EXIT_OK if all(e["ok"] for e in entries) else EXIT_VALIDATION


def cmd_curate(args) -> int:
    cfg = _load_cfg(args)
    emb = curation.load_embedding_set(args.embeddings, args.ids)
    k = min(cfg.k_per_level, emb.size)
    tree = curation.kmeans_hierarchical(
        emb, k_per_level=k, depth=cfg.depth, sample_fraction=cfg.sample_fraction, seed=cfg.seed
    )
    selected: list[str] = []
    index = {item: i for i, item in enumerate(emb.ids)}
    for leaf in tree.leaves():
        members = np.array([index[i] for i in leaf.member_ids])
        leaf_set = emb.subset(members)
        selected.extend(
            curation.greedy_diverse_select(leaf_set, min(cfg.select_per_cluster, leaf_set.size))
        )
    _write_lines(args.out, selected)
    if args.figures:
        outdir = Path(args.figures)
        outdir.mkdir(parents=True, exist_ok=True)
        report.curation_figure(emb.vectors, emb.ids, selected, outdir / "curation.png")
    return EXIT_OK


# --- entry point ------------------------------------------------------------


def _load_cfg(args) -> PipelineConfig:
    cfg = load_config(getattr(args, "config", None))
    seed = getattr(args, "seed", None)
    if seed is not None:
        cfg = PipelineConfig(**{**cfg.__dict__, "seed": seed})
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vistok", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *, config=True, out=True, seed=True, figures=False):
        if config:
            p.add_argument("--config", help="key=value config file (defaults when omitted)")
        if out:
            p.add_argument("--out", help="output file (stdout when omitted)")
        if seed:
            p.add_argument("--seed", type=int, default=None, help="override the config seed")
        if figures:
            p.add_argument("--figures", help="directory for PNG figures")

    p = sub.add_parser("sample", help="sample and classify frames from video metadata")
    p.add_argument("--metadata", required=True, help="JSON-lines video metadata")
    p.add_argument("--codec", action="store_true", help="key frames from container I-frames")
    common(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("plan", help="assign per-frame token budgets")
    p.add_argument("--metadata", required=True, help="JSON-lines video metadata")
    p.add_argument("--codec", action="store_true", help="key frames from container I-frames")
    common(p, figures=True)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("pack", help="serialize budget plans into token sequences")
    p.add_argument("--plans", required=True, help="plan records from `vistok plan`")
    p.add_argument("--text", required=True, help="one prompt per line, aligned with plans")
    common(p)
    p.set_defaults(func=cmd_pack)

    p = sub.add_parser("check", help="run numeric invariant and gradient checks")
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--figures", help="directory for PNG figures")
    p.add_argument("--corrupt-gradients", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("curate", help="cluster embeddings and select diverse items")
    p.add_argument("--embeddings", required=True, help="binary embedding matrix file")
    p.add_argument("--ids", help="id manifest, one id per line")
    common(p, figures=True)
    p.set_defaults(func=cmd_curate)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, RecordError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
