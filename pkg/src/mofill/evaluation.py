"""Joint-error metrics, bone-length statistics, gap/context sweeps and timing."""
from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .model import ModelWeights
from .model import forward as model_forward
from .motion import JOINT_ROWS, N_JOINTS, SKELETON, NormStats, PoseClip, SkeletonSpec, bone_lengths, to_global_positions
from .tasks import Gap, infill, validate_gaps


@dataclass
class ErrorReport:
    mean: float
    std: float
    frames: int
    scope: str = "full"
    alignment: str = "root_aligned"
    per_term: np.ndarray = field(default=None, repr=False)

    @classmethod
    def pooled(cls, reports: Sequence["ErrorReport"]) -> "ErrorReport":
        terms = np.concatenate([r.per_term for r in reports])
        return cls(float(terms.mean()), float(terms.std()), sum(r.frames for r in reports),
                   reports[0].scope, reports[0].alignment, terms)


def _frame_selection(frames: int, scope: str, gaps: Optional[Sequence[Gap]]) -> np.ndarray:
    if scope == "full":
        return np.ones(frames, dtype=bool)
    if scope != "gap_only":
        raise ValueError(f"scope must be 'full' or 'gap_only', got {scope!r}")
    if not gaps:
        raise ValueError("gap_only scope needs at least one gap")
    sel = np.zeros(frames, dtype=bool)
    for s, n in validate_gaps(gaps, frames):
        sel[s:s + n] = True
    return sel


def joint_error(pred: PoseClip, truth: PoseClip, scope: str = "full",
                gaps: Optional[Sequence[Gap]] = None, alignment: str = "root_aligned") -> ErrorReport:
    """Per-joint Euclidean error in cm pooled over the selected frames and all 22 joints.

    ``root_aligned`` compares the root-relative rows directly; ``global``
    first integrates the root trajectory of each clip.
    """
    pf, tf = pred.features, truth.features
    if pf.shape != tf.shape:
        raise ValueError(f"prediction shape {pf.shape} != ground truth shape {tf.shape}")
    sel = _frame_selection(pf.shape[1], scope, gaps)
    if alignment == "root_aligned":
        a = pf[JOINT_ROWS].reshape(N_JOINTS, 3, -1)
        b = tf[JOINT_ROWS].reshape(N_JOINTS, 3, -1)
        d = np.linalg.norm(a - b, axis=1)
    elif alignment == "global":
        d = np.linalg.norm(to_global_positions(pf) - to_global_positions(tf), axis=2)
    else:
        raise ValueError(f"alignment must be 'root_aligned' or 'global', got {alignment!r}")
    terms = d[:, sel].T.reshape(-1)
    return ErrorReport(float(terms.mean()), float(terms.std()), int(sel.sum()), scope, alignment, terms)


def centered_gap(frames: int, length: int) -> Gap:
    if not 0 <= length < frames:
        raise ValueError(f"gap length {length} must lie in [0, {frames})")
    return ((frames - length) // 2, length)


@dataclass
class BoneReport:
    parent: str
    child: str
    rig_length: float
    median: float
    q1: float
    q3: float
    min: float
    max: float

    @property
    def iqr(self) -> float:
        return self.q3 - self.q1


def bone_length_stats(clips: Iterable[PoseClip], skeleton: SkeletonSpec = SKELETON) -> List[BoneReport]:
    lengths = np.concatenate([bone_lengths(c, skeleton) for c in clips], axis=1)
    rig = skeleton.bone_lengths
    out = []
    for k, (p, c) in enumerate(skeleton.edges):
        q1, med, q3 = np.percentile(lengths[k], [25, 50, 75])
        out.append(BoneReport(skeleton.names[p], skeleton.names[c], float(rig[k]), float(med), float(q1),
                              float(q3), float(lengths[k].min()), float(lengths[k].max())))
    return out


@dataclass
class SweepRow:
    setting: int
    report: ErrorReport


def sweep_gaps(weights, clips: Sequence[PoseClip], stats: NormStats,
               sizes: Sequence[int] = (5, 20, 80, 250)) -> List[SweepRow]:
    """One centered gap per size per clip; gap-only errors pooled over clips (size 0 = reconstruction)."""
    rows = []
    for g in sizes:
        reps = []
        for c in clips:
            if g and g + 2 > c.frames:
                raise ValueError(f"clip of {c.frames} frames too short for a {g}-frame gap with context")
            gaps = [centered_gap(c.frames, g)] if g else []
            reps.append(joint_error(infill(c, gaps, weights, stats), c, "gap_only" if g else "full", gaps))
        rows.append(SweepRow(g, ErrorReport.pooled(reps)))
    return rows


def sweep_context(weights, clips: Sequence[PoseClip], stats: NormStats,
                  contexts: Sequence[int] = (1, 5, 10, 25, 50), gap: int = 80) -> List[SweepRow]:
    """Crop each clip to ``context + gap + context`` frames around a centered gap, then infill."""
    rows = []
    for ctx in contexts:
        reps = []
        for c in clips:
            total = 2 * ctx + gap
            if total > c.frames:
                raise ValueError(f"clip of {c.frames} frames too short for context {ctx} and gap {gap}")
            s0 = (c.frames - total) // 2
            sub = c.with_features(c.features[:, s0:s0 + total].copy())
            gaps = [(ctx, gap)]
            reps.append(joint_error(infill(sub, gaps, weights, stats), sub, "gap_only", gaps))
        rows.append(SweepRow(ctx, ErrorReport.pooled(reps)))
    return rows


def benchmark_inference(weights: ModelWeights, lengths: Sequence[int] = (240, 480, 1927),
                        runs: int = 5, seed: int = 0) -> List[Tuple[int, float, float]]:
    """Median wall time of one forward pass per length: ``(T, total_ms, ms_per_frame)``.

    A warm-up pass per length is discarded.
    """
    rng = np.random.default_rng(seed)
    out = []
    for t in lengths:
        x = rng.standard_normal((weights.config.input_rows, t)).astype(np.float32)
        model_forward(x, weights)
        times = []
        for _ in range(max(runs, 1)):
            t0 = time.perf_counter()
            model_forward(x, weights)
            times.append(time.perf_counter() - t0)
        total = float(np.median(times)) * 1e3
        out.append((t, total, total / t))
    return out


def to_csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    return buf.getvalue()


def sweep_csv(rows: Sequence[SweepRow], label: str) -> str:
    return to_csv([label, "mean_cm", "std_cm", "frames"],
                  [(r.setting, r.report.mean, r.report.std, r.report.frames) for r in rows])
