"""Inference tasks built on a trained model, plus the non-learned baselines."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import masking
from .model import ModelWeights, vanilla_ae_config  # noqa: F401
from .model import forward as model_forward
from .motion import N_JOINTS, NormStats, PoseClip, denormalize, normalize

Gap = Tuple[int, int]
Model = Union[ModelWeights, Callable[[np.ndarray], np.ndarray]]

MIN_CONSTRAINT_FRAMES = 5


def validate_gaps(gaps: Sequence[Gap], frames: int) -> List[Gap]:
    """Sort ``(start, length)`` pairs and check they are disjoint and inside the clip."""
    out = sorted((int(s), int(n)) for s, n in gaps)
    prev_end = 0
    for s, n in out:
        if n < 1:
            raise ValueError(f"gap at frame {s} has non-positive length {n}")
        if s < 0 or s + n > frames:
            raise ValueError(f"gap {s}:{n} lies outside [0, {frames})")
        if s < prev_end:
            raise ValueError(f"gap {s}:{n} overlaps the previous gap ending at frame {prev_end}")
        prev_end = s + n
    return out


def gaps_mask(frames: int, gaps: Sequence[Gap]) -> np.ndarray:
    m = masking.ones_mask(frames)
    for s, n in gaps:
        m[:, s:s + n] = 0
    return m


def _run(model: Model, x: np.ndarray) -> np.ndarray:
    if isinstance(model, ModelWeights):
        return model_forward(x, model).astype(np.float64)
    return np.asarray(model(x), dtype=np.float64)


def _reconstruct(clip: PoseClip, x_in: np.ndarray, model: Model, stats: NormStats) -> PoseClip:
    return clip.with_features(denormalize(_run(model, x_in), stats))


def infill(clip: PoseClip, gaps: Sequence[Gap], model: Model, stats: NormStats,
           keep_known: bool = False) -> PoseClip:
    """Blank every gap (all 69 rows) and reconstruct the whole clip in one pass.

    By default the known frames are replaced by the model output too; with
    ``keep_known`` the original frames are spliced back outside the gaps.
    """
    gaps = validate_gaps(gaps, clip.frames)
    mask = gaps_mask(clip.frames, gaps)
    x_in = masking.apply_mask(normalize(clip.features, stats), mask)
    out = _reconstruct(clip, x_in, model, stats)
    if keep_known:
        keep = mask.astype(bool)
        f = out.features.copy()
        f[keep] = clip.features[keep]
        out = out.with_features(f)
    return out


def denoise(clip: PoseClip, perturbation: Optional[masking.PerturbationSpec], model: Model,
            stats: NormStats, seed=None) -> PoseClip:
    """Corrupt (``gaussian`` or ``frame_drop``) then reconstruct.

    ``perturbation=None`` treats ``clip`` as already corrupted.
    """
    x = normalize(clip.features, stats)
    if perturbation is not None:
        if perturbation.kind == "gaussian":
            x = masking.add_gaussian_noise(x, perturbation.sigma, seed)
        elif perturbation.kind == "frame_drop":
            x = masking.apply_mask(x, masking.sample_frame_drop_mask(clip.frames, perturbation.p, seed))
        else:
            raise ValueError(f"denoise handles gaussian or frame_drop perturbations, got {perturbation.kind!r}")
    return _reconstruct(clip, x, model, stats)


def recover_joints(clip: PoseClip, joints: Sequence[int], model: Model, stats: NormStats) -> PoseClip:
    if len(joints) > 3:
        raise ValueError(f"at most 3 joints can be recovered, got {len(joints)}")
    mask = masking.joint_drop_mask(clip.frames, joints)
    x_in = masking.apply_mask(normalize(clip.features, stats), mask)
    return _reconstruct(clip, x_in, model, stats)


@dataclass(frozen=True)
class BlendConstraint:
    """Joint trajectories copied from ``source`` into ``[start, start+length)`` of the target.

    ``source_start`` selects where the copied frames begin in the source clip.
    """

    joints: Tuple[int, ...]
    source: PoseClip
    start: int
    length: int
    source_start: int = 0

    def __post_init__(self):
        if not self.joints:
            raise ValueError("blend constraint needs at least one joint")
        if any(not 0 <= j < N_JOINTS for j in self.joints):
            raise ValueError(f"joint indices must lie in [0, {N_JOINTS}): {self.joints}")
        if self.source_start < 0 or self.source_start + self.length > self.source.frames:
            raise ValueError("constraint frames exceed the source clip")


def blend_tertiary(clip: PoseClip, gaps: Sequence[Gap], constraints: Sequence[BlendConstraint],
                   model: Model, stats: NormStats) -> PoseClip:
    """Infill with extra joint trajectories written into the gaps."""
    gaps = validate_gaps(gaps, clip.frames)
    mask = gaps_mask(clip.frames, gaps)
    x_in = masking.apply_mask(normalize(clip.features, stats), mask)
    for c in constraints:
        if c.length < MIN_CONSTRAINT_FRAMES:
            raise ValueError(f"constraint spans {c.length} frames; at least {MIN_CONSTRAINT_FRAMES} are needed")
        if not any(s <= c.start and c.start + c.length <= s + n for s, n in gaps):
            raise ValueError(f"constraint {c.start}:{c.length} is not inside any gap")
        src = normalize(c.source.features[:, c.source_start:c.source_start + c.length], stats)
        for j in c.joints:
            x_in[3 * j:3 * j + 3, c.start:c.start + c.length] = src[3 * j:3 * j + 3]
    return _reconstruct(clip, x_in, model, stats)


def linear_interp(clip: PoseClip, gaps: Sequence[Gap]) -> PoseClip:
    """Straight-line fill of every row between the frames bordering each gap."""
    gaps = validate_gaps(gaps, clip.frames)
    f = np.array(clip.features, dtype=np.float64, copy=True)
    for s, n in gaps:
        if s == 0 or s + n >= clip.frames:
            raise ValueError(f"gap {s}:{n} touches the clip boundary; no frame to interpolate from")
        a, b = f[:, s - 1], f[:, s + n]
        w = np.arange(1, n + 1) / (n + 1)
        f[:, s:s + n] = a[:, None] + (b - a)[:, None] * w[None, :]
    return clip.with_features(f)


def mean_fill(clip: PoseClip, mask: np.ndarray, stats: NormStats) -> PoseClip:
    """Baseline that leaves removed entries at the training mean."""
    x = masking.apply_mask(normalize(clip.features, stats), mask)
    return clip.with_features(denormalize(x, stats))
