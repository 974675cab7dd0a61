"""Input perturbations: gap masks, joint drops, per-frame drops, Gaussian noise.

Masks are ``uint8`` arrays of the clip's shape; 0 marks a removed entry.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np

from .motion import N_JOINTS, N_ROWS
from .textio import parse_header, read_rows, write_atomic

GAP_SIGMA = 10.0
MU_START = 10
MU_STEP = 10
MU_EVERY = 5
MU_MAX = 120


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def curriculum_mu(epoch: int) -> int:
    """Mean gap length: 10 frames, +10 every 5 epochs, capped at 120."""
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    return min(MU_START + MU_STEP * (epoch // MU_EVERY), MU_MAX)


@dataclass(frozen=True)
class CurriculumState:
    epoch: int = 0
    sigma: float = GAP_SIGMA
    mu_max: int = MU_MAX

    @property
    def mu(self) -> int:
        return min(curriculum_mu(self.epoch), self.mu_max)


@dataclass(frozen=True)
class PerturbationSpec:
    kind: str
    gap_length: Optional[int] = None
    gap_start: Optional[int] = None
    joints: Tuple[int, ...] = ()
    p: float = 0.0
    sigma: float = 0.0

    def __post_init__(self):
        if self.kind not in ("gap", "joint_drop", "frame_drop", "gaussian"):
            raise ValueError(f"unknown perturbation kind {self.kind!r}")


def ones_mask(frames: int) -> np.ndarray:
    return np.ones((N_ROWS, frames), dtype=np.uint8)


def gap_mask(frames: int, start: int, length: int) -> np.ndarray:
    if start < 0 or length < 0 or start + length > frames:
        raise ValueError(f"gap [{start}, {start + length}) outside [0, {frames})")
    m = ones_mask(frames)
    m[:, start:start + length] = 0
    return m


def sample_gap_mask(frames: int, state=None, seed=None, *, mu: Optional[float] = None,
                    sigma: float = GAP_SIGMA, mu_max: int = MU_MAX,
                    length: Optional[int] = None, start: Optional[int] = None):
    """Draw a column gap: length ~ round(N(mu, sigma^2)) clamped to [1, min(mu_max, T-1)], start ~ U{0..T-len}.

    ``state`` is a :class:`CurriculumState` (or pass ``mu``). ``length`` and
    ``start`` force the draw. Returns ``(mask, length, start)``.
    """
    if frames <= 1:
        raise ValueError(f"need more than one frame to place a gap, got {frames}")
    rng = _rng(seed)
    if state is not None:
        mu, sigma, mu_max = state.mu, state.sigma, state.mu_max
    if length is None:
        if mu is None:
            raise ValueError("need a curriculum state, a mean gap length or a forced length")
        length = int(np.rint(rng.normal(mu, sigma)))
        length = int(np.clip(length, 1, min(mu_max, frames - 1)))
    if start is None:
        start = int(rng.integers(0, frames - length + 1))
    return gap_mask(frames, start, length), length, start


def joint_drop_mask(frames: int, joints: Sequence[int]) -> np.ndarray:
    m = ones_mask(frames)
    for j in joints:
        if not 0 <= j < N_JOINTS:
            raise ValueError(f"joint index {j} outside [0, {N_JOINTS})")
        m[3 * j:3 * j + 3] = 0
    return m


def sample_joint_drop_mask(frames: int, seed=None, return_joints: bool = False):
    """Remove 1, 2 or 3 distinct joints over the whole clip; velocity rows are kept."""
    rng = _rng(seed)
    k = int(rng.integers(1, 4))
    joints = tuple(int(j) for j in rng.choice(N_JOINTS, size=k, replace=False))
    m = joint_drop_mask(frames, joints)
    return (m, joints) if return_joints else m


def sample_frame_drop_mask(frames: int, p: float, seed=None) -> np.ndarray:
    """Independently drop each joint in each frame with probability ``p``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"drop probability must lie in [0, 1], got {p}")
    rng = _rng(seed)
    drop = rng.random((N_JOINTS, frames)) < p
    m = ones_mask(frames)
    m[:3 * N_JOINTS] = np.repeat(~drop, 3, axis=0)
    return m


def add_gaussian_noise(clip: np.ndarray, sigma: float, seed=None) -> np.ndarray:
    """Add N(0, sigma^2) to the joint rows of a normalized clip."""
    if sigma < 0:
        raise ValueError(f"noise level must be >= 0, got {sigma}")
    out = np.array(clip, copy=True)
    if sigma == 0:
        return out
    rng = _rng(seed)
    n = 3 * N_JOINTS
    out[:n] = out[:n] + rng.normal(0.0, sigma, size=out[:n].shape).astype(out.dtype)
    return out


def apply_mask(clip: np.ndarray, mask: np.ndarray) -> np.ndarray:
    clip = np.asarray(clip)
    if clip.shape != mask.shape:
        raise ValueError(f"mask shape {mask.shape} does not match clip shape {clip.shape}")
    return clip * mask.astype(clip.dtype, copy=False)


def save_mask(mask: np.ndarray, path) -> None:
    lines = [f"#mofill-mask v1 joints={N_JOINTS} frames={mask.shape[1]}"]
    lines += [",".join(str(int(v)) for v in col) for col in mask.T]
    write_atomic(Path(path), "\n".join(lines) + "\n")


def load_mask(path) -> np.ndarray:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ValueError(f"{path}: empty mask file")
    parse_header(lines[0], "#mofill-mask")
    data = read_rows(lines[1:], N_ROWS, str(path))
    if not np.isin(data, (0.0, 1.0)).all():
        raise ValueError(f"{path}: mask values must be 0 or 1")
    return data.T.astype(np.uint8)
