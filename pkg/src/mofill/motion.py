"""Pose matrices, normalization, windowing, a synthetic rig and root trajectories.

A clip is a ``69 x T`` matrix. Rows ``3j .. 3j+2`` hold joint ``j``'s
root-relative ``(x, y, z)`` in centimeters (x forward, y up, z lateral),
row 66/67 the floor-plane root velocity expressed in the previous frame's
heading, and row 68 the heading change in radians.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .textio import fmt_row, parse_header, read_rows, write_atomic

N_JOINTS = 22
N_ROWS = 3 * N_JOINTS + 3
VEL_ROWS = (66, 67, 68)
JOINT_ROWS = slice(0, 3 * N_JOINTS)
DEFAULT_FPS = 60
CLIP_FRAMES = 240
STD_FLOOR = 1e-4

FAMILIES = ("walk", "run", "wave", "squat", "idle", "mixed")


@dataclass(frozen=True)
class SkeletonSpec:
    names: Tuple[str, ...]
    parents: Tuple[int, ...]
    offsets: np.ndarray = field(repr=False)  # (J, 3) rest offsets from parent, cm

    @property
    def edges(self) -> List[Tuple[int, int]]:
        return [(p, j) for j, p in enumerate(self.parents) if p >= 0]

    @property
    def bone_lengths(self) -> np.ndarray:
        return np.array([np.linalg.norm(self.offsets[j]) for _, j in self.edges])

    def index(self, name: str) -> int:
        return self.names.index(name)


def _default_skeleton() -> SkeletonSpec:
    joints = [
        ("hips", -1, (0, 0, 0)),
        ("spine", 0, (0, 10, 0)),
        ("spine1", 1, (0, 12, 0)),
        ("spine2", 2, (0, 12, 0)),
        ("neck", 3, (0, 14, 0)),
        ("head", 4, (2, 11, 0)),
        ("l_shoulder", 3, (0, 9, 5)),
        ("l_arm", 6, (0, 0, 13)),
        ("l_forearm", 7, (0, -28, 0)),
        ("l_hand", 8, (0, -25, 0)),
        ("r_shoulder", 3, (0, 9, -5)),
        ("r_arm", 10, (0, 0, -13)),
        ("r_forearm", 11, (0, -28, 0)),
        ("r_hand", 12, (0, -25, 0)),
        ("l_upleg", 0, (0, -6, 9)),
        ("l_leg", 14, (0, -42, 0)),
        ("l_foot", 15, (0, -41, 0)),
        ("l_toe", 16, (13, -6, 0)),
        ("r_upleg", 0, (0, -6, -9)),
        ("r_leg", 18, (0, -42, 0)),
        ("r_foot", 19, (0, -41, 0)),
        ("r_toe", 20, (13, -6, 0)),
    ]
    names, parents, offsets = zip(*joints)
    return SkeletonSpec(tuple(names), tuple(parents), np.array(offsets, dtype=np.float64))


SKELETON = _default_skeleton()
REST_HIP_HEIGHT = 95.0


@dataclass(frozen=True)
class PoseClip:
    features: np.ndarray
    fps: int = DEFAULT_FPS
    skeleton: SkeletonSpec = field(default=SKELETON, repr=False, compare=False)

    def __post_init__(self):
        f = np.asarray(self.features)
        if f.ndim != 2 or f.shape[0] != N_ROWS:
            raise ValueError(f"pose clip must be {N_ROWS} x T, got shape {f.shape}")
        object.__setattr__(self, "features", f)

    @property
    def frames(self) -> int:
        return self.features.shape[1]

    @property
    def joints(self) -> np.ndarray:
        """Root-relative positions as ``(22, 3, T)``."""
        return self.features[JOINT_ROWS].reshape(N_JOINTS, 3, -1)

    def with_features(self, features: np.ndarray) -> "PoseClip":
        return replace(self, features=features)


def _features(clip) -> np.ndarray:
    return clip.features if isinstance(clip, PoseClip) else np.asarray(clip)


def window_clips(sequence: PoseClip, window: int = CLIP_FRAMES, stride: int = 120) -> List[PoseClip]:
    """Overlapping fixed-length windows; a short tail is dropped."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    total = sequence.frames
    if total < window:
        return []
    return [sequence.with_features(sequence.features[:, s:s + window].copy())
            for s in range(0, total - window + 1, stride)]


# normalization ---------------------------------------------------------------

@dataclass(frozen=True)
class NormStats:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        for name in ("mean", "std"):
            v = np.asarray(getattr(self, name), dtype=np.float64)
            if v.shape != (N_ROWS,):
                raise ValueError(f"norm stats {name} must have {N_ROWS} entries, got shape {v.shape}")
            object.__setattr__(self, name, v)


def compute_norm_stats(clips: Sequence) -> NormStats:
    """Per-row mean/std over every frame of the training clips; tiny stds become 1."""
    data = np.concatenate([_features(c) for c in clips], axis=1).astype(np.float64)
    mean = data.mean(axis=1)
    std = data.std(axis=1)
    std[std < STD_FLOOR] = 1.0
    return NormStats(mean, std)


def normalize(clip, stats: NormStats):
    f = _features(clip)
    if f.shape[0] != stats.mean.shape[0]:
        raise ValueError(f"clip has {f.shape[0]} rows, stats have {stats.mean.shape[0]}")
    out = (f - stats.mean[:, None]) / stats.std[:, None]
    return clip.with_features(out) if isinstance(clip, PoseClip) else out


def denormalize(clip, stats: NormStats):
    f = _features(clip)
    if f.shape[0] != stats.mean.shape[0]:
        raise ValueError(f"clip has {f.shape[0]} rows, stats have {stats.mean.shape[0]}")
    out = f * stats.std[:, None] + stats.mean[:, None]
    return clip.with_features(out) if isinstance(clip, PoseClip) else out


# trajectories ----------------------------------------------------------------

def _rotate(theta, x, z):
    c, s = np.cos(theta), np.sin(theta)
    return c * x - s * z, s * x + c * z


def integrate_trajectory(clip) -> Tuple[np.ndarray, np.ndarray]:
    """Accumulate per-frame root velocities into ``(positions (T, 2), headings (T,))``.

    The start state (before frame 0) is the origin with heading 0. Frame
    ``t`` turns by ``gamma_t`` and steps by ``R(theta_{t-1}) @ v_t``.
    """
    f = _features(clip)
    vx, vz, gamma = f[66].astype(np.float64), f[67].astype(np.float64), f[68].astype(np.float64)
    theta = np.cumsum(gamma)
    prev = np.concatenate([[0.0], theta[:-1]])
    dx, dz = _rotate(prev, vx, vz)
    return np.stack([np.cumsum(dx), np.cumsum(dz)], axis=1), theta


def velocities_from_path(positions: np.ndarray, headings: np.ndarray) -> np.ndarray:
    """Inverse of :func:`integrate_trajectory`: the ``(3, T)`` velocity rows."""
    pos = np.vstack([[0.0, 0.0], positions])
    theta = np.concatenate([[0.0], headings])
    d = np.diff(pos, axis=0)
    vx, vz = _rotate(-theta[:-1], d[:, 0], d[:, 1])
    return np.stack([vx, vz, np.diff(theta)])


def to_global_positions(clip) -> np.ndarray:
    """World-space joints ``(22, T, 3)``: local offsets turned by the heading and moved with the root."""
    f = _features(clip)
    pos, theta = integrate_trajectory(f)
    j = f[JOINT_ROWS].reshape(N_JOINTS, 3, -1).astype(np.float64)
    gx, gz = _rotate(theta[None, :], j[:, 0], j[:, 2])
    out = np.stack([gx + pos[None, :, 0], j[:, 1], gz + pos[None, :, 1]], axis=-1)
    return out


# synthetic rig ---------------------------------------------------------------

def _rx(a):
    c, s = np.cos(a), np.sin(a)
    o, z = np.ones_like(a), np.zeros_like(a)
    return np.stack([np.stack([o, z, z], -1), np.stack([z, c, -s], -1), np.stack([z, s, c], -1)], -2)


def _ry(a):
    c, s = np.cos(a), np.sin(a)
    o, z = np.ones_like(a), np.zeros_like(a)
    return np.stack([np.stack([c, z, s], -1), np.stack([z, o, z], -1), np.stack([-s, z, c], -1)], -2)


def _rz(a):
    c, s = np.cos(a), np.sin(a)
    o, z = np.ones_like(a), np.zeros_like(a)
    return np.stack([np.stack([c, -s, z], -1), np.stack([s, c, z], -1), np.stack([z, z, o], -1)], -2)


def forward_kinematics(local_rot: Dict[int, np.ndarray], frames: int,
                       skeleton: SkeletonSpec = SKELETON) -> np.ndarray:
    """Joint positions ``(J, T, 3)`` with the root at the origin.

    ``local_rot`` maps joint index to a ``(T, 3, 3)`` rotation that turns
    that joint's children. Missing joints use the identity.
    """
    eye = np.broadcast_to(np.eye(3), (frames, 3, 3))
    glob = [None] * len(skeleton.names)
    pos = np.zeros((len(skeleton.names), frames, 3))
    for j, p in enumerate(skeleton.parents):
        local = local_rot.get(j, eye)
        if p < 0:
            glob[j] = local
            continue
        pos[j] = pos[p] + glob[p] @ skeleton.offsets[j]
        glob[j] = glob[p] @ local
    return pos


@dataclass
class _Motion:
    rot: Dict[int, np.ndarray]
    height: np.ndarray
    speed: np.ndarray
    lateral: np.ndarray
    turn: np.ndarray


def _gait(t, rng, freq, speed, hip_amp, knee_amp, arm_amp, elbow, bob, lean):
    S = SKELETON
    freq *= rng.uniform(0.9, 1.1)
    amp = rng.uniform(0.85, 1.15)
    ph = rng.uniform(0, 2 * np.pi)
    w = 2 * np.pi * freq * t + ph
    rot = {}
    for side, sgn in (("l", 1.0), ("r", -1.0)):
        phase = w if side == "l" else w + np.pi
        hip = amp * hip_amp * np.sin(phase)
        knee = amp * knee_amp * 0.5 * (1 - np.cos(phase - 0.9))
        rot[S.index(f"{side}_upleg")] = _rz(hip)
        rot[S.index(f"{side}_leg")] = _rz(-knee)
        rot[S.index(f"{side}_foot")] = _rz(0.3 * knee - 0.2 * hip)
        rot[S.index(f"{side}_arm")] = _rz(-amp * arm_amp * np.sin(phase)) @ _rx(np.full_like(t, sgn * 0.08))
        rot[S.index(f"{side}_forearm")] = _rz(elbow + 0.5 * amp * arm_amp * (1 - np.cos(phase)) * 0.5)
    rot[S.index("spine")] = _ry(0.08 * amp * np.sin(w)) @ _rz(np.full_like(t, -lean))
    rot[S.index("neck")] = _rz(np.full_like(t, 0.6 * lean))
    height = REST_HIP_HEIGHT - bob * 0.5 * (1 - np.cos(2 * w))
    base = speed * rng.uniform(0.85, 1.15)
    spd = base * (1 + 0.08 * np.sin(2 * w))
    lateral = 0.015 * base * np.sin(w)
    turn = np.full_like(t, rng.normal(0.0, 0.12))
    return _Motion(rot, height, spd, lateral, turn)


def _walk(t, rng):
    return _gait(t, rng, freq=0.9, speed=130.0, hip_amp=0.45, knee_amp=0.9, arm_amp=0.35,
                 elbow=0.25, bob=3.0, lean=0.05)


def _run(t, rng):
    return _gait(t, rng, freq=1.4, speed=320.0, hip_amp=0.75, knee_amp=1.6, arm_amp=0.6,
                 elbow=1.2, bob=6.0, lean=0.2)


def _sway(t, rng, amp=0.03):
    S = SKELETON
    w = 2 * np.pi * rng.uniform(0.15, 0.3) * t + rng.uniform(0, 2 * np.pi)
    return {S.index("spine"): _rz(amp * np.sin(w)) @ _rx(0.5 * amp * np.cos(w)),
            S.index("neck"): _ry(1.5 * amp * np.sin(0.7 * w))}


def _idle(t, rng):
    zero = np.zeros_like(t)
    rot = _sway(t, rng, amp=0.004)
    return _Motion(rot, np.full_like(t, REST_HIP_HEIGHT), zero, zero, zero)


def _wave(t, rng):
    S = SKELETON
    rot = _sway(t, rng)
    freq = 1.5 * rng.uniform(0.85, 1.15)
    ph = rng.uniform(0, 2 * np.pi)
    raise_ = rng.uniform(2.2, 2.7)
    w = 2 * np.pi * freq * t + ph
    rot[S.index("r_arm")] = _rx(np.full_like(t, raise_))
    rot[S.index("r_forearm")] = _rx(0.45 * np.sin(w) - 0.3)
    rot[S.index("r_hand")] = _rx(0.3 * np.sin(w - 0.6))
    rot[S.index("l_arm")] = _rx(np.full_like(t, 0.1))
    zero = np.zeros_like(t)
    return _Motion(rot, np.full_like(t, REST_HIP_HEIGHT), zero, zero, zero)


def _squat(t, rng):
    S = SKELETON
    freq = 0.45 * rng.uniform(0.85, 1.15)
    depth = rng.uniform(0.9, 1.3)
    w = 2 * np.pi * freq * t + rng.uniform(0, 2 * np.pi)
    s = depth * 0.5 * (1 - np.cos(w))
    rot = {}
    for side in ("l", "r"):
        rot[S.index(f"{side}_upleg")] = _rz(s)
        rot[S.index(f"{side}_leg")] = _rz(-2 * s)
        rot[S.index(f"{side}_foot")] = _rz(s)
        rot[S.index(f"{side}_arm")] = _rz(1.1 * s)
        rot[S.index(f"{side}_forearm")] = _rz(0.2 * s)
    rot[S.index("spine")] = _rz(-0.35 * s)
    rot[S.index("neck")] = _rz(0.25 * s)
    # thigh and shank make equal angles with the vertical, so the ankle stays on its rest height
    height = 6.0 + (42.0 + 41.0) * np.cos(s) + 6.0
    zero = np.zeros_like(t)
    return _Motion(rot, height, zero, zero, zero)


_GENERATORS = {"walk": _walk, "run": _run, "wave": _wave, "squat": _squat, "idle": _idle}


def _synth_one(family: str, frames: int, fps: int, rng: np.random.Generator) -> PoseClip:
    t = np.arange(frames) / fps
    m = _GENERATORS[family](t, rng)
    pos = forward_kinematics(m.rot, frames)
    pos[:, :, 1] += m.height[None, :]
    feats = np.empty((N_ROWS, frames))
    feats[JOINT_ROWS] = pos.transpose(0, 2, 1).reshape(3 * N_JOINTS, frames)
    feats[66] = m.speed / fps
    feats[67] = m.lateral / fps
    feats[68] = m.turn / fps
    return PoseClip(feats, fps)


def synth_generate(family: str, count: int, seed=0, frames: int = CLIP_FRAMES,
                   fps: int = DEFAULT_FPS) -> List[PoseClip]:
    """Procedural clips from the built-in rig.

    Bone lengths match :data:`SKELETON` exactly; the velocity rows describe
    a smooth root path (constant turn rate, gait-modulated speed).
    ``mixed`` draws the family per clip.
    """
    if family not in FAMILIES:
        raise ValueError(f"unknown motion family {family!r}; choose from {FAMILIES}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    base = [f for f in FAMILIES if f != "mixed"]
    out = []
    for _ in range(count):
        fam = base[rng.integers(len(base))] if family == "mixed" else family
        out.append(_synth_one(fam, frames, fps, rng))
    return out


def bone_lengths(clip, skeleton: SkeletonSpec = SKELETON) -> np.ndarray:
    """Per-edge, per-frame bone lengths ``(E, T)`` from root-relative rows."""
    j = _features(clip)[JOINT_ROWS].reshape(N_JOINTS, 3, -1)
    return np.stack([np.linalg.norm(j[c] - j[p], axis=0) for p, c in skeleton.edges])


# text formats ----------------------------------------------------------------

def save_clip(clip: PoseClip, path) -> None:
    f = clip.features
    lines = [f"#mofill-clip v1 fps={clip.fps} joints={N_JOINTS} frames={f.shape[1]}"]
    lines += [fmt_row(col) for col in f.T]
    write_atomic(path, "\n".join(lines) + "\n")


def load_clip(path) -> PoseClip:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ValueError(f"{path}: empty clip file")
    head = parse_header(lines[0], "#mofill-clip")
    data = read_rows(lines[1:], N_ROWS, str(path))
    if "frames" in head and int(head["frames"]) != data.shape[0]:
        raise ValueError(f"{path}: header declares {head['frames']} frames, found {data.shape[0]}")
    if head.get("joints", str(N_JOINTS)) != str(N_JOINTS):
        raise ValueError(f"{path}: only {N_JOINTS}-joint clips are supported")
    return PoseClip(data.T.copy(), int(head.get("fps", DEFAULT_FPS)))


def save_stats(stats: NormStats, path) -> None:
    text = "#mofill-stats v1\n" + fmt_row(stats.mean) + "\n" + fmt_row(stats.std) + "\n"
    write_atomic(path, text)


def load_stats(path) -> NormStats:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ValueError(f"{path}: empty stats file")
    parse_header(lines[0], "#mofill-stats")
    data = read_rows(lines[1:], N_ROWS, str(path))
    if data.shape[0] != 2:
        raise ValueError(f"{path}: expected 2 rows (mean, std), got {data.shape[0]}")
    return NormStats(data[0], data[1])
