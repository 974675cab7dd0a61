"""Curriculum training of the motion autoencoder."""
from __future__ import annotations

import csv
import io
import json
import logging
import time
import zipfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence

import numpy as np

from . import kernels as K
from .layers import LayerParams, OptimConfig, adam_step
from .masking import (GAP_SIGMA, MU_MAX, apply_mask, curriculum_mu, ones_mask,
                      sample_gap_mask, sample_joint_drop_mask)
from .model import DESK_CONFIG, ModelConfig, ModelWeights, Network, build
from .motion import CLIP_FRAMES, NormStats, PoseClip, compute_norm_stats, normalize

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 16
    lr: float = 1e-3
    seed: int = 0
    curriculum: bool = True
    fixed_mu: int = 60  # mean gap length when the curriculum is off
    gap_ratio: float = 0.5  # probability of gap masking vs. joint dropping
    val_fraction: float = 0.1
    gap_sigma: float = GAP_SIGMA
    force_gap: Optional[int] = None  # exact gap length for every gap sample; 0 disables masking
    checkpoint_every: int = 0
    checkpoint_dir: Optional[str] = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError(f"validation fraction must lie in (0, 1), got {self.val_fraction}")
        if not 0.0 <= self.gap_ratio <= 1.0:
            raise ValueError(f"gap ratio must lie in [0, 1], got {self.gap_ratio}")

    @classmethod
    def full_regime(cls, **kw) -> "TrainConfig":
        """200 epochs at batch 80; the desk defaults are a scaled-down version of this."""
        return cls(epochs=200, batch_size=80, **kw)


def scheduled_mu(epoch: int, epochs: int) -> int:
    """Curriculum mean gap length; short runs are stretched so 120 frames is still reached."""
    if epochs >= 60:
        return curriculum_mu(epoch)
    return min(10 + 10 * ((epoch * 12) // epochs), MU_MAX)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    mu_e: int
    seconds: float


@dataclass
class TrainLog:
    records: List[EpochRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    @property
    def train_loss(self) -> np.ndarray:
        return np.array([r.train_loss for r in self.records])

    @property
    def val_loss(self) -> np.ndarray:
        return np.array([r.val_loss for r in self.records])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_loss", "mu_e", "seconds"])
        for r in self.records:
            w.writerow([r.epoch, repr(r.train_loss), repr(r.val_loss), r.mu_e, f"{r.seconds:.3f}"])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "TrainLog":
        rows = list(csv.DictReader(io.StringIO(text)))
        return cls([EpochRecord(int(r["epoch"]), float(r["train_loss"]), float(r["val_loss"]),
                                int(r["mu_e"]), float(r["seconds"])) for r in rows])


@dataclass
class TrainResult:
    weights: ModelWeights
    log: TrainLog
    stats: NormStats
    train_index: np.ndarray
    val_index: np.ndarray


def split_indices(n: int, val_fraction: float, seed) -> tuple:
    perm = np.random.default_rng([seed, 7919]).permutation(n)
    n_val = max(1, int(round(n * val_fraction))) if n > 1 else 0
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def _stack(clips: Sequence[PoseClip], stats: NormStats) -> np.ndarray:
    return np.stack([normalize(c.features, stats) for c in clips])[:, None].astype(K.TRAIN_DTYPE)


def sample_training_masks(n: int, frames: int, mu: int, config: TrainConfig,
                          rng: np.random.Generator) -> np.ndarray:
    masks = np.empty((n, 1) + ones_mask(frames).shape, dtype=np.uint8)
    for i in range(n):
        if rng.random() < config.gap_ratio:
            if config.force_gap == 0:
                masks[i, 0] = ones_mask(frames)
            else:
                masks[i, 0] = sample_gap_mask(frames, seed=rng, mu=mu, sigma=config.gap_sigma,
                                              length=config.force_gap)[0]
        else:
            masks[i, 0] = sample_joint_drop_mask(frames, rng)
    return masks


def _batch_loss(net: Network, x: np.ndarray, target: np.ndarray, train: bool) -> float:
    out = net.forward(x, train=train)
    loss = K.l1_loss(out, target)
    if train:
        net.backward(K.l1_loss_backward(out, target))
    return loss


def _epoch_mu(epoch: int, config: TrainConfig) -> int:
    return scheduled_mu(epoch, config.epochs) if config.curriculum else config.fixed_mu


def train(corpus: Sequence[PoseClip], config: TrainConfig = TrainConfig(),
          model_config: ModelConfig = DESK_CONFIG, resume: Optional[str] = None,
          on_epoch: Optional[Callable[[EpochRecord], None]] = None) -> TrainResult:
    """Train on complete clips; returns final weights, the per-epoch log and the normalization stats.

    Every gradient step feeds masked inputs and regresses the complete
    normalized clip with an l1 loss over all entries.
    """
    if not corpus:
        raise ValueError("training corpus is empty")
    for i, c in enumerate(corpus):
        if c.features.shape != (69, CLIP_FRAMES):
            raise ValueError(f"clip {i} has shape {c.features.shape}, expected (69, {CLIP_FRAMES})")
    train_idx, val_idx = split_indices(len(corpus), config.val_fraction, config.seed)
    stats = compute_norm_stats([corpus[i] for i in train_idx])
    x_train = _stack([corpus[i] for i in train_idx], stats)
    x_val = _stack([corpus[i] for i in val_idx], stats) if len(val_idx) else x_train[:0]

    start_epoch = 0
    train_log = TrainLog()
    if resume is not None:
        ckpt = load_checkpoint(resume)
        weights, train_log, start_epoch = ckpt["weights"], ckpt["log"], ckpt["epoch"]
    else:
        weights = build(model_config, config.seed)
    opt = OptimConfig(lr=config.lr)
    net = Network(weights)
    frames = x_train.shape[-1]

    for epoch in range(start_epoch, config.epochs):
        t0 = time.perf_counter()
        mu = _epoch_mu(epoch, config)
        rng = np.random.default_rng([config.seed, epoch])
        order = rng.permutation(len(x_train))
        masks = sample_training_masks(len(x_train), frames, mu, config, rng)
        total, count = 0.0, 0
        for b, s in enumerate(range(0, len(order), config.batch_size)):
            idx = order[s:s + config.batch_size]
            target = x_train[idx]
            loss = _batch_loss(net, apply_mask(target, masks[idx]), target, train=True)
            if not np.isfinite(loss):
                raise FloatingPointError(f"non-finite loss at epoch {epoch} batch {b}")
            for params, gw, gb in net.gradients():
                adam_step(params, gw, gb, opt)
            total += loss * len(idx)
            count += len(idx)
        val = validation_loss(weights, x_val, mu, config, np.random.default_rng([config.seed, epoch, 1]))
        rec = EpochRecord(epoch, total / count, val, mu, time.perf_counter() - t0)
        train_log.records.append(rec)
        log.info("epoch %d mu=%d train=%.5f val=%.5f (%.1fs)", epoch, mu, rec.train_loss, val, rec.seconds)
        if on_epoch is not None:
            on_epoch(rec)
        if config.checkpoint_every and config.checkpoint_dir and (epoch + 1) % config.checkpoint_every == 0:
            path = Path(config.checkpoint_dir) / f"ckpt_epoch{epoch + 1:04d}.npz"
            save_checkpoint(path, weights, train_log, epoch + 1, stats)
    return TrainResult(weights, train_log, stats, train_idx, val_idx)


def validation_loss(weights: ModelWeights, x_val: np.ndarray, mu: int, config: TrainConfig,
                    rng: np.random.Generator) -> float:
    if len(x_val) == 0:
        return float("nan")
    masks = sample_training_masks(len(x_val), x_val.shape[-1], mu, config, rng)
    net = Network(weights)
    total = 0.0
    for s in range(0, len(x_val), config.batch_size):
        target = x_val[s:s + config.batch_size]
        total += _batch_loss(net, apply_mask(target, masks[s:s + config.batch_size]), target, False) * len(target)
    return total / len(x_val)


def evaluate_epoch(weights: ModelWeights, clips: Sequence[PoseClip], gap_lengths: Sequence[int],
                   stats: NormStats) -> dict:
    """Mean gap-only joint error (cm) per centered gap length; length 0 scores full reconstruction."""
    from .evaluation import centered_gap, joint_error
    from .tasks import infill

    out = {}
    for g in gap_lengths:
        errs = []
        for c in clips:
            if g >= c.frames:
                raise ValueError(f"gap length {g} must be shorter than the clip ({c.frames} frames)")
            gaps = [centered_gap(c.frames, g)] if g else []
            pred = infill(c, gaps, weights, stats)
            rep = joint_error(pred, c, "gap_only" if g else "full", gaps)
            errs.append(rep.per_term)
        out[g] = float(np.concatenate(errs).mean())
    return out


# checkpoints -------------------------------------------------------------------

def save_checkpoint(path, weights: ModelWeights, train_log: TrainLog, epoch: int, stats: NormStats) -> None:
    """Write weights, Adam state, log and stats; the file appears atomically."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {"stats_mean": stats.mean, "stats_std": stats.std}
    for p in weights.layers:
        for attr in ("weight", "bias", "m_w", "v_w", "m_b", "v_b"):
            arrays[f"{p.name}/{attr}"] = getattr(p, attr)
        arrays[f"{p.name}/step"] = np.array(p.step)
    meta = {"epoch": epoch, "config": asdict(weights.config), "log": train_log.to_csv()}
    arrays["meta"] = np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        np.savez(fh, **arrays)
    tmp.replace(path)


def load_checkpoint(path) -> dict:
    try:
        with np.load(path) as data:
            meta = json.loads(bytes(data["meta"]).decode("utf-8"))
            config = ModelConfig(**{**meta["config"], "channels": tuple(meta["config"]["channels"])})
            ref = build(config, 0)
            layers = []
            for p in ref.layers:
                arr = {a: data[f"{p.name}/{a}"] for a in ("weight", "bias", "m_w", "v_w", "m_b", "v_b")}
                layers.append(LayerParams(p.name, arr["weight"].copy(), arr["bias"].copy(), arr["m_w"].copy(),
                                          arr["v_w"].copy(), arr["m_b"].copy(), arr["v_b"].copy(),
                                          int(data[f"{p.name}/step"])))
            stats = NormStats(data["stats_mean"], data["stats_std"])
    except (OSError, KeyError, ValueError, zipfile.BadZipFile, json.JSONDecodeError) as exc:
        raise ValueError(f"corrupted checkpoint {path}: {exc}") from exc
    return {"weights": ModelWeights(config, layers), "log": TrainLog.from_csv(meta["log"]),
            "epoch": int(meta["epoch"]), "stats": stats}
