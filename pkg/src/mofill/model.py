"""The convolutional motion autoencoder.

Five encoding units (two 3x3 convs, leaky ReLU, 2x2 max-pool) shrink a
``1 x 69 x W`` pose image to ``c x 3 x ceil(W/32)``; a mirrored decoder
of strided transposed convs brings it back. The last decoder conv has no
activation. Pre-pool sizes are recorded in a :class:`PadPlan` so that any
width decodes to exactly its input shape.
"""
from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from . import kernels as K
from .layers import (Conv2d, ConvTranspose2d, LayerParams, LeakyReLU, MaxPool2d,
                     xavier_init)

N_ROWS = 69
DEPTH = 5
PAD_MULTIPLE = 2 ** DEPTH


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    channels: Tuple[int, ...] = (32, 64, 128, 256, 256)
    slope: float = 0.2
    input_rows: int = N_ROWS
    arch: str = "full"  # "full" or "vanilla"

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        if len(self.channels) != DEPTH:
            raise ModelError(f"need {DEPTH} channel counts, got {len(self.channels)}")
        if self.channels[-1] != 256:
            raise ModelError(f"bottleneck must have 256 channels, got {self.channels[-1]}")
        if any(c < 1 for c in self.channels):
            raise ModelError(f"channel counts must be positive: {self.channels}")
        if self.arch not in ("full", "vanilla"):
            raise ModelError(f"unknown architecture {self.arch!r}")
        if not 0.0 < self.slope < 1.0:
            raise ModelError(f"leaky slope must lie in (0, 1), got {self.slope}")


DESK_CONFIG = ModelConfig(channels=(8, 16, 32, 64, 256))


def vanilla_ae_config(base: Optional[ModelConfig] = None) -> ModelConfig:
    """Ablation: one stride-2 conv per encoding unit, one stride-2 transposed conv per decoding unit."""
    base = base or ModelConfig()
    return ModelConfig(channels=base.channels, slope=base.slope, input_rows=base.input_rows, arch="vanilla")


def _layer_shapes(config: ModelConfig) -> List[Tuple[str, Tuple[int, ...], int]]:
    """(name, weight shape, bias length) in network order."""
    ch = (1,) + config.channels
    out = []
    if config.arch == "full":
        for i in range(1, DEPTH + 1):
            out.append((f"enc{i}_conv1", (ch[i], ch[i - 1], 3, 3), ch[i]))
            out.append((f"enc{i}_conv2", (ch[i], ch[i], 3, 3), ch[i]))
        for i in range(DEPTH, 0, -1):
            # transposed weights use the (in, out, kh, kw) layout of the conv they invert
            out.append((f"dec{i}_up", (ch[i], ch[i], 3, 3), ch[i]))
            out.append((f"dec{i}_conv", (ch[i - 1], ch[i], 3, 3), ch[i - 1]))
    else:
        for i in range(1, DEPTH + 1):
            out.append((f"enc{i}_conv", (ch[i], ch[i - 1], 3, 3), ch[i]))
        for i in range(DEPTH, 0, -1):
            out.append((f"dec{i}_up", (ch[i], ch[i - 1], 3, 3), ch[i - 1]))
    return out


def parameter_count(config: ModelConfig) -> int:
    return sum(int(np.prod(s)) + b for _, s, b in _layer_shapes(config))


@dataclass
class ModelWeights:
    config: ModelConfig
    layers: List[LayerParams]

    def __post_init__(self):
        expected = _layer_shapes(self.config)
        if len(expected) != len(self.layers):
            raise ModelError(f"expected {len(expected)} layers, got {len(self.layers)}")
        for (name, shape, nb), p in zip(expected, self.layers):
            if p.name != name or p.weight.shape != shape or p.bias.shape != (nb,):
                raise ModelError(
                    f"layer {p.name}: shape {p.weight.shape}/{p.bias.shape} does not match "
                    f"expected {name} {shape}/({nb},)"
                )

    def __getitem__(self, name: str) -> LayerParams:
        for p in self.layers:
            if p.name == name:
                return p
        raise KeyError(name)

    @property
    def size(self) -> int:
        return sum(p.size for p in self.layers)

    def astype(self, dtype) -> "ModelWeights":
        return ModelWeights(self.config, [p.astype(dtype) for p in self.layers])

    def copy(self) -> "ModelWeights":
        layers = [LayerParams(p.name, p.weight.copy(), p.bias.copy(), p.m_w.copy(), p.v_w.copy(),
                              p.m_b.copy(), p.v_b.copy(), p.step) for p in self.layers]
        return ModelWeights(self.config, layers)


def build(config: ModelConfig = ModelConfig(), seed=0, dtype=K.TRAIN_DTYPE) -> ModelWeights:
    rng = np.random.default_rng(seed)
    layers = [LayerParams(name, xavier_init(shape, rng, dtype), np.zeros(nb, dtype=dtype))
              for name, shape, nb in _layer_shapes(config)]
    return ModelWeights(config, layers)


@dataclass
class PadPlan:
    """Pre-pool ``(h, w)`` at every encoder level, plus the temporal padding used."""

    sizes: List[Tuple[int, int]] = field(default_factory=list)
    width: int = 0
    pad: int = 0

    @property
    def padded_width(self) -> int:
        return self.width + self.pad

    def bottleneck_size(self) -> Tuple[int, int]:
        h, w = self.sizes[-1]
        return K.same_out_size(h, 2), K.same_out_size(w, 2)


def padded_length(t: int, multiple: int = PAD_MULTIPLE) -> int:
    return -(-t // multiple) * multiple


def pad_for_depth(x: np.ndarray, multiple: int = PAD_MULTIPLE) -> Tuple[np.ndarray, PadPlan]:
    """Edge-replicate the last axis up to the next multiple of ``multiple``."""
    t = x.shape[-1]
    pad = padded_length(t, multiple) - t
    if pad:
        widths = [(0, 0)] * (x.ndim - 1) + [(0, pad)]
        x = np.pad(x, widths, mode="edge")
    return x, PadPlan(width=t, pad=pad)


class Network:
    """Training-time view of a :class:`ModelWeights`: forward with caches, backward with grads.

    Blocks reference the weight arrays directly, so optimizer updates are
    seen on the next forward.
    """

    def __init__(self, weights: ModelWeights, pad_multiple: int = PAD_MULTIPLE):
        self.weights = weights
        self.config = weights.config
        self.pad_multiple = pad_multiple
        slope = self.config.slope
        p = {lp.name: lp for lp in weights.layers}
        self.enc: List[list] = []
        self.dec: List[list] = []
        if self.config.arch == "full":
            for i in range(1, DEPTH + 1):
                self.enc.append([Conv2d(p[f"enc{i}_conv1"]), LeakyReLU(slope),
                                 Conv2d(p[f"enc{i}_conv2"]), LeakyReLU(slope), MaxPool2d()])
            for i in range(DEPTH, 0, -1):
                unit = [ConvTranspose2d(p[f"dec{i}_up"]), LeakyReLU(slope), Conv2d(p[f"dec{i}_conv"])]
                if i > 1:
                    unit.append(LeakyReLU(slope))
                self.dec.append(unit)
        else:
            for i in range(1, DEPTH + 1):
                self.enc.append([Conv2d(p[f"enc{i}_conv"], stride=2), LeakyReLU(slope)])
            for i in range(DEPTH, 0, -1):
                unit = [ConvTranspose2d(p[f"dec{i}_up"])]
                if i > 1:
                    unit.append(LeakyReLU(slope))
                self.dec.append(unit)
        self._plan: Optional[PadPlan] = None
        self._pad: Optional[Tuple[int, int]] = None

    def _blocks(self):
        return [b for unit in self.enc + self.dec for b in unit]

    def param_blocks(self):
        return [b for b in self._blocks() if b.params is not None]

    def encode(self, x: np.ndarray, train: bool = False, plan: Optional[PadPlan] = None):
        x = K.as_tensor4(x)
        if x.shape[1] != 1:
            raise K.ShapeError(f"encoder expects 1 input channel, got input shape {x.shape}")
        plan = plan or PadPlan(width=x.shape[3])
        plan.sizes = []
        for unit in self.enc:
            for b in unit:
                if isinstance(b, (MaxPool2d,)) or (isinstance(b, Conv2d) and b.stride == 2):
                    plan.sizes.append(x.shape[2:])
                x = b.forward(x, train=train)
        return x, plan

    def decode(self, z: np.ndarray, plan: PadPlan, train: bool = False) -> np.ndarray:
        if len(plan.sizes) != DEPTH:
            raise ModelError(f"pad plan records {len(plan.sizes)} levels, expected {DEPTH}")
        if tuple(z.shape[2:]) != plan.bottleneck_size():
            raise ModelError(f"bottleneck shape {z.shape} does not match pad plan {plan.sizes}")
        for unit, target in zip(self.dec, reversed(plan.sizes)):
            for b in unit:
                if isinstance(b, ConvTranspose2d):
                    z = b.forward(z, target, train=train)
                else:
                    z = b.forward(z, train=train)
        return z

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        """``(n, 1, rows, T)`` -> same shape: pad, encode, decode, crop."""
        x = K.as_tensor4(x)
        t = x.shape[3]
        xp, plan = pad_for_depth(x, self.pad_multiple)
        z, plan = self.encode(xp, train=train, plan=plan)
        out = self.decode(z, plan, train=train)
        self._plan = plan if train else None
        return out[..., :t]

    def backward(self, grad: np.ndarray) -> np.ndarray:
        """Backprop through the last ``forward(train=True)``; returns grad w.r.t. its input."""
        if self._plan is None:
            raise RuntimeError("backward called without a cached training forward")
        plan, self._plan = self._plan, None
        if plan.pad:
            grad = np.concatenate([grad, np.zeros(grad.shape[:3] + (plan.pad,), grad.dtype)], axis=3)
        for b in reversed(self._blocks()):
            grad = b.backward(grad)
        if plan.pad:
            edge = grad[..., plan.width:].sum(axis=3)
            grad = grad[..., :plan.width].copy()
            grad[..., -1] += edge
        return grad

    def gradients(self):
        return [(b.params, b.grad_w, b.grad_b) for b in self.param_blocks()]


def encode(x: np.ndarray, weights: ModelWeights):
    return Network(weights).encode(x)


def decode(z: np.ndarray, plan: PadPlan, weights: ModelWeights) -> np.ndarray:
    return Network(weights).decode(z, plan)


def forward(clip: np.ndarray, weights: ModelWeights, pad_multiple: int = PAD_MULTIPLE) -> np.ndarray:
    """Reconstruct a normalized ``rows x T`` (or batched ``n x 1 x rows x T``) pose matrix."""
    arr = np.asarray(clip)
    dtype = weights.layers[0].weight.dtype
    if arr.ndim == 2:
        out = Network(weights, pad_multiple).forward(arr[None, None].astype(dtype, copy=False))
        return out[0, 0]
    return Network(weights, pad_multiple).forward(arr.astype(dtype, copy=False))


def encoder_receptive_field(config: ModelConfig) -> int:
    if config.arch == "full":
        layers = [(3, 1), (3, 1), (2, 2)] * DEPTH
    else:
        layers = [(3, 2)] * DEPTH
    return K.receptive_field(layers)


# weight file -----------------------------------------------------------------

MAGIC = b"MOFW"
VERSION = 1
_CONFIG_TENSOR = "config"


def _tensors(weights: ModelWeights):
    yield _CONFIG_TENSOR, np.array([weights.config.slope, 1.0 if weights.config.arch == "vanilla" else 0.0])
    for p in weights.layers:
        yield f"{p.name}.weight", p.weight
        yield f"{p.name}.bias", p.bias


def weights_to_bytes(weights: ModelWeights) -> bytes:
    tensors = list(_tensors(weights))
    body = bytearray(struct.pack("<II", VERSION, len(tensors)))
    for name, arr in tensors:
        nb = name.encode("utf-8")
        body += struct.pack("<H", len(nb)) + nb
        body += struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
        body += np.ascontiguousarray(arr, dtype="<f4").tobytes()
    return MAGIC + bytes(body) + struct.pack("<I", zlib.crc32(body))


def _expected_shape(name: str, dims: Tuple[int, ...], chan: dict, last_w: Tuple[int, ...], arch: str):
    """Shape implied by the entries read so far; first-conv entries fix their unit's channel count."""
    layer, kind = name.rsplit(".", 1)
    if kind == "bias":
        return (last_w[1] if layer.endswith("_up") else last_w[0],)
    i = int(layer[3])
    if layer.endswith("_conv1") or (arch == "vanilla" and layer.startswith("enc")):
        if len(dims) == 4 and dims[1] == chan[i - 1] and dims[2:] == (3, 3):
            chan[i] = dims[0]
            return dims
        return ("?", chan[i - 1], 3, 3)
    if layer.endswith("_conv2"):
        return (chan[i], chan[i], 3, 3)
    if layer.endswith("_up"):
        return (chan[i], chan[i] if arch == "full" else chan[i - 1], 3, 3)
    return (chan[i - 1], chan[i], 3, 3)


def weights_from_bytes(data: bytes) -> ModelWeights:
    def need(off, n, what):
        if off + n > len(data) - 4:
            raise ModelError(f"weight file truncated at offset {off} while reading {what}")

    if len(data) < 16:
        raise ModelError(f"weight file truncated: {len(data)} bytes")
    if data[:4] != MAGIC:
        raise ModelError(f"bad magic {data[:4]!r} at offset 0, expected {MAGIC!r}")
    version, count = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise ModelError(f"unsupported weight file version {version} at offset 4")
    off = 12
    tensors = {}
    expected_names = [_CONFIG_TENSOR]
    chan = {0: 1}
    last_w: Tuple[int, ...] = ()
    arch = "full"
    k = 0
    while k < len(expected_names):
        want = expected_names[k]
        prev = expected_names[k - 1].rsplit(".", 1)[0] if k else None
        where = f"layer {prev}: " if prev else ""
        need(off, 2, f"header of {want}")
        (ln,) = struct.unpack_from("<H", data, off)
        need(off + 2, ln, f"name of {want}")
        name = data[off + 2:off + 2 + ln].decode("utf-8", errors="replace")
        if name != want:
            raise ModelError(f"{where}corrupted shape table: expected entry {want!r} at offset {off}, found {name!r}")
        off += 2 + ln
        layer = name.rsplit(".", 1)[0]
        need(off, 1, f"rank of {name}")
        rank = data[off]
        if rank > 4:
            raise ModelError(f"layer {layer}: bad rank {rank} at offset {off}")
        need(off + 1, 4 * rank, f"dims of {name}")
        dims = tuple(struct.unpack_from(f"<{rank}I", data, off + 1))
        if name == _CONFIG_TENSOR:
            if dims != (2,):
                raise ModelError(f"config entry has shape {dims} at offset {off}, expected (2,)")
        else:
            exp = _expected_shape(name, dims, chan, last_w, arch)
            if dims != exp:
                raise ModelError(f"layer {layer}: corrupted shape entry {dims} at offset {off}, expected {exp}")
            if name.endswith(".weight"):
                last_w = dims
        off += 1 + 4 * rank
        n = int(np.prod(dims)) if rank else 1
        need(off, 4 * n, f"data of layer {layer} (shape {dims})")
        tensors[name] = np.frombuffer(data, dtype="<f4", count=n, offset=off).reshape(dims).astype(np.float32)
        off += 4 * n
        if name == _CONFIG_TENSOR:
            arch = "vanilla" if tensors[name][1] else "full"
            expected_names += [f"{n}.{kind}" for n, _, _ in _layer_shapes(ModelConfig(arch=arch))
                               for kind in ("weight", "bias")]
            if count != len(expected_names):
                raise ModelError(f"tensor count {count} at offset 8 does not match the {len(expected_names)} "
                                 f"entries of a {arch} model")
        k += 1
    if off != len(data) - 4:
        raise ModelError(f"trailing bytes at offset {off}: shape table inconsistent with file size")
    (crc,) = struct.unpack_from("<I", data, off)
    if zlib.crc32(data[4:off]) != crc:
        raise ModelError(f"checksum mismatch at offset {off}")
    # stored as f4; the shortest decimal form recovers the configured value
    slope = float(str(tensors.pop(_CONFIG_TENSOR)[0]))
    try:
        config = ModelConfig(channels=tuple(chan[i] for i in range(1, DEPTH + 1)), slope=slope, arch=arch)
    except ModelError as exc:
        raise ModelError(f"shape table does not describe a valid model: {exc}") from exc
    layers = [LayerParams(name, tensors[f"{name}.weight"], tensors[f"{name}.bias"])
              for name, _, _ in _layer_shapes(config)]
    return ModelWeights(config, layers)


def save_weights(weights: ModelWeights, path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(weights_to_bytes(weights))
    tmp.replace(path)


def load_weights(path) -> ModelWeights:
    return weights_from_bytes(Path(path).read_bytes())
