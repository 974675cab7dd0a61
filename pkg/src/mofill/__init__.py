"""Motion infilling with a convolutional autoencoder over 69-row pose matrices, implemented on numpy."""
import os as _os

_threads = _os.environ.get("MOFILL_THREADS")
if _threads is not None:
    if not _threads.isdigit() or int(_threads) < 1:
        raise ValueError(f"MOFILL_THREADS must be a positive integer, got {_threads!r}")
    # must happen before numpy loads its BLAS
    for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ[_var] = _threads

from .evaluation import ErrorReport, benchmark_inference, bone_length_stats, joint_error, sweep_context, sweep_gaps
from .masking import PerturbationSpec, curriculum_mu, sample_gap_mask
from .model import (DESK_CONFIG, ModelConfig, ModelError, ModelWeights, build, decode, encode, forward,
                    load_weights, save_weights)
from .motion import (NormStats, PoseClip, SKELETON, compute_norm_stats, denormalize, load_clip, normalize,
                     save_clip, synth_generate)
from .tasks import BlendConstraint, blend_tertiary, denoise, infill, linear_interp, recover_joints
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "BlendConstraint", "DESK_CONFIG", "ErrorReport", "ModelConfig", "ModelError", "ModelWeights", "NormStats",
    "PerturbationSpec", "PoseClip", "SKELETON", "TrainConfig", "benchmark_inference", "blend_tertiary",
    "bone_length_stats", "build", "compute_norm_stats", "curriculum_mu", "decode", "denoise", "denormalize",
    "encode", "forward", "infill", "joint_error", "linear_interp", "load_clip", "load_weights", "normalize",
    "recover_joints", "sample_gap_mask", "save_clip", "save_weights", "sweep_context", "sweep_gaps",
    "synth_generate", "train",
]
