"""``mofill`` command line: data generation, training, inference tasks, evaluation and plots.

Exit codes: 0 success, 1 usage error, 2 data or model error.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple


from . import evaluation, masking, svg, tasks
from .model import DESK_CONFIG, ModelConfig, ModelError, build, load_weights, save_weights
from .motion import (CLIP_FRAMES, FAMILIES, SKELETON, load_clip, load_stats, save_clip,
                     save_stats, synth_generate, window_clips)
from .textio import write_atomic
from .training import TrainConfig, train

log = logging.getLogger("mofill")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# run config ------------------------------------------------------------------

def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int_list(text: str) -> Tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise ValueError(f"expected comma-separated integers, got {text!r}") from None


RUN_KEYS = {
    "epochs": int, "batch_size": int, "lr": float, "seed": int, "curriculum": _bool, "fixed_mu": int,
    "gap_ratio": float, "val_fraction": float, "checkpoint_every": int, "checkpoint_dir": str,
    "channels": _int_list, "slope": float, "arch": str,
    "data": str, "weights": str, "stats": str, "log": str, "out": str, "clip": str,
    "family": str, "count": int, "frames": int,
}


def parse_run_config(path) -> Dict[str, object]:
    """Flat ``key = value`` file; ``#`` starts a comment. Unknown keys are rejected."""
    out: Dict[str, object] = {}
    text = Path(path).read_text(encoding="utf-8")
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise UsageError(f"{path}:{n}: expected key=value, got {raw.strip()!r}")
        if key not in RUN_KEYS:
            raise UsageError(f"{path}:{n}: unknown key {key!r}")
        try:
            out[key] = RUN_KEYS[key](value)
        except ValueError as exc:
            raise UsageError(f"{path}:{n}: bad value for {key}: {exc}") from None
    return out


def _merge_config(args: argparse.Namespace) -> None:
    """Fill options left unset on the command line from ``--config``."""
    if not getattr(args, "config", None):
        return
    if not Path(args.config).is_file():
        raise DataError(f"run config not found: {args.config}")
    for key, value in parse_run_config(args.config).items():
        if hasattr(args, key) and getattr(args, key) is None:
            setattr(args, key, value)


# argument helpers --------------------------------------------------------------

def parse_gap(text: str) -> Tuple[int, int]:
    start, sep, length = text.partition(":")
    try:
        if not sep:
            raise ValueError
        return int(start), int(length)
    except ValueError:
        raise argparse.ArgumentTypeError(f"gap must be start:length, got {text!r}") from None


def parse_joints(text: str) -> Tuple[int, ...]:
    out = []
    for tok in (t.strip() for t in text.split(",") if t.strip()):
        if tok.isdigit():
            out.append(int(tok))
        elif tok in SKELETON.names:
            out.append(SKELETON.index(tok))
        else:
            raise argparse.ArgumentTypeError(f"unknown joint {tok!r}")
    return tuple(out)


def _require(args, *names):
    missing = [n for n in names if getattr(args, n, None) is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))


def _input(path) -> Path:
    p = Path(path)
    if not p.exists():
        raise DataError(f"file not found: {p}")
    return p


def _output(path) -> Path:
    p = Path(path)
    if not p.parent.is_dir():
        raise DataError(f"output directory does not exist: {p.parent}")
    return p


def _load_model(args):
    weights = load_weights(_input(args.weights))
    stats_path = args.stats if args.stats is not None else args.weights + ".stats"
    return weights, load_stats(_input(stats_path))


def _clip_files(directory) -> List[Path]:
    d = _input(directory)
    files = sorted(d.glob("*.csv")) if d.is_dir() else [d]
    if not files:
        raise DataError(f"no clip files (*.csv) in {d}")
    return files


# commands ----------------------------------------------------------------------

def cmd_gen_data(args) -> int:
    _require(args, "family", "count", "out")
    out = Path(args.out)
    if not out.parent.is_dir():
        raise DataError(f"output directory does not exist: {out.parent}")
    out.mkdir(exist_ok=True)
    clips = synth_generate(args.family, args.count, seed=args.seed or 0,
                           frames=args.frames or CLIP_FRAMES)
    for i, c in enumerate(clips):
        save_clip(c, out / f"{args.family}_{i:04d}.csv")
    print(f"wrote {len(clips)} clips to {out}")
    return EXIT_OK


def _model_config(args) -> ModelConfig:
    channels = args.channels or DESK_CONFIG.channels
    return ModelConfig(channels=channels, slope=args.slope if args.slope is not None else DESK_CONFIG.slope,
                       arch=args.arch or "full")


def cmd_train(args) -> int:
    _require(args, "data", "weights")
    files = _clip_files(args.data)
    weights_path = _output(args.weights)
    stats_path = _output(args.stats or args.weights + ".stats")
    log_path = _output(args.log) if args.log else None
    if args.resume:
        _input(args.resume)
    corpus = []
    for f in files:
        corpus.extend(window_clips(load_clip(f)))
    if not corpus:
        raise DataError(f"no clip in {args.data} has at least {CLIP_FRAMES} frames")
    defaults = TrainConfig()
    cfg = TrainConfig(
        epochs=args.epochs if args.epochs is not None else defaults.epochs,
        batch_size=args.batch_size or defaults.batch_size,
        lr=args.lr or defaults.lr,
        seed=args.seed if args.seed is not None else defaults.seed,
        curriculum=defaults.curriculum if args.curriculum is None else args.curriculum,
        fixed_mu=args.fixed_mu or defaults.fixed_mu,
        gap_ratio=args.gap_ratio if args.gap_ratio is not None else defaults.gap_ratio,
        val_fraction=args.val_fraction or defaults.val_fraction,
        checkpoint_every=args.checkpoint_every or 0,
        checkpoint_dir=args.checkpoint_dir,
    )
    res = train(corpus, cfg, _model_config(args), resume=args.resume)
    save_weights(res.weights, weights_path)
    save_stats(res.stats, stats_path)
    if log_path:
        write_atomic(log_path, res.log.to_csv())
    last = res.log.records[-1] if res.log.records else None
    if last:
        print(f"trained {len(res.log)} epochs on {len(corpus)} clips; final train loss {last.train_loss:.5f}")
    return EXIT_OK


def cmd_infill(args) -> int:
    _require(args, "clip", "weights", "out")
    if not args.gap:
        raise UsageError("infill needs at least one --gap start:length")
    clip = load_clip(_input(args.clip))
    out = _output(args.out)
    weights, stats = _load_model(args)
    res = tasks.infill(clip, args.gap, weights, stats, keep_known=args.keep_known)
    save_clip(res, out)
    return EXIT_OK


def cmd_denoise(args) -> int:
    _require(args, "clip", "weights", "out")
    clip = load_clip(_input(args.clip))
    out = _output(args.out)
    weights, stats = _load_model(args)
    if args.noise is not None:
        spec = masking.PerturbationSpec("gaussian", sigma=args.noise)
    elif args.drop is not None:
        spec = masking.PerturbationSpec("frame_drop", p=args.drop)
    else:
        spec = None
    save_clip(tasks.denoise(clip, spec, weights, stats, seed=args.seed or 0), out)
    return EXIT_OK


def cmd_recover(args) -> int:
    _require(args, "clip", "weights", "out", "joints")
    clip = load_clip(_input(args.clip))
    out = _output(args.out)
    weights, stats = _load_model(args)
    save_clip(tasks.recover_joints(clip, args.joints, weights, stats), out)
    return EXIT_OK


def cmd_blend(args) -> int:
    _require(args, "clip", "weights", "out", "source", "joints", "at")
    if not args.gap:
        raise UsageError("blend needs at least one --gap start:length")
    clip = load_clip(_input(args.clip))
    source = load_clip(_input(args.source))
    out = _output(args.out)
    weights, stats = _load_model(args)
    start, length = args.at
    con = tasks.BlendConstraint(args.joints, source, start, length, args.source_start or 0)
    save_clip(tasks.blend_tertiary(clip, args.gap, [con], weights, stats), out)
    return EXIT_OK


def cmd_eval(args) -> int:
    out = _output(args.out) if args.out else None
    if args.pred or args.truth:
        if args.sweep:
            raise UsageError("--sweep cannot be combined with --pred/--truth")
        _require(args, "pred", "truth")
        pred, truth = load_clip(_input(args.pred)), load_clip(_input(args.truth))
        scope = "gap_only" if args.scope == "gap" else "full"
        rep = evaluation.joint_error(pred, truth, scope, args.gap or None, args.alignment)
        text = evaluation.to_csv(["scope", "alignment", "mean_cm", "std_cm", "frames"],
                                 [(rep.scope, rep.alignment, rep.mean, rep.std, rep.frames)])
    elif args.sweep:
        _require(args, "weights", "data")
        clips = [load_clip(f) for f in _clip_files(args.data)]
        weights, stats = _load_model(args)
        if args.sweep == "gaps":
            rows = evaluation.sweep_gaps(weights, clips, stats, args.sizes or (5, 20, 80, 250))
        else:
            rows = evaluation.sweep_context(weights, clips, stats, args.sizes or (1, 5, 10, 25, 50))
        text = evaluation.sweep_csv(rows, "gap" if args.sweep == "gaps" else "context")
    else:
        raise UsageError("eval needs --pred/--truth or --sweep gaps|context")
    if out:
        write_atomic(out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_bench(args) -> int:
    out = _output(args.out) if args.out else None
    if args.weights:
        weights = load_weights(_input(args.weights))
    else:
        weights = build(_model_config(args), args.seed or 0)
    rows = evaluation.benchmark_inference(weights, args.lengths or (240, 480, 1927), runs=args.runs)
    text = evaluation.to_csv(["frames", "total_ms", "ms_per_frame"], rows)
    if out:
        write_atomic(out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_export_svg(args) -> int:
    _require(args, "out")
    if bool(args.clip) == bool(args.report):
        raise UsageError("export-svg needs exactly one of --clip or --report")
    out = _output(args.out)
    stamp = time.strftime("%Y-%m-%dT%H:%M:%S") if args.timestamp else None
    if args.clip:
        if args.stride < 1:
            raise UsageError("--stride must be >= 1")
        clip = load_clip(_input(args.clip))
        gaps = tasks.validate_gaps(args.gap or [], clip.frames)
        text = svg.skeleton_strip(clip, args.stride, gaps, stamp=stamp)
    else:
        lines = _input(args.report).read_text(encoding="utf-8").splitlines()
        if len(lines) < 2:
            raise DataError(f"{args.report}: report has no data rows")
        head = lines[0].split(",")
        rows = [ln.split(",") for ln in lines[1:] if ln.strip()]
        try:
            xs = [float(r[0]) for r in rows]
            ys = [float(r[1]) for r in rows]
        except (ValueError, IndexError):
            raise DataError(f"{args.report}: first two columns must be numeric") from None
        text = svg.error_curve(xs, ys, head[0], head[1] if len(head) > 1 else "value", stamp=stamp)
    try:
        write_atomic(out, text)
    except OSError as exc:
        raise DataError(f"cannot write {out}: {exc}") from None
    return EXIT_OK


# parser --------------------------------------------------------------------------

def _add_model_io(p):
    p.add_argument("--weights", help="weight file")
    p.add_argument("--stats", help="normalization stats (default: <weights>.stats)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mofill", description="Motion infilling with a convolutional autoencoder.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def command(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        p.add_argument("--config", help="key=value run config; command-line options take precedence")
        return p

    p = command("gen-data", cmd_gen_data, "write synthetic clips")
    p.add_argument("--family", choices=FAMILIES)
    p.add_argument("--count", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--frames", type=int)
    p.add_argument("--out", help="output directory")

    p = command("train", cmd_train, "train a model on a directory of clips")
    p.add_argument("--data")
    _add_model_io(p)
    p.add_argument("--log", help="per-epoch CSV log")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--seed", type=int)
    cur = p.add_mutually_exclusive_group()
    cur.add_argument("--curriculum", dest="curriculum", action="store_const", const=True, default=None)
    cur.add_argument("--no-curriculum", dest="curriculum", action="store_const", const=False)
    p.add_argument("--fixed-mu", type=int, help="mean gap length without curriculum")
    p.add_argument("--gap-ratio", type=float)
    p.add_argument("--val-fraction", type=float)
    p.add_argument("--channels", type=_int_list)
    p.add_argument("--slope", type=float)
    p.add_argument("--arch", choices=("full", "vanilla"))
    p.add_argument("--checkpoint-every", type=int)
    p.add_argument("--checkpoint-dir")
    p.add_argument("--resume", help="checkpoint to continue from")

    p = command("infill", cmd_infill, "fill gaps in a clip")
    p.add_argument("--clip")
    p.add_argument("--gap", type=parse_gap, action="append", help="start:length (repeatable)")
    _add_model_io(p)
    p.add_argument("--keep-known", action="store_true", help="keep original frames outside the gaps")
    p.add_argument("--out")

    p = command("denoise", cmd_denoise, "reconstruct a corrupted clip")
    p.add_argument("--clip")
    _add_model_io(p)
    kind = p.add_mutually_exclusive_group()
    kind.add_argument("--noise", type=float, help="add Gaussian noise of this std (normalized units) first")
    kind.add_argument("--drop", type=float, help="drop each joint per frame with this probability first")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")

    p = command("recover", cmd_recover, "reconstruct up to 3 missing joints")
    p.add_argument("--clip")
    p.add_argument("--joints", type=parse_joints, help="comma-separated indices or names")
    _add_model_io(p)
    p.add_argument("--out")

    p = command("blend", cmd_blend, "infill guided by joints copied from another clip")
    p.add_argument("--clip")
    p.add_argument("--gap", type=parse_gap, action="append")
    p.add_argument("--source", help="clip supplying the constraint joints")
    p.add_argument("--joints", type=parse_joints)
    p.add_argument("--at", type=parse_gap, help="constraint placement start:length inside a gap")
    p.add_argument("--source-start", type=int)
    _add_model_io(p)
    p.add_argument("--out")

    p = command("eval", cmd_eval, "joint error of a prediction, or a gap/context sweep")
    p.add_argument("--pred")
    p.add_argument("--truth")
    p.add_argument("--gap", type=parse_gap, action="append")
    p.add_argument("--scope", choices=("full", "gap"), default="full")
    p.add_argument("--alignment", choices=("root_aligned", "global"), default="root_aligned")
    p.add_argument("--sweep", choices=("gaps", "context"))
    p.add_argument("--sizes", type=_int_list, help="gap sizes or context lengths for --sweep")
    p.add_argument("--data")
    _add_model_io(p)
    p.add_argument("--out", help="CSV report (default: stdout)")

    p = command("bench", cmd_bench, "time single forward passes")
    p.add_argument("--weights")
    p.add_argument("--channels", type=_int_list)
    p.add_argument("--slope", type=float)
    p.add_argument("--arch", choices=("full", "vanilla"))
    p.add_argument("--seed", type=int)
    p.add_argument("--lengths", type=_int_list)
    p.add_argument("--runs", type=int, default=5)
    p.add_argument("--out")

    p = command("export-svg", cmd_export_svg, "stick-figure strip of a clip or an error curve")
    p.add_argument("--clip")
    p.add_argument("--report", help="two-column CSV such as an eval sweep")
    p.add_argument("--gap", type=parse_gap, action="append", help="frames to highlight")
    p.add_argument("--stride", type=int, default=10)
    p.add_argument("--timestamp", action="store_true", help="embed the generation time")
    p.add_argument("--out")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(name)s: %(message)s")
        _merge_config(args)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ModelError, ValueError, OSError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
