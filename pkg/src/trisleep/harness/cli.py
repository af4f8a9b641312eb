"""Command-line interface.

Subcommands: synth, sync, pretrain, finetune, eval, ablate, gradcheck.
Exit codes: 0 success, 1 runtime failure (single-line diagnostic on stderr),
2 usage error.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from ..streamio import read_labels, read_segments, read_stream, write_labels, write_segments, write_stream
from ..sync import MODALITIES
from .config import ConfigError, load_config, parse_config_text


def _config_from_args(args, overrides: dict) -> "ExperimentConfig":
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if args.config:
        return load_config(args.config, overrides)
    if "seed" not in overrides:
        raise ConfigError("--seed is required when no --config file is given")
    return parse_config_text("", overrides)


def _load_archives(paths, cfg):
    """Read one or more segment archives; each file is one family."""
    all_segments = []
    for path in paths:
        segments, audio_rate, ecg_rate, imu_rate, window = read_segments(path)
        if (audio_rate, ecg_rate, imu_rate) != (cfg.audio_rate, cfg.ecg_rate, cfg.imu_rate):
            raise ConfigError(
                f"{path}: archive rates {(audio_rate, ecg_rate, imu_rate)} do not match config "
                f"{(cfg.audio_rate, cfg.ecg_rate, cfg.imu_rate)}"
            )
        if abs(window - cfg.window_seconds) > 1e-6:
            raise ConfigError(f"{path}: archive window {window}s does not match config {cfg.window_seconds}s")
        from dataclasses import replace

        family = Path(path).stem
        all_segments.extend(replace(s, family=family) for s in segments)
    if len(paths) == 1:  # single recording: no family structure to respect
        from dataclasses import replace

        all_segments = [replace(s, family=None) for s in all_segments]
    return all_segments


def cmd_synth(args) -> int:
    from .synth import SynthSpec, synth_generate

    spec = SynthSpec(
        seed=args.seed,
        duration=args.hours * 3600.0,
        confusion_prob=args.confusion,
        missing_tail_fraction=args.missing_frac,
        modality_offset=args.offset,
    )
    streams, track = synth_generate(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for m in MODALITIES:
        write_stream(out / f"{m}.lbcs", streams[m])
    write_labels(out / "labels.csv", track)
    print(f"wrote {', '.join(m + '.lbcs' for m in MODALITIES)} and labels.csv to {out}")
    return 0


def cmd_sync(args) -> int:
    from ..sync import align_overlap, assign_labels, resample, segment, zero_fill

    streams = {m: read_stream(getattr(args, m)) for m in MODALITIES}
    track = read_labels(args.labels)
    dense = [zero_fill(streams[m]) for m in MODALITIES]
    aligned = align_overlap(dense)
    rates = {"audio": args.audio_rate, "ecg": args.ecg_rate, "imu": args.imu_rate}
    resampled = [resample(s, rates[s.modality]) for s in aligned]
    segments = assign_labels(segment(resampled, args.window), track, drop_zero_segments=args.drop_zero)
    write_segments(args.out, segments, args.audio_rate, args.ecg_rate, args.imu_rate)
    sleep = sum(s.label == 1 for s in segments)
    print(f"wrote {len(segments)} segments ({sleep} sleep / {len(segments) - sleep} wake) to {args.out}")
    return 0


def cmd_pretrain(args) -> int:
    from .experiment import run_pretrain

    cfg = _config_from_args(args, {"seed": args.seed})
    segments = _load_archives(args.data, cfg)
    path, losses = run_pretrain(
        cfg, segments, args.modality, args.out,
        steps=args.steps, mask_ratio=args.mask_ratio, span_length=args.span,
    )
    print(f"pretrained {args.modality}: loss {losses[0]:.4f} -> {losses[-1]:.4f}, saved {path}")
    return 0


def cmd_finetune(args) -> int:
    from .experiment import run_finetune

    overrides = {"seed": args.seed, "mode": args.fusion, "schedule": args.schedule,
                 "branches": args.branches}
    cfg = _config_from_args(args, overrides)
    segments = _load_archives(args.data, cfg)
    ckpt, metrics, result = run_finetune(cfg, segments, args.out)
    print(metrics.to_text())
    print(f"loss {result.initial_loss:.4f} -> {result.final_loss:.4f}; checkpoint {ckpt}")
    return 0


def cmd_eval(args) -> int:
    from .experiment import run_eval

    cfg = _config_from_args(args, {"seed": args.seed})
    segments = _load_archives(args.data, cfg)
    metrics = run_eval(cfg, args.checkpoint, segments)
    print(metrics.to_text())
    return 0


def cmd_ablate(args) -> int:
    from .ablation import SUITES, run_ablation

    suite = "fusion-modes" if args.suite == "fusion" else args.suite
    cfg = _config_from_args(args, {"seed": args.seed})
    segments = _load_archives(args.data, cfg)
    table = run_ablation(suite, cfg, segments, args.out, pretrain_steps=args.pretrain_steps)
    print(table.format_table())
    return 0


def cmd_gradcheck(args) -> int:
    from ..fusion import SleepWakeModel
    from ..numcore import cross_entropy_logits, gradcheck
    from ..sync import Segment

    cfg = _config_from_args(args, {"seed": args.seed})
    model = SleepWakeModel(cfg.model_spec(), seed=cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    min_t = cfg.model_spec().audio_conv.min_input_length * 3
    seg = Segment(
        audio=rng.normal(size=(1, min_t)).astype(np.float32),
        ecg=rng.normal(size=(1, min_t)).astype(np.float32),
        imu=rng.normal(size=(6, 8)).astype(np.float32),
        t_start=0.0, t_end=2.0, label=1,
    )
    max_el = None if args.full else args.max_elements
    rep = gradcheck(
        lambda: cross_entropy_logits(model.forward([seg]), [1]),
        model.parameters(), h=args.step, max_elements_per_param=max_el,
        rng=np.random.default_rng(cfg.seed),
    )
    print(rep.format_table())
    return 0 if rep.passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trisleep", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic trimodal recording")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--hours", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.add_argument("--confusion", type=float, default=0.15)
    p.add_argument("--missing-frac", type=float, default=0.01)
    p.add_argument("--offset", type=float, default=1.5)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("sync", help="zero-fill, align, resample, segment, and label streams")
    for m in MODALITIES:
        p.add_argument(f"--{m}", required=True, help=f"{m} .lbcs stream file")
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--window", type=float, default=30.0)
    p.add_argument("--audio-rate", type=int, default=16000)
    p.add_argument("--ecg-rate", type=int, default=16000)
    p.add_argument("--imu-rate", type=int, default=150)
    p.add_argument("--drop-zero", action="store_true", help="drop all-zero-fill segments")
    p.set_defaults(func=cmd_sync)

    p = sub.add_parser("pretrain", help="span-mask pretrain one branch")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--modality", choices=MODALITIES, required=True)
    p.add_argument("--data", action="append", required=True, help="segment archive (repeatable)")
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=300)
    p.add_argument("--mask-ratio", type=float, default=0.15)
    p.add_argument("--span", type=int, default=10)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("finetune", help="train a classifier and report test metrics")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--fusion", choices=("cross", "early", "late", "single"), dest="fusion")
    p.add_argument("--schedule")
    p.add_argument("--branches")
    p.add_argument("--data", action="append", required=True)
    p.add_argument("--out", default="runs/finetune")
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a segment archive")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", action="append", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="run an ablation suite")
    p.add_argument("--suite", choices=("schedules", "pretraining", "fusion-modes", "fusion"), required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--data", action="append", required=True)
    p.add_argument("--out", default="runs/ablation")
    p.add_argument("--pretrain-steps", type=int, default=300)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("gradcheck", help="finite-difference check of the model gradients")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--step", type=float, default=2e-4, help="finite-difference step")
    p.add_argument("--max-elements", type=int, default=64, help="sampled coordinates per parameter")
    p.add_argument("--full", action="store_true", help="check every coordinate (slow)")
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # single-line diagnostic, nonzero exit
        print(f"trisleep {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
