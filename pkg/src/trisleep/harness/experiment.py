"""Train/eval drivers: data pipeline, splits, the optimization loop, and the
artifacts every run leaves behind (checkpoint, metrics report, run log)."""

import subprocess
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .. import __version__
from ..fusion import SleepWakeModel
from ..metrics import MetricsReport, confusion, report
from ..numcore import AdamState, adam_step, cross_entropy_logits, no_grad
from ..numcore.random import generator
from ..sync import MODALITIES, LabelTrack, Segment, align_overlap, assign_labels
from ..sync import resample as resample_stream
from ..sync import segment as cut_segments
from ..sync import zero_fill
from .checkpoint import load_branch, load_checkpoint, save_checkpoint
from .config import ExperimentConfig


def build_segments(streams: dict, track: LabelTrack, cfg: ExperimentConfig,
                   family: str | None = None, drop_zero_segments: bool = False) -> list:
    """Chunked streams -> labeled, aligned, resampled segments."""
    dense = [zero_fill(streams[m]) for m in MODALITIES]
    aligned = align_overlap(dense)
    targets = {"audio": cfg.audio_rate, "ecg": cfg.ecg_rate, "imu": cfg.imu_rate}
    resampled = [resample_stream(s, targets[s.modality]) for s in aligned]
    segments = cut_segments(resampled, cfg.window_seconds)
    labeled = assign_labels(segments, track, drop_zero_segments=drop_zero_segments)
    if family is not None:
        labeled = [replace(s, family=family) for s in labeled]
    return labeled


def make_benchmark(cfg: ExperimentConfig, recordings: int = 8, duration: float = 300.0,
                   dwell: tuple = (40.0, 50.0), confusion_prob: float = 0.15,
                   confusion_by_modality: tuple | None = None) -> list:
    """The synthetic benchmark: several independent recordings (families) of
    moderate dwell length, so family-level splits have a stable class mix.

    Uniform per-modality confusion (0.15) caps every single branch near 0.85
    while three independent votes keep the fusion ceiling near 0.94 — the gap
    the modality-benefit criterion measures."""
    from .synth import SynthSpec, synth_generate

    segments = []
    for i in range(recordings):
        spec = SynthSpec(
            seed=cfg.seed * 1000 + i,
            duration=duration,
            wake_dwell_mean=dwell[0],
            sleep_dwell_mean=dwell[1],
            min_dwell=12.0,
            confusion_prob=confusion_prob,
            confusion_by_modality=confusion_by_modality,
        )
        streams, track = synth_generate(spec)
        segments.extend(build_segments(streams, track, cfg, family=f"rec{i}"))
    return segments


def split_segments(segments: list, val_frac: float, test_frac: float, seed: int):
    """(train, val, test). When family ids are present the split is at family
    granularity (families never straddle splits); otherwise it is by
    contiguous time blocks, which keeps temporally adjacent windows together.
    """
    families = sorted({s.family for s in segments if s.family is not None})
    if families:
        order = list(families)
        generator(seed, "family-split").shuffle(order)
        counts = {f: sum(s.family == f for s in segments) for f in families}
        total = len(segments)
        test_set, val_set = set(), set()
        acc = 0
        it = iter(order)
        for f in it:
            test_set.add(f)
            acc += counts[f]
            if acc >= test_frac * total:
                break
        acc = 0
        for f in it:
            val_set.add(f)
            acc += counts[f]
            if acc >= val_frac * total:
                break
        train = [s for s in segments if s.family not in test_set | val_set]
        val = [s for s in segments if s.family in val_set]
        test = [s for s in segments if s.family in test_set]
        return train, val, test
    n = len(segments)
    n_test = int(round(test_frac * n))
    n_val = int(round(val_frac * n))
    n_train = n - n_val - n_test
    return segments[:n_train], segments[n_train : n_train + n_val], segments[n_train + n_val :]


def _lr_at(step: int, total: int, cfg: ExperimentConfig) -> float:
    warmup = max(1, int(cfg.warmup_frac * total))
    if step < warmup:
        return cfg.lr * (step + 1) / warmup
    return cfg.lr


@dataclass
class TrainResult:
    losses: list
    initial_loss: float
    final_loss: float

    @property
    def converged(self) -> bool:
        """Finite and improved: the mean of the last few step losses is below
        the mean of the first few (single batches are too noisy to compare)."""
        if not self.losses or not np.all(np.isfinite(self.losses)):
            return False
        k = max(1, min(10, len(self.losses) // 5))
        return float(np.mean(self.losses[-k:])) < float(np.mean(self.losses[:k]))


def train_model(model: SleepWakeModel, train_segments: list, cfg: ExperimentConfig) -> TrainResult:
    params = model.parameters()
    state = AdamState(lr=cfg.lr)
    drop_rng = generator(cfg.seed, "dropout")
    labels_all = [s.label for s in train_segments]
    if not train_segments:
        raise ValueError("no training segments")

    steps_per_epoch = max(1, len(train_segments) // cfg.batch_size)
    total = cfg.max_steps if cfg.max_steps > 0 else cfg.epochs * steps_per_epoch

    with no_grad():
        init = cross_entropy_logits(
            model.forward(train_segments[: min(len(train_segments), cfg.batch_size)]),
            labels_all[: min(len(labels_all), cfg.batch_size)],
        ).data.item()

    losses = []
    step = 0
    epoch = 0
    while step < total:
        order = np.arange(len(train_segments))
        generator(cfg.seed, "batch-order", epoch).shuffle(order)
        for start in range(0, len(order) - cfg.batch_size + 1, cfg.batch_size):
            if step >= total:
                break
            idx = order[start : start + cfg.batch_size]
            batch = [train_segments[i] for i in idx]
            labels = [train_segments[i].label for i in idx]
            loss = cross_entropy_logits(model.forward(batch, train=True, rng=drop_rng), labels)
            loss.backward()
            adam_step(params, state, lr=_lr_at(step, total, cfg))
            losses.append(loss.data.item())
            step += 1
        epoch += 1
    return TrainResult(losses=losses, initial_loss=init, final_loss=losses[-1] if losses else init)


def evaluate(model: SleepWakeModel, segments: list, batch_size: int = 16):
    """Returns (predictions, labels, mean loss)."""
    preds, losses = [], []
    labels = [s.label for s in segments]
    with no_grad():
        for start in range(0, len(segments), batch_size):
            batch = segments[start : start + batch_size]
            logits = model.forward(batch)
            losses.append(cross_entropy_logits(logits, [s.label for s in batch]).data.item() * len(batch))
            preds.extend(np.argmax(logits.data, axis=1).tolist())
    return np.array(preds), np.array(labels), sum(losses) / max(1, len(segments))


def code_version() -> str:
    try:
        described = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True, text=True, timeout=5, cwd=Path(__file__).parent,
        )
        if described.returncode == 0:
            return f"{__version__}+g{described.stdout.strip()}"
    except OSError:
        pass
    return __version__


def load_pretrained(model: SleepWakeModel, cfg: ExperimentConfig) -> list:
    """Load any configured per-branch pretraining checkpoints; returns the
    modalities that were loaded."""
    loaded = []
    params = model.parameter_dict()
    for m in cfg.branch_tuple:
        path = cfg.pretrained_path(m)
        if path:
            tensors, _ = load_checkpoint(path)
            load_branch(params, tensors, m, source=path)
            loaded.append(m)
    return loaded


def run_finetune(cfg: ExperimentConfig, segments: list, out_dir) -> tuple:
    """Train per config, evaluate on the held-out test split, persist
    checkpoint + report + run log. Returns (checkpoint path, MetricsReport,
    TrainResult)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    started = time.time()

    train_segs, _val_segs, test_segs = split_segments(segments, cfg.val_frac, cfg.test_frac, cfg.seed)
    model = SleepWakeModel(cfg.model_spec(), seed=cfg.seed)
    pretrained = load_pretrained(model, cfg)
    result = train_model(model, train_segs, cfg)
    preds, labels, test_loss = evaluate(model, test_segs, cfg.batch_size)
    metrics = report(confusion(preds, labels))

    ckpt_path = out / "model.lbck"
    save_checkpoint(ckpt_path, {p.name: p.data for p in model.parameters()}, cfg.model_hash())
    (out / "report.txt").write_text(metrics.to_text(confusion(preds, labels)) + "\n")
    (out / "report.json").write_text(metrics.to_json(confusion(preds, labels)) + "\n")
    log = [
        f"version={code_version()}",
        f"started={started:.0f}",
        f"elapsed={time.time() - started:.1f}",
        f"segments={len(segments)} train={len(train_segs)} val={len(_val_segs)} test={len(test_segs)}",
        f"pretrained_loaded={','.join(pretrained) or 'none'}",
        f"initial_loss={result.initial_loss:.6f}",
        f"final_loss={result.final_loss:.6f}",
        f"test_loss={test_loss:.6f}",
        "",
        cfg.to_text(),
    ]
    (out / "run.log").write_text("\n".join(log) + "\n")
    return ckpt_path, metrics, result


def run_pretrain(cfg: ExperimentConfig, segments: list, modality: str, out_path,
                 steps: int = 300, mask_ratio: float = 0.15, span_length: int = 10) -> tuple:
    """Span-mask pretrain one branch and write its weights (including the
    pretraining-only mask vector and reconstruction head) to a checkpoint.
    Returns (path, per-step losses)."""
    from ..pretrain import MaskPlan, PretrainModel

    if not segments:
        raise ValueError("no segments to pretrain on")
    model = PretrainModel(cfg.model_spec(), modality, seed=cfg.seed)
    params = model.parameters()
    state = AdamState(lr=cfg.lr)
    drop_rng = generator(cfg.seed, "pretrain-dropout", modality)
    losses = []
    step = 0
    epoch = 0
    while step < steps:
        order = np.arange(len(segments))
        generator(cfg.seed, "pretrain-order", modality, epoch).shuffle(order)
        for start in range(0, max(len(order) - cfg.batch_size + 1, 1), cfg.batch_size):
            if step >= steps:
                break
            batch = [segments[i] for i in order[start : start + cfg.batch_size]]
            plan = MaskPlan(mask_ratio, span_length, seed=cfg.seed + 7919 * step)
            loss = model.loss(batch, plan, train=True, rng=drop_rng)
            loss.backward()
            adam_step(params, state, lr=_lr_at(step, steps, cfg))
            losses.append(loss.data.item())
            step += 1
        epoch += 1
    save_checkpoint(out_path, {p.name: p.data for p in params}, cfg.model_hash())
    return Path(out_path), losses


def run_eval(cfg: ExperimentConfig, checkpoint_path, segments: list) -> MetricsReport:
    """Evaluate a saved checkpoint on segments; the checkpoint's model hash
    must match the config."""
    from .checkpoint import CheckpointError, load_into

    tensors, stored_hash = load_checkpoint(checkpoint_path)
    if stored_hash and stored_hash != cfg.model_hash():
        raise CheckpointError(
            f"checkpoint {checkpoint_path} was trained with a different model config "
            f"(hash {stored_hash} != {cfg.model_hash()})"
        )
    model = SleepWakeModel(cfg.model_spec(), seed=cfg.seed)
    load_into(model.parameter_dict(), tensors, source=str(checkpoint_path))
    preds, labels, _ = evaluate(model, segments, cfg.batch_size)
    return report(confusion(preds, labels))
