"""Ablation suites: layer schedules, pretraining subsets, and fusion modes.

Each suite runs a grid of configs on the same data and emits one metrics row
per cell, formatted like the comparison tables the rows mirror. A cell whose
run does not converge (non-finite loss, or no improvement over the initial
loss) is reported as "-" rather than dropped.
"""

from dataclasses import dataclass, replace
from pathlib import Path

from ..metrics import MetricsReport
from ..sync import MODALITIES
from .config import ExperimentConfig
from .experiment import run_finetune, run_pretrain

SCHEDULE_SUITE = ("none", "mod2", "mod4", "mod6", "first4", "mid4", "last4")
PRETRAIN_SUITE = (
    ("none", ()),
    ("imu", ("imu",)),
    ("audio+imu", ("audio", "imu")),
    ("ecg+imu", ("ecg", "imu")),
    ("all", ("audio", "ecg", "imu")),
)
FUSION_SUITE = ("early", "late", "cross")

SUITES = ("schedules", "pretraining", "fusion-modes")


@dataclass
class AblationRow:
    name: str
    metrics: MetricsReport | None  # None = did not converge


@dataclass
class AblationTable:
    suite: str
    rows: list

    def format_table(self) -> str:
        headers = ("Accuracy", "Precision", "Recall", "F1", "Kappa")
        width = max(len(r.name) for r in self.rows) + 2
        lines = [self.suite.ljust(width) + "".join(h.rjust(11) for h in headers)]
        for row in self.rows:
            if row.metrics is None:
                cells = ["-"] * 5
            else:
                m = row.metrics
                cells = [
                    "-" if v is None else f"{v:.3f}"
                    for v in (m.accuracy, m.precision, m.recall, m.f1, m.kappa)
                ]
            lines.append(row.name.ljust(width) + "".join(c.rjust(11) for c in cells))
        return "\n".join(lines)


def _cell(cfg: ExperimentConfig, segments, out_dir, name) -> AblationRow:
    try:
        _, metrics, result = run_finetune(cfg, segments, Path(out_dir) / name)
        if not result.converged:
            return AblationRow(name, None)
        return AblationRow(name, metrics)
    except (ArithmeticError, FloatingPointError):
        return AblationRow(name, None)


def run_ablation(suite: str, base: ExperimentConfig, segments: list, out_dir,
                 pretrain_steps: int = 300) -> AblationTable:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    if suite == "schedules":
        rows = []
        for name in SCHEDULE_SUITE:
            cfg = replace(base, mode="cross", schedule=name)
            rows.append(_cell(cfg, segments, out, name))
        return AblationTable(suite, rows)

    if suite == "pretraining":
        ckpts = {}
        for m in MODALITIES:
            path, _ = run_pretrain(base, _train_only(base, segments), m, out / f"pretrain_{m}.lbck",
                                   steps=pretrain_steps)
            ckpts[m] = str(path)
        rows = []
        for name, loaded in PRETRAIN_SUITE:
            cfg = replace(
                base,
                mode="cross",
                pretrained_audio=ckpts["audio"] if "audio" in loaded else "",
                pretrained_ecg=ckpts["ecg"] if "ecg" in loaded else "",
                pretrained_imu=ckpts["imu"] if "imu" in loaded else "",
            )
            rows.append(_cell(cfg, segments, out, name.replace("+", "_")))
        table = AblationTable(suite, rows)
        for row, (name, _) in zip(table.rows, PRETRAIN_SUITE):
            row.name = name
        return table

    if suite == "fusion-modes":
        rows = []
        for mode in FUSION_SUITE:
            cfg = replace(base, mode=mode, schedule="mod4" if mode == "cross" else "none")
            rows.append(_cell(cfg, segments, out, mode))
        return AblationTable(suite, rows)

    raise ValueError(f"unknown suite {suite!r}; choose from {', '.join(SUITES)}")


def _train_only(cfg: ExperimentConfig, segments: list) -> list:
    """Pretraining must never see held-out data; reuse the finetune split."""
    from .experiment import split_segments

    train, _, _ = split_segments(segments, cfg.val_frac, cfg.test_frac, cfg.seed)
    return train
