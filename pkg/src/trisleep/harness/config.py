"""Experiment configuration: flat key=value text files plus two presets.

``paper`` is the full-size architecture (12 layers, 768/768/72, 16 kHz audio
and ECG, 30 s windows). ``toy`` keeps the same structure at desk scale
(2 layers, 16/16/8, 2 kHz, 2 s windows) so a full train/eval cycle takes tens
of seconds on a CPU. Every field lands in the run log; nothing defaulted here
masquerades as a published value.
"""

import hashlib
from dataclasses import dataclass, fields, replace

from ..fusion import SCHEDULE_NAMES, ModelSpec
from ..sync import MODALITIES


class ConfigError(ValueError):
    """Config file or field values are invalid."""


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    scale: str = "toy"  # toy | paper
    mode: str = "cross"  # cross | early | late | single
    branches: str = "audio,ecg,imu"
    schedule: str = "mod4"
    epochs: int = 2
    batch_size: int = 16
    max_steps: int = 0  # 0 = run the full epochs
    lr: float = 1e-4
    warmup_frac: float = 0.1
    window_seconds: float = 30.0
    audio_rate: int = 16000
    ecg_rate: int = 16000
    imu_rate: int = 150
    head_dropout: float = 0.1
    encoder_dropout: float = 0.0
    val_frac: float = 0.1
    test_frac: float = 0.2
    pretrained_audio: str = ""
    pretrained_ecg: str = ""
    pretrained_imu: str = ""

    def __post_init__(self):
        if self.scale not in ("toy", "paper"):
            raise ConfigError(f"scale must be toy or paper, got {self.scale!r}")
        if self.schedule not in SCHEDULE_NAMES:
            raise ConfigError(f"unknown schedule {self.schedule!r}")
        for m in self.branch_tuple:
            if m not in MODALITIES:
                raise ConfigError(f"unknown modality {m!r} in branches")
        if self.mode == "single" and len(self.branch_tuple) != 1:
            raise ConfigError("mode=single needs exactly one branch")
        if self.mode != "single" and len(self.branch_tuple) != 3:
            raise ConfigError(f"mode={self.mode} needs branches=audio,ecg,imu")

    @property
    def branch_tuple(self) -> tuple:
        return tuple(s.strip() for s in self.branches.split(",") if s.strip())

    def model_spec(self) -> ModelSpec:
        build = ModelSpec.paper if self.scale == "paper" else ModelSpec.toy
        spec = build(mode=self.mode, schedule=self.schedule, branches=self.branch_tuple,
                     dropout=self.encoder_dropout)
        return replace(spec, head_dropout=self.head_dropout)

    def pretrained_path(self, modality: str) -> str:
        return getattr(self, f"pretrained_{modality}")

    def to_text(self) -> str:
        return "\n".join(f"{f.name}={getattr(self, f.name)}" for f in fields(self))

    def model_hash(self) -> str:
        """Hash of the fields that determine parameter shapes; stored in
        checkpoints so eval refuses a config that cannot match."""
        keys = ("scale", "mode", "branches", "schedule", "head_dropout", "encoder_dropout")
        text = "|".join(f"{k}={getattr(self, k)}" for k in keys)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


_BOOL = {"true": True, "false": False, "1": True, "0": False}


def _coerce(name: str, kind, raw: str):
    try:
        if kind is bool:
            return _BOOL[raw.lower()]
        return kind(raw)
    except (ValueError, KeyError):
        raise ConfigError(f"config field {name!r}: cannot parse {raw!r} as {kind.__name__}")


def _field_types() -> dict:
    named = {"int": int, "str": str, "float": float, "bool": bool}
    out = {}
    for f in fields(ExperimentConfig):
        out[f.name] = named.get(f.type, f.type) if isinstance(f.type, str) else f.type
    return out


def parse_config_text(text: str, overrides: dict | None = None) -> ExperimentConfig:
    known = _field_types()
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        values[key] = _coerce(key, known[key], raw)
    for key, value in (overrides or {}).items():
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        values[key] = _coerce(key, known[key], value) if isinstance(value, str) else value
    if "seed" not in values:
        raise ConfigError("seed is mandatory")
    return ExperimentConfig(**values)


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    with open(path) as f:
        return parse_config_text(f.read(), overrides)


def toy_config(seed: int, **overrides) -> ExperimentConfig:
    base = dict(
        seed=seed,
        scale="toy",
        batch_size=8,
        max_steps=400,
        lr=5e-4,
        window_seconds=2.0,
        audio_rate=2000,
        ecg_rate=2000,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


def paper_config(seed: int, **overrides) -> ExperimentConfig:
    return ExperimentConfig(seed=seed, scale="paper", **overrides)
