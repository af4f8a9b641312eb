"""Span-masked reconstruction pretraining for a single branch.

Contiguous spans of front-end frames are replaced by one learned mask vector;
the branch encoder plus a linear reconstruction head must recover the raw
signal content at exactly the masked positions (mean squared error). Targets
are fixed functions of the input — the raw IMU frame, or a tap vector of the
waveform under each conv frame — never the learned features themselves, so
the front end cannot win by collapsing to trivially predictable features.

The reconstruction head and the mask vector are pretraining-only weights; the
front end and transformer layers are what finetuning loads.
"""

from dataclasses import dataclass, replace

import numpy as np

from .encoder import Branch, branch_forward
from .features import ConvFeatureExtractor, ImuFrontend, add_positional
from .fusion import ModelSpec
from .numcore import Parameter, Tensor, matmul, take_rows
from .numcore.random import generator
from .sync import AUDIO, IMU, Segment


class MaskPlanError(ValueError):
    """Sequence too short for the requested span masking."""


@dataclass(frozen=True)
class MaskPlan:
    mask_ratio: float = 0.15
    span_length: int = 10
    seed: int = 0


def plan_spans(n: int, plan: MaskPlan) -> np.ndarray:
    """Choose masked frame indices: disjoint full-length spans, placed until
    coverage reaches round(mask_ratio * n). Deterministic given plan.seed."""
    span = plan.span_length
    if n <= span:
        raise MaskPlanError(f"sequence of {n} frames is not longer than span_length {span}")
    target = int(round(plan.mask_ratio * n))
    indices = np.zeros(n, dtype=bool)
    if target == 0:
        return np.flatnonzero(indices)
    rng = generator(plan.seed, "span-mask", n)
    count = 0
    while count < target:
        placed = False
        for _ in range(64):
            start = int(rng.integers(0, n - span + 1))
            if not indices[start : start + span].any():
                indices[start : start + span] = True
                count += span
                placed = True
                break
        if not placed:
            gap = next((i for i in range(n - span + 1) if not indices[i : i + span].any()), None)
            if gap is None:
                break
            indices[gap : gap + span] = True
            count += span
    return np.flatnonzero(indices)


def span_mask(features: Tensor, plan: MaskPlan, mask_vector: Tensor) -> tuple:
    """Replace planned spans with the (learned) mask vector.

    Returns (masked features, masked indices). mask_ratio 0 returns the input
    untouched with an empty index set."""
    n = features.shape[0]
    idx = plan_spans(n, plan)
    if idx.size == 0:
        return features, idx
    keep = np.ones((n, 1), dtype=np.float32)
    keep[idx] = 0.0
    keep_t = Tensor(keep)
    masked = features * keep_t + mask_vector * (Tensor(1.0 - keep))
    return masked, idx


def masked_mse(recon: Tensor, target: Tensor, idx: np.ndarray) -> Tensor:
    """Mean squared error over masked rows only; empty mask contributes 0."""
    if idx.size == 0:
        return Tensor(np.zeros(()))
    diff = take_rows(recon, idx) - take_rows(target, idx)
    return (diff * diff).mean()


WAVE_TARGET_TAPS = 8


class PretrainModel:
    """One branch plus its reconstruction-only weights."""

    def __init__(self, spec: ModelSpec, modality: str, seed: int):
        cfg = spec.branch_config(modality)
        if modality == IMU:
            frontend = ImuFrontend(spec.imu_frontend, f"{modality}.frontend", seed)
            target_dim = spec.imu_frontend.in_channels
        else:
            conv_cfg = spec.audio_conv if modality == AUDIO else spec.ecg_conv
            frontend = ConvFeatureExtractor(conv_cfg, f"{modality}.frontend", seed)
            target_dim = WAVE_TARGET_TAPS
        self.modality = modality
        self.branch = Branch(cfg, frontend, seed)
        d = cfg.embed_dim
        rng = generator(seed, "init", f"{modality}.pretrain.mask")
        self.mask_vector = Parameter(rng.normal(0.0, 0.02, size=d), f"{modality}.pretrain.mask")
        rng = generator(seed, "init", f"{modality}.pretrain.recon.weight")
        self.recon_w = Parameter(
            rng.normal(0.0, d**-0.5, size=(d, target_dim)), f"{modality}.pretrain.recon.weight"
        )
        self.recon_b = Parameter(np.zeros(target_dim), f"{modality}.pretrain.recon.bias")

    def parameters(self) -> list:
        return self.branch.parameters() + [self.mask_vector, self.recon_w, self.recon_b]

    def _features(self, seg: Segment) -> Tensor:
        """Front-end features before the positional encoding."""
        if self.modality == IMU:
            return self.branch.frontend.project(Tensor(seg.imu))
        wave = seg.audio if self.modality == AUDIO else seg.ecg
        return self.branch.frontend.forward(Tensor(wave))

    def _targets(self, seg: Segment, n_frames: int) -> Tensor:
        """Fixed per-frame reconstruction targets taken from the raw signal."""
        if self.modality == IMU:
            return Tensor(seg.imu.T[:n_frames])
        wave = (seg.audio if self.modality == AUDIO else seg.ecg)[0]
        stride = int(np.prod(self.branch.frontend.cfg.strides))
        taps = np.arange(WAVE_TARGET_TAPS) * (stride // WAVE_TARGET_TAPS)
        idx = np.minimum(np.arange(n_frames)[:, None] * stride + taps[None, :], len(wave) - 1)
        return Tensor(wave[idx])

    def loss(self, segments: list, plan: MaskPlan, train: bool = False, rng=None) -> Tensor:
        """Mean masked-reconstruction MSE over a batch of segments."""
        if not segments:
            raise ValueError("empty pretraining batch")
        total = Tensor(np.zeros(()))
        for j, seg in enumerate(segments):
            feats = self._features(seg)
            seg_plan = replace(plan, seed=plan.seed * 65537 + j)
            masked, idx = span_mask(feats, seg_plan, self.mask_vector)
            h = branch_forward(self.branch, add_positional(masked), train=train, rng=rng)
            recon = matmul(h, self.recon_w) + self.recon_b
            total = total + masked_mse(recon, self._targets(seg, feats.shape[0]), idx)
        return total * (1.0 / len(segments))
