"""Cross-modal fusion and the full sleep/wake classifier.

The trimodal model runs its three branches in lockstep: every branch finishes
layer i before any branch starts layer i+1, so a cross-attention layer can
consume the other two branches' layer-(i-1) hidden states. At a cross layer,
each peer state is resampled to the target branch's frame count, linearly
projected to its embedding size, and the two results are collapsed to one
channel by a trainable 2-vector mixer; the fused tensor serves as both key
and value.

Early fusion pools the raw feature-extractor outputs (no transformer layers);
late fusion runs self-attention-only branches to per-branch logits and
averages them.
"""

from dataclasses import dataclass, field

import numpy as np

from .encoder import Branch, BranchConfig, branch_forward
from .features import (
    ConvExtractorConfig,
    ConvFeatureExtractor,
    ImuFrontend,
    ImuFrontendConfig,
    add_positional,
)
from .numcore import Parameter, Tensor, concat, dropout, matmul, time_interp
from .numcore.random import generator
from .sync import AUDIO, ECG, IMU, MODALITIES, Segment


class FusionInputError(ValueError):
    """A fusion op received an empty or mis-sized input."""


# ---- layer schedules ---------------------------------------------------------


@dataclass(frozen=True)
class Schedule:
    """Selects which layer indices use cross-attention."""

    name: str

    def layers(self, num_layers: int) -> frozenset:
        pred = _SCHEDULE_PREDICATES[self.name]
        return frozenset(i for i in range(num_layers) if pred(i))


_SCHEDULE_PREDICATES = {
    "none": lambda i: False,
    "mod2": lambda i: i % 2 == 1,
    "mod4": lambda i: i % 4 == 1,
    "mod6": lambda i: i % 6 == 1,
    "first4": lambda i: 0 <= i < 4,
    "mid4": lambda i: 4 <= i < 8,
    "last4": lambda i: 8 <= i < 12,
}

SCHEDULE_NAMES = tuple(_SCHEDULE_PREDICATES)


def schedule_preset(name: str) -> Schedule:
    if name not in _SCHEDULE_PREDICATES:
        raise ValueError(f"unknown schedule {name!r}; choose from {', '.join(SCHEDULE_NAMES)}")
    return Schedule(name)


# ---- pooling -----------------------------------------------------------------


def mean_pool(x: Tensor) -> Tensor:
    """Arithmetic mean over the time axis: (N, L) -> (L,)."""
    if x.shape[0] < 1:
        raise FusionInputError("cannot pool an empty sequence")
    return x.mean(axis=0)


def average_logits(per_branch: list) -> Tensor:
    """Arithmetic mean of per-branch logit tensors (late fusion)."""
    if not per_branch:
        raise FusionInputError("no logits to average")
    total = per_branch[0]
    for logits in per_branch[1:]:
        total = total + logits
    return total * (1.0 / len(per_branch))


# ---- cross-modal key/value construction ----------------------------------------


class CrossKV:
    """Fused key/value builder for one target branch at one layer.

    Each of the two peer branches gets its own projection (embedding map plus
    temporal resampling); the mixer is the trainable 2-vector collapsing the
    stacked pair to one channel.
    """

    def __init__(self, target: str, sources: tuple, dims: dict, layer: int, seed: int):
        self.target = target
        self.sources = sources
        d_k = dims[target]
        prefix = f"{target}.layer{layer}.cross"
        self.proj = {}
        for src in sources:
            rng = generator(seed, "init", f"{prefix}.{src}.weight")
            w = Parameter(rng.normal(0.0, dims[src] ** -0.5, size=(dims[src], d_k)), f"{prefix}.{src}.weight")
            b = Parameter(np.zeros(d_k), f"{prefix}.{src}.bias")
            self.proj[src] = (w, b)
        self.mixer = Parameter(np.array([0.5, 0.5]), f"{prefix}.mixer")

    def parameters(self) -> list:
        out = []
        for src in self.sources:
            out.extend(self.proj[src])
        return out + [self.mixer]

    def build(self, h_by_source: dict, n_target: int) -> Tensor:
        """Project both peers to (n_target, d_target) and mix to one channel."""
        projected = []
        for src in self.sources:
            h = h_by_source[src]
            if h.shape[0] < 1:
                raise FusionInputError(f"cross source {src} is empty")
            w, b = self.proj[src]
            p = matmul(time_interp(h, n_target), w) + b
            projected.append(p.reshape(1, n_target, w.shape[1]))
        stacked = concat(projected, axis=0)
        return (stacked * self.mixer.reshape(2, 1, 1)).sum(axis=0)


# ---- classification head --------------------------------------------------------


class ClassifierHead:
    """linear d->d, ReLU, linear d->d/2, dropout, linear d/2->2."""

    def __init__(self, in_dim: int, name: str, seed: int, dropout_rate: float = 0.1):
        mid = in_dim // 2
        self.dropout_rate = dropout_rate

        def lin(tag, a, b):
            rng = generator(seed, "init", f"{name}.{tag}.weight")
            w = Parameter(rng.normal(0.0, a**-0.5, size=(a, b)), f"{name}.{tag}.weight")
            return w, Parameter(np.zeros(b), f"{name}.{tag}.bias")

        self.w1, self.b1 = lin("fc1", in_dim, in_dim)
        self.w2, self.b2 = lin("fc2", in_dim, mid)
        self.w3, self.b3 = lin("fc3", mid, 2)

    def parameters(self) -> list:
        return [self.w1, self.b1, self.w2, self.b2, self.w3, self.b3]

    def forward(self, x: Tensor, train: bool = False, rng=None) -> Tensor:
        x = (matmul(x, self.w1) + self.b1).relu()
        x = matmul(x, self.w2) + self.b2
        if train and self.dropout_rate > 0.0:
            x = dropout(x, self.dropout_rate, rng)
        return matmul(x, self.w3) + self.b3


# ---- the model --------------------------------------------------------------------


MODES = ("cross", "early", "late", "single")


@dataclass(frozen=True)
class ModelSpec:
    audio: BranchConfig
    ecg: BranchConfig
    imu: BranchConfig
    audio_conv: ConvExtractorConfig
    ecg_conv: ConvExtractorConfig
    imu_frontend: ImuFrontendConfig
    mode: str = "cross"
    schedule: Schedule = field(default_factory=lambda: Schedule("none"))
    branches: tuple = MODALITIES
    head_dropout: float = 0.1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "single":
            if len(self.branches) != 1:
                raise ValueError("single mode needs exactly one branch")
        elif tuple(self.branches) != MODALITIES:
            raise ValueError(f"mode {self.mode} requires all three branches")
        if self.mode == "cross":
            depths = {self.branch_config(m).num_layers for m in self.branches}
            if len(depths) != 1:
                raise ValueError("cross mode requires equal layer counts across branches")

    def branch_config(self, modality: str) -> BranchConfig:
        return {AUDIO: self.audio, ECG: self.ecg, IMU: self.imu}[modality]

    @classmethod
    def paper(cls, mode: str = "cross", schedule: str = "mod4", branches: tuple = MODALITIES,
              dropout: float = 0.0) -> "ModelSpec":
        return cls(
            audio=BranchConfig(AUDIO, 12, 768, 16, 3072, dropout),
            ecg=BranchConfig(ECG, 12, 768, 16, 3072, dropout),
            imu=BranchConfig(IMU, 12, 72, 4, 144, dropout),
            audio_conv=ConvExtractorConfig(512, out_dim=768),
            ecg_conv=ConvExtractorConfig(512, out_dim=768),
            imu_frontend=ImuFrontendConfig(6, 72, 4500),
            mode=mode,
            schedule=schedule_preset(schedule),
            branches=branches,
        )

    @classmethod
    def toy(cls, mode: str = "cross", schedule: str = "mod4", branches: tuple = MODALITIES,
            num_layers: int = 2, dropout: float = 0.0) -> "ModelSpec":
        return cls(
            audio=BranchConfig(AUDIO, num_layers, 16, 2, 64, dropout),
            ecg=BranchConfig(ECG, num_layers, 16, 2, 64, dropout),
            imu=BranchConfig(IMU, num_layers, 8, 2, 16, dropout),
            audio_conv=ConvExtractorConfig(8, out_dim=16),
            ecg_conv=ConvExtractorConfig(8, out_dim=16),
            imu_frontend=ImuFrontendConfig(6, 8, 4500),
            mode=mode,
            schedule=schedule_preset(schedule),
            branches=branches,
        )


def _peers(modality: str) -> tuple:
    return tuple(m for m in MODALITIES if m != modality)


class SleepWakeModel:
    """Complete classifier. Which components exist depends on the fusion mode:
    early mode never builds transformer layers, late mode builds one head per
    branch, cross mode adds the fused key/value weights at scheduled layers."""

    def __init__(self, spec: ModelSpec, seed: int):
        self.spec = spec
        self.seed = seed
        self.branches = {}
        for m in spec.branches:
            cfg = spec.branch_config(m)
            if m == IMU:
                frontend = ImuFrontend(spec.imu_frontend, f"{m}.frontend", seed)
            else:
                conv_cfg = spec.audio_conv if m == AUDIO else spec.ecg_conv
                frontend = ConvFeatureExtractor(conv_cfg, f"{m}.frontend", seed)
            self.branches[m] = Branch(cfg, frontend, seed, with_layers=spec.mode != "early")

        self.cross = {}
        if spec.mode == "cross" and len(spec.branches) == 3:
            dims = {m: spec.branch_config(m).embed_dim for m in MODALITIES}
            num_layers = spec.branch_config(AUDIO).num_layers
            for m in MODALITIES:
                for i in sorted(spec.schedule.layers(num_layers)):
                    self.cross[(m, i)] = CrossKV(m, _peers(m), dims, i, seed)

        total_dim = sum(spec.branch_config(m).embed_dim for m in spec.branches)
        if spec.mode == "late":
            self.heads = {
                m: ClassifierHead(spec.branch_config(m).embed_dim, f"head.{m}", seed, spec.head_dropout)
                for m in spec.branches
            }
            self.head = None
        else:
            self.head = ClassifierHead(total_dim, "head", seed, spec.head_dropout)
            self.heads = None

        names = [p.name for p in self.parameters()]
        if len(names) != len(set(names)):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise ValueError(f"duplicate parameter names: {dupes}")

    def parameters(self) -> list:
        out = []
        for m in self.spec.branches:
            out += self.branches[m].parameters()
        for key in sorted(self.cross):
            out += self.cross[key].parameters()
        if self.head is not None:
            out += self.head.parameters()
        if self.heads is not None:
            for m in self.spec.branches:
                out += self.heads[m].parameters()
        return out

    def parameter_dict(self) -> dict:
        return {p.name: p for p in self.parameters()}

    # ---- per-segment building blocks ----

    def _embed(self, seg: Segment, modality: str) -> Tensor:
        """Front-end features with positional encoding: encoder input."""
        if modality == IMU:
            return self.branches[IMU].frontend.forward(Tensor(seg.imu))
        wave = seg.audio if modality == AUDIO else seg.ecg
        return add_positional(self.branches[modality].frontend.forward(Tensor(wave)))

    def _extract(self, seg: Segment, modality: str) -> Tensor:
        """Raw feature-extractor output, no positional encoding (early fusion)."""
        if modality == IMU:
            return self.branches[IMU].frontend.project(Tensor(seg.imu))
        wave = seg.audio if modality == AUDIO else seg.ecg
        return self.branches[modality].frontend.forward(Tensor(wave))

    def _lockstep(self, seg: Segment, train: bool, rng) -> dict:
        """Advance all three branches layer by layer, fusing at cross layers."""
        h = {m: self._embed(seg, m) for m in MODALITIES}
        num_layers = self.spec.branch_config(AUDIO).num_layers
        cross_set = self.spec.schedule.layers(num_layers)
        for i in range(num_layers):
            prev = h
            h = {}
            for m in MODALITIES:
                layer = self.branches[m].layers[i]
                if i in cross_set:
                    kv = self.cross[(m, i)].build(
                        {src: prev[src] for src in _peers(m)}, prev[m].shape[0]
                    )
                    h[m] = layer.forward(prev[m], kv=kv, train=train, rng=rng)
                else:
                    h[m] = layer.forward(prev[m], train=train, rng=rng)
        return h

    # ---- mode forwards ----

    def forward(self, segments: list, train: bool = False, rng=None) -> Tensor:
        """Batch of segments -> logits (B, 2)."""
        if not segments:
            raise FusionInputError("empty batch")
        if train and rng is None:
            rng = generator(self.seed, "dropout")
        mode = self.spec.mode
        if mode == "cross":
            return self._forward_cross(segments, train, rng)
        if mode == "early":
            return self._forward_early(segments, train, rng)
        if mode == "late":
            return self._forward_late(segments, train, rng)
        return self._forward_single(segments, train, rng)

    def _forward_cross(self, segments, train, rng) -> Tensor:
        rows = []
        for seg in segments:
            h = self._lockstep(seg, train, rng)
            pooled = concat([mean_pool(h[m]).reshape(1, -1) for m in MODALITIES], axis=1)
            rows.append(pooled)
        return self.head.forward(concat(rows, axis=0), train=train, rng=rng)

    def _forward_early(self, segments, train, rng) -> Tensor:
        rows = []
        for seg in segments:
            pooled = concat(
                [mean_pool(self._extract(seg, m)).reshape(1, -1) for m in MODALITIES], axis=1
            )
            rows.append(pooled)
        return self.head.forward(concat(rows, axis=0), train=train, rng=rng)

    def _forward_late(self, segments, train, rng) -> Tensor:
        per_branch = []
        for m in MODALITIES:
            rows = []
            for seg in segments:
                x = branch_forward(self.branches[m], self._embed(seg, m), train=train, rng=rng)
                rows.append(mean_pool(x).reshape(1, -1))
            logits = self.heads[m].forward(concat(rows, axis=0), train=train, rng=rng)
            per_branch.append(logits)
        return average_logits(per_branch)

    def _forward_single(self, segments, train, rng) -> Tensor:
        (m,) = self.spec.branches
        rows = []
        for seg in segments:
            x = branch_forward(self.branches[m], self._embed(seg, m), train=train, rng=rng)
            rows.append(mean_pool(x).reshape(1, -1))
        return self.head.forward(concat(rows, axis=0), train=train, rng=rng)
