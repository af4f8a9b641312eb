"""Per-branch front ends.

Audio and ECG waveforms go through a stack of strided valid convolutions
(each followed by layer norm and GELU) and a linear projection to the branch
embedding size; the default stack downsamples by 320x, i.e. 16 kHz in, ~50
frames/s out. IMU goes through a per-timestep linear projection, layer norm,
and positional embedding. Positional encodings are deterministic sinusoids so
every branch shares one scheme.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .numcore import Parameter, Tensor, conv1d, layer_norm, matmul
from .numcore.random import generator


class FrontendInputError(ValueError):
    """Input waveform/stream does not satisfy the front end's contract."""


@dataclass(frozen=True)
class ConvExtractorConfig:
    channels: int = 512
    kernels: tuple = (10, 3, 3, 3, 3, 2, 2)
    strides: tuple = (5, 2, 2, 2, 2, 2, 2)
    out_dim: int = 768

    def __post_init__(self):
        if len(self.kernels) != len(self.strides):
            raise ValueError("kernel and stride lists must have equal length")
        if len(self.kernels) != 7 or int(np.prod(self.strides)) != 320:
            raise ValueError("extractor stack must be 7 layers with total stride 320")

    def output_length(self, t: int) -> int:
        for k, s in zip(self.kernels, self.strides):
            t = (t - k) // s + 1
        return t

    @property
    def min_input_length(self) -> int:
        t = 1
        for k, s in zip(reversed(self.kernels), reversed(self.strides)):
            t = (t - 1) * s + k
        return t


@dataclass(frozen=True)
class ImuFrontendConfig:
    in_channels: int = 6
    out_dim: int = 72
    max_positions: int = 4500

    def __post_init__(self):
        if self.max_positions < 1:
            raise ValueError("max_positions must be positive")


@lru_cache(maxsize=32)
def _sinusoid_table(n: int, dim: int) -> np.ndarray:
    position = np.arange(n)[:, None]
    half = (dim + 1) // 2
    freq = np.exp(-np.log(10000.0) * (np.arange(half) / half))
    angles = position * freq[None, :]
    table = np.zeros((n, 2 * half), dtype=np.float64)
    table[:, 0::2] = np.sin(angles)
    table[:, 1::2] = np.cos(angles)
    return table[:, :dim]


def add_positional(x: Tensor) -> Tensor:
    """Add the sinusoidal position encoding; position 0 contributes
    sin components 0 and cos components 1."""
    n, dim = x.shape
    return x + Tensor(_sinusoid_table(n, dim))


def _init(seed: int, name: str, shape, fan_in: int) -> Parameter:
    rng = generator(seed, "init", name)
    return Parameter(rng.normal(0.0, fan_in**-0.5, size=shape), name)


class ConvFeatureExtractor:
    """Waveform (1, T) -> frame features (N, out_dim)."""

    def __init__(self, cfg: ConvExtractorConfig, name: str, seed: int):
        self.cfg = cfg
        self.kernels = []
        self.norms = []
        c_in = 1
        for i, (k, _) in enumerate(zip(cfg.kernels, cfg.strides)):
            self.kernels.append(_init(seed, f"{name}.conv{i}.kernel", (cfg.channels, c_in, k), c_in * k))
            gamma = Parameter(np.ones(cfg.channels), f"{name}.conv{i}.norm.gamma")
            beta = Parameter(np.zeros(cfg.channels), f"{name}.conv{i}.norm.beta")
            self.norms.append((gamma, beta))
            c_in = cfg.channels
        self.proj_w = _init(seed, f"{name}.proj.weight", (cfg.channels, cfg.out_dim), cfg.channels)
        self.proj_b = Parameter(np.zeros(cfg.out_dim), f"{name}.proj.bias")

    def parameters(self) -> list:
        out = list(self.kernels)
        for gamma, beta in self.norms:
            out += [gamma, beta]
        return out + [self.proj_w, self.proj_b]

    def forward(self, wave: Tensor) -> Tensor:
        if wave.ndim != 2 or wave.shape[0] != 1:
            raise FrontendInputError(f"expected a (1, T) waveform, got {wave.shape}")
        if wave.shape[1] < self.cfg.min_input_length:
            raise FrontendInputError(
                f"waveform of {wave.shape[1]} samples is shorter than the receptive field "
                f"({self.cfg.min_input_length})"
            )
        x = wave
        for kernel, stride, (gamma, beta) in zip(self.kernels, self.cfg.strides, self.norms):
            x = conv1d(x, kernel, stride=stride)
            x = layer_norm(x.T, gamma, beta).gelu().T
        return matmul(x.T, self.proj_w) + self.proj_b


class ImuFrontend:
    """IMU frames (channels, N) -> embedded sequence (N, out_dim),
    positional encoding included."""

    def __init__(self, cfg: ImuFrontendConfig, name: str, seed: int):
        self.cfg = cfg
        self.proj_w = _init(seed, f"{name}.proj.weight", (cfg.in_channels, cfg.out_dim), cfg.in_channels)
        self.proj_b = Parameter(np.zeros(cfg.out_dim), f"{name}.proj.bias")
        self.norm_gamma = Parameter(np.ones(cfg.out_dim), f"{name}.norm.gamma")
        self.norm_beta = Parameter(np.zeros(cfg.out_dim), f"{name}.norm.beta")

    def parameters(self) -> list:
        return [self.proj_w, self.proj_b, self.norm_gamma, self.norm_beta]

    def project(self, imu: Tensor) -> Tensor:
        """Linear map and norm only (the feature-extractor half)."""
        if imu.ndim != 2 or imu.shape[0] != self.cfg.in_channels:
            raise FrontendInputError(
                f"expected ({self.cfg.in_channels}, N) IMU input, got {imu.shape}"
            )
        if imu.shape[1] > self.cfg.max_positions:
            raise FrontendInputError(
                f"{imu.shape[1]} IMU frames exceed max_positions {self.cfg.max_positions}"
            )
        x = matmul(imu.T, self.proj_w) + self.proj_b
        return layer_norm(x, self.norm_gamma, self.norm_beta)

    def forward(self, imu: Tensor) -> Tensor:
        return add_positional(self.project(imu))
