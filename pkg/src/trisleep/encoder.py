"""Transformer branch: multi-head attention layers with post-norm residuals.

A layer attends from its own hidden state (query) to a key/value source that
is either the same state (self-attention) or a fused cross-modal embedding
supplied by the caller (cross-attention) — the composition is identical either
way, so cross-attention with the branch's own state as the source reduces to
self-attention bit for bit.

The attention logits are scaled by 1/sqrt(embed_dim). The conventional
per-head 1/sqrt(head_dim) scaling is available behind a config flag,
default off.
"""

import math
from dataclasses import dataclass

import numpy as np

from .numcore import Parameter, Tensor, dropout, layer_norm, matmul, softmax_rows
from .numcore.random import generator


class EncoderConfigError(ValueError):
    """Layer schedule and inputs are inconsistent."""


@dataclass(frozen=True)
class BranchConfig:
    modality: str
    num_layers: int = 12
    embed_dim: int = 768
    num_heads: int = 16
    ff_dim: int = 3072
    dropout: float = 0.0
    conventional_scale: bool = False

    def __post_init__(self):
        if self.num_layers < 1:
            raise ValueError("num_layers must be >= 1")
        if self.embed_dim % self.num_heads != 0:
            raise ValueError(f"embed_dim {self.embed_dim} not divisible by num_heads {self.num_heads}")

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.num_heads

    @property
    def attention_scale(self) -> float:
        d = self.head_dim if self.conventional_scale else self.embed_dim
        return 1.0 / math.sqrt(d)


def _linear(seed, name, d_in, d_out):
    rng = generator(seed, "init", name + ".weight")
    w = Parameter(rng.normal(0.0, d_in**-0.5, size=(d_in, d_out)), name + ".weight")
    b = Parameter(np.zeros(d_out), name + ".bias")
    return w, b


class TransformerLayer:
    def __init__(self, cfg: BranchConfig, name: str, seed: int):
        self.cfg = cfg
        d, ff = cfg.embed_dim, cfg.ff_dim
        self.wq, self.bq = _linear(seed, f"{name}.attn.q", d, d)
        self.wk, self.bk = _linear(seed, f"{name}.attn.k", d, d)
        self.wv, self.bv = _linear(seed, f"{name}.attn.v", d, d)
        self.wo, self.bo = _linear(seed, f"{name}.attn.out", d, d)
        self.ln1_g = Parameter(np.ones(d), f"{name}.norm1.gamma")
        self.ln1_b = Parameter(np.zeros(d), f"{name}.norm1.beta")
        self.ff1_w, self.ff1_b = _linear(seed, f"{name}.ff.in", d, ff)
        self.ff2_w, self.ff2_b = _linear(seed, f"{name}.ff.out", ff, d)
        self.ln2_g = Parameter(np.ones(d), f"{name}.norm2.gamma")
        self.ln2_b = Parameter(np.zeros(d), f"{name}.norm2.beta")

    def parameters(self) -> list:
        return [
            self.wq, self.bq, self.wk, self.bk, self.wv, self.bv, self.wo, self.bo,
            self.ln1_g, self.ln1_b, self.ff1_w, self.ff1_b, self.ff2_w, self.ff2_b,
            self.ln2_g, self.ln2_b,
        ]

    def attention_weights(self, x: Tensor, kv: Tensor | None = None) -> Tensor:
        """(heads, N, N_kv) attention matrix; rows sum to 1."""
        kv = x if kv is None else kv
        h, d = self.cfg.num_heads, self.cfg.head_dim
        q = (matmul(x, self.wq) + self.bq).reshape(x.shape[0], h, d).transpose(1, 0, 2)
        k = (matmul(kv, self.wk) + self.bk).reshape(kv.shape[0], h, d).transpose(1, 0, 2)
        scores = matmul(q, k.transpose(0, 2, 1)) * self.cfg.attention_scale
        return softmax_rows(scores)

    def forward(self, x: Tensor, kv: Tensor | None = None, train: bool = False, rng=None) -> Tensor:
        """One block: attention (+residual, norm) then feedforward (+residual, norm).

        kv=None attends within the branch; otherwise queries come from x and
        keys/values from kv.
        """
        source = x if kv is None else kv
        if source.shape[-1] != x.shape[-1]:
            raise EncoderConfigError(
                f"key/value embedding {source.shape} does not match query embedding {x.shape}"
            )
        h, d = self.cfg.num_heads, self.cfg.head_dim
        n = x.shape[0]

        attn = self.attention_weights(x, kv)
        v = (matmul(source, self.wv) + self.bv).reshape(source.shape[0], h, d).transpose(1, 0, 2)
        ctx = matmul(attn, v).transpose(1, 0, 2).reshape(n, h * d)
        out = matmul(ctx, self.wo) + self.bo
        if train and self.cfg.dropout > 0.0:
            out = dropout(out, self.cfg.dropout, rng)
        x = layer_norm(x + out, self.ln1_g, self.ln1_b)

        ff = matmul((matmul(x, self.ff1_w) + self.ff1_b).gelu(), self.ff2_w) + self.ff2_b
        if train and self.cfg.dropout > 0.0:
            ff = dropout(ff, self.cfg.dropout, rng)
        return layer_norm(x + ff, self.ln2_g, self.ln2_b)


class Branch:
    """A modality branch: front end plus a stack of transformer layers.

    with_layers=False keeps only the front end (early fusion never runs the
    transformer)."""

    def __init__(self, cfg: BranchConfig, frontend, seed: int, with_layers: bool = True):
        self.cfg = cfg
        self.frontend = frontend
        self.layers = [
            TransformerLayer(cfg, f"{cfg.modality}.layer{i}", seed) for i in range(cfg.num_layers)
        ] if with_layers else []

    def parameters(self) -> list:
        out = list(self.frontend.parameters())
        for layer in self.layers:
            out += layer.parameters()
        return out


def branch_forward(branch: Branch, x: Tensor, cross_layers=(), cross_kv: dict | None = None,
                   train: bool = False, rng=None) -> Tensor:
    """Run all layers in order; layers listed in ``cross_layers`` consume the
    prebuilt fused key/value tensor from ``cross_kv``.

    With no cross layers this is a plain self-attention encoder.
    """
    cross_layers = set(cross_layers)
    for i, layer in enumerate(branch.layers):
        if i in cross_layers:
            if cross_kv is None or i not in cross_kv:
                raise EncoderConfigError(
                    f"layer {i} of {branch.cfg.modality} is a cross layer but no fused "
                    f"key/value input was supplied"
                )
            x = layer.forward(x, kv=cross_kv[i], train=train, rng=rng)
        else:
            x = layer.forward(x, train=train, rng=rng)
    return x
