"""Transformer velocity network.

LLAMA-flavored blocks adapted for non-autoregressive latent denoising:
rotary positions, RMSNorm everywhere, query/key RMS normalization before
the attention dot product, and one feed-forward expert per uniform
timestep block. Condition tokens (one style token plus text tokens) are
prepended to the latent tokens and everything attends bidirectionally;
the velocity is read from the latent positions only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import numcore as nc
from .numcore import ShapeError, Tensor


@dataclass(frozen=True)
class BackboneConfig:
    n_layers: int
    hidden: int
    n_heads: int
    vocab_size: int
    max_positions: int
    latent_dim: int
    style_dim: int = 8
    n_experts: int = 4

    def __post_init__(self):
        if self.hidden % self.n_heads != 0:
            raise ValueError(f"hidden {self.hidden} not divisible by n_heads {self.n_heads}")
        if self.n_experts < 1:
            raise ValueError("n_experts must be >= 1")
        if (self.hidden // self.n_heads) % 2 != 0:
            raise ValueError("head_dim must be even for rotary positions")

    @property
    def head_dim(self) -> int:
        return self.hidden // self.n_heads


def desk_preset(vocab_size: int, latent_dim: int, style_dim: int = 8,
                max_positions: int = 128, n_experts: int = 4) -> BackboneConfig:
    """Small config that trains on a single CPU core in minutes."""
    return BackboneConfig(n_layers=4, hidden=128, n_heads=4, vocab_size=vocab_size,
                          max_positions=max_positions, latent_dim=latent_dim,
                          style_dim=style_dim, n_experts=n_experts)


def paper_preset(vocab_size: int, latent_dim: int, style_dim: int = 8,
                 max_positions: int = 2048) -> BackboneConfig:
    """Full-scale config: 16 layers, hidden 768, 32 heads."""
    return BackboneConfig(n_layers=16, hidden=768, n_heads=32, vocab_size=vocab_size,
                          max_positions=max_positions, latent_dim=latent_dim,
                          style_dim=style_dim)


@dataclass(frozen=True)
class TokenLayout:
    """Split of the joint sequence into condition and latent positions."""

    n_cond: int
    n_latent: int

    @property
    def total(self) -> int:
        return self.n_cond + self.n_latent


NULL_TOKEN = 0  # reserved id for the learned unconditional token


def rope_tables(positions, head_dim: int, base: float = 10000.0):
    """cos/sin tables (len, head_dim//2) for the given integer positions."""
    if head_dim % 2 != 0:
        raise ShapeError("rope_rotate", f"head_dim {head_dim} must be even")
    pos = np.asarray(positions, dtype=np.float64)
    j = np.arange(head_dim // 2, dtype=np.float64)
    theta = pos[:, None] * base ** (-2.0 * j / head_dim)
    return np.cos(theta).astype(np.float32), np.sin(theta).astype(np.float32)


def rope_rotate(q_or_k: Tensor, positions) -> Tensor:
    """Rotate (..., len, head_dim) pairwise by position-dependent angles."""
    cos, sin = rope_tables(positions, q_or_k.shape[-1])
    return nc.rope(q_or_k, cos, sin)


def rms_norm(x: Tensor, gain: Tensor, eps: float = 1e-6) -> Tensor:
    """x / sqrt(mean(x^2) + eps) * gain over the last axis."""
    return nc.rms_norm(x, gain, eps)


def time_moe_select(t: float, n_experts: int) -> int:
    """Uniform timestep blocks [i/E, (i+1)/E); t=1 falls in the last block."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"time_moe_select: t={t} outside [0, 1]")
    return min(int(t * n_experts), n_experts - 1)


def timestep_embedding(t: float, dim: int = 128, max_period: float = 10000.0) -> np.ndarray:
    """Sinusoidal features of t (scaled to [0, 1000] like diffusion steps)."""
    half = dim // 2
    freqs = np.exp(-math.log(max_period) * np.arange(half, dtype=np.float64) / half)
    args = (t * 1000.0) * freqs
    return np.concatenate([np.cos(args), np.sin(args)]).astype(np.float32)


class MultiHeadAttention:
    """Bidirectional attention with per-head RMS-normalized queries/keys.

    Normalizing q and k to unit rms bounds every logit by sqrt(head_dim)
    after the usual 1/sqrt(head_dim) scaling.
    """

    def __init__(self, cfg: BackboneConfig, rng: np.random.Generator, prefix: str):
        h = cfg.hidden
        std = 0.02
        res_std = std / math.sqrt(2.0 * cfg.n_layers)  # residual-branch scaling
        self.cfg = cfg
        self.params = {
            f"{prefix}.wq": Tensor(rng.normal(0, std, (h, h)), requires_grad=True),
            f"{prefix}.wk": Tensor(rng.normal(0, std, (h, h)), requires_grad=True),
            f"{prefix}.wv": Tensor(rng.normal(0, std, (h, h)), requires_grad=True),
            f"{prefix}.wo": Tensor(rng.normal(0, res_std, (h, h)), requires_grad=True),
        }
        self._prefix = prefix
        self._unit_gain = Tensor(np.ones(cfg.head_dim, dtype=np.float32))

    def __call__(self, x: Tensor, cos: np.ndarray, sin: np.ndarray) -> Tensor:
        p = self.params
        pre = self._prefix
        cfg = self.cfg
        B, T, h = x.shape
        nh, hd = cfg.n_heads, cfg.head_dim

        def heads(z):
            return nc.transpose(nc.reshape(z, (B, T, nh, hd)), (0, 2, 1, 3))

        q = heads(nc.matmul(x, p[f"{pre}.wq"]))
        k = heads(nc.matmul(x, p[f"{pre}.wk"]))
        v = heads(nc.matmul(x, p[f"{pre}.wv"]))
        # KQ-Norm, then rotate: rotation is orthogonal so the logit bound survives
        q = nc.rope(nc.rms_norm(q, self._unit_gain), cos, sin)
        k = nc.rope(nc.rms_norm(k, self._unit_gain), cos, sin)
        scores = nc.mul(nc.matmul(q, nc.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(hd))
        attn = nc.softmax(scores, axis=-1)
        out = nc.matmul(attn, v)  # (B, nh, T, hd)
        out = nc.reshape(nc.transpose(out, (0, 2, 1, 3)), (B, T, h))
        return nc.matmul(out, p[f"{pre}.wo"])


class Block:
    """Pre-norm attention + time-expert feed-forward, both residual."""

    def __init__(self, cfg: BackboneConfig, rng: np.random.Generator, prefix: str):
        h = cfg.hidden
        std = 0.02
        res_std = std / math.sqrt(2.0 * cfg.n_layers)
        self.cfg = cfg
        self.attn = MultiHeadAttention(cfg, rng, f"{prefix}.attn")
        self.params = dict(self.attn.params)
        self.params[f"{prefix}.ln1"] = Tensor(np.ones(h, dtype=np.float32), requires_grad=True)
        self.params[f"{prefix}.ln2"] = Tensor(np.ones(h, dtype=np.float32), requires_grad=True)
        for e in range(cfg.n_experts):
            self.params[f"{prefix}.expert{e}.w1"] = Tensor(rng.normal(0, std, (h, 4 * h)), requires_grad=True)
            self.params[f"{prefix}.expert{e}.b1"] = Tensor(np.zeros(4 * h, dtype=np.float32), requires_grad=True)
            self.params[f"{prefix}.expert{e}.w2"] = Tensor(rng.normal(0, res_std, (4 * h, h)), requires_grad=True)
            self.params[f"{prefix}.expert{e}.b2"] = Tensor(np.zeros(h, dtype=np.float32), requires_grad=True)
        self._prefix = prefix

    def __call__(self, x: Tensor, t: float, cos: np.ndarray, sin: np.ndarray) -> Tensor:
        p = self.params
        pre = self._prefix
        x = nc.add(x, self.attn(nc.rms_norm(x, p[f"{pre}.ln1"]), cos, sin))
        e = time_moe_select(t, self.cfg.n_experts)
        hdn = nc.rms_norm(x, p[f"{pre}.ln2"])
        hdn = nc.tanh(nc.add(nc.matmul(hdn, p[f"{pre}.expert{e}.w1"]), p[f"{pre}.expert{e}.b1"]))
        hdn = nc.add(nc.matmul(hdn, p[f"{pre}.expert{e}.w2"]), p[f"{pre}.expert{e}.b2"])
        return nc.add(x, hdn)


class VelocityBackbone:
    """Maps (noisy latent, t, condition) to a velocity of the latent's shape."""

    def __init__(self, cfg: BackboneConfig, rng: np.random.Generator):
        self.cfg = cfg
        h = cfg.hidden
        std = 0.02
        self.params: dict[str, Tensor] = {
            "tok_emb": Tensor(rng.normal(0, std, (cfg.vocab_size, h)), requires_grad=True),
            "style_w": Tensor(rng.normal(0, std, (cfg.style_dim, h)), requires_grad=True),
            "style_b": Tensor(np.zeros(h, dtype=np.float32), requires_grad=True),
            "lat_w": Tensor(rng.normal(0, std, (cfg.latent_dim, h)), requires_grad=True),
            "lat_b": Tensor(np.zeros(h, dtype=np.float32), requires_grad=True),
            "t_w": Tensor(rng.normal(0, std, (128, h)), requires_grad=True),
            "t_b": Tensor(np.zeros(h, dtype=np.float32), requires_grad=True),
            "ln_f": Tensor(np.ones(h, dtype=np.float32), requires_grad=True),
            # small output init: near-zero initial velocity without blocking
            # gradient flow into the body
            "out_w": Tensor(rng.normal(0, 0.01, (h, cfg.latent_dim)), requires_grad=True),
            "out_b": Tensor(np.zeros(cfg.latent_dim, dtype=np.float32), requires_grad=True),
        }
        self.blocks = [Block(cfg, rng, f"layer{i}") for i in range(cfg.n_layers)]
        for b in self.blocks:
            self.params.update(b.params)
        self._cos, self._sin = rope_tables(np.arange(cfg.max_positions), cfg.head_dim)

    def parameters(self) -> dict[str, Tensor]:
        return self.params

    def load_state(self, tensors: dict[str, np.ndarray]):
        for k, p in self.params.items():
            if k not in tensors:
                raise KeyError(f"missing parameter {k!r} in checkpoint")
            if tensors[k].shape != p.data.shape:
                raise ShapeError("load_state", f"{k}: got {tensors[k].shape}, want {p.data.shape}")
            p.data = tensors[k].astype(np.float32).copy()

    def forward_batch(self, x_t: np.ndarray, t: float, tokens: np.ndarray,
                      style: np.ndarray) -> Tensor:
        """Batched forward: x_t (B, T_lat, d), tokens (B, n_text) int,
        style (B, style_dim) -> velocity Tensor (B, T_lat, d)."""
        p = self.params
        cfg = self.cfg
        x_t = np.asarray(x_t, dtype=np.float32)
        B, t_lat, d = x_t.shape
        n_text = tokens.shape[1]
        n_cond = 1 + n_text
        total = n_cond + t_lat
        if total > cfg.max_positions:
            raise ShapeError("forward_velocity", f"sequence length {total} exceeds max_positions {cfg.max_positions}")

        style_tok = nc.reshape(nc.add(nc.matmul(Tensor(style), p["style_w"]), p["style_b"]), (B, 1, cfg.hidden))
        text_emb = nc.embedding(p["tok_emb"], tokens)
        lat_emb = nc.add(nc.matmul(Tensor(x_t), p["lat_w"]), p["lat_b"])
        seq = nc.concat([style_tok, text_emb, lat_emb], axis=1)

        t_feat = nc.matmul(Tensor(timestep_embedding(t)), p["t_w"])
        seq = nc.add(seq, nc.add(t_feat, p["t_b"]))

        cos, sin = self._cos[:total], self._sin[:total]
        for block in self.blocks:
            seq = block(seq, t, cos, sin)
        seq = nc.rms_norm(seq, p["ln_f"])
        lat = seq[:, n_cond:, :]
        return nc.add(nc.matmul(lat, p["out_w"]), p["out_b"])

    def __call__(self, x_t, t: float, cond) -> Tensor:
        """Single-utterance surface: x_t (n_latent, d) and a condition with
        ``text_tokens`` and ``style_vector`` fields."""
        x = x_t.data if isinstance(x_t, Tensor) else np.asarray(x_t, dtype=np.float32)
        tokens = np.asarray(cond.text_tokens, dtype=np.int64).reshape(1, -1)
        style = np.asarray(cond.style_vector, dtype=np.float32).reshape(1, -1)
        out = self.forward_batch(x[None], t, tokens, style)
        return nc.reshape(out, (x.shape[0], x.shape[1]))
