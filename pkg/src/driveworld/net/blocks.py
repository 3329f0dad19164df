"""U-Net building blocks: spatial, temporal, multiview, and cross-condition.

Temporal and multiview blocks (and the condition cross-attention) carry
zero-initialized residual gates, so a freshly lifted video model is exactly
the underlying image model applied per frame and view.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from einops import rearrange
from torch import nn


class AxisContractError(RuntimeError):
    """Tensor layout does not match the declared axis tag."""


@dataclass(frozen=True)
class AxisDims:
    b: int
    t: int
    k: int

    @property
    def n(self) -> int:
        return self.b * self.t * self.k


def check_axes(x: torch.Tensor, dims: AxisDims) -> None:
    """Blocks operate on (b t k) c h w; verify the flattened axis size."""
    if x.dim() != 4 or x.shape[0] != dims.n:
        raise AxisContractError(
            f"expected [(b t k)={dims.n}, C, H, W], got {tuple(x.shape)}")


def zero_module(module: nn.Module) -> nn.Module:
    for p in module.parameters():
        nn.init.zeros_(p)
    return module


def _norm(channels: int) -> nn.GroupNorm:
    groups = 8 if channels % 8 == 0 else 1
    return nn.GroupNorm(groups, channels)


def timestep_embedding(tau: torch.Tensor, dim: int) -> torch.Tensor:
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float64) / half)
    args = tau.double()[:, None] * freqs[None]
    emb = torch.cat([torch.sin(args), torch.cos(args)], dim=-1)
    return emb.to(torch.float32)


class SelfAttention(nn.Module):
    """Plain multi-head self-attention over the middle axis of [N, L, C]."""

    def __init__(self, channels: int, heads: int):
        super().__init__()
        if channels % heads != 0:
            raise ValueError("channels must divide heads")
        self.heads = heads
        self.norm = nn.LayerNorm(channels)
        self.qkv = nn.Linear(channels, 3 * channels, bias=False)
        self.proj = nn.Linear(channels, channels, bias=False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        q, k, v = self.qkv(self.norm(x)).chunk(3, dim=-1)
        q = rearrange(q, "n l (h e) -> n h l e", h=self.heads)
        k = rearrange(k, "n l (h e) -> n h l e", h=self.heads)
        v = rearrange(v, "n l (h e) -> n h l e", h=self.heads)
        out = torch.nn.functional.scaled_dot_product_attention(q, k, v)
        return self.proj(rearrange(out, "n h l e -> n l (h e)"))

    def value_path(self, x: torch.Tensor) -> torch.Tensor:
        """Output of a single-token attention: softmax over one key is 1."""
        c = x.shape[-1]
        v = self.qkv(self.norm(x))[..., 2 * c:]
        return self.proj(v)


class CrossAttention(nn.Module):
    """Queries from latent tokens, keys/values from condition tokens."""

    def __init__(self, channels: int, cond_dim: int, heads: int):
        super().__init__()
        self.heads = heads
        self.norm = nn.LayerNorm(channels)
        self.q = nn.Linear(channels, channels, bias=False)
        self.kv = nn.Linear(cond_dim, 2 * channels, bias=False)
        self.proj = zero_module(nn.Linear(channels, channels, bias=False))

    def forward(self, x: torch.Tensor, cond: torch.Tensor) -> torch.Tensor:
        q = rearrange(self.q(self.norm(x)), "n l (h e) -> n h l e", h=self.heads)
        k, v = self.kv(cond).chunk(2, dim=-1)
        k = rearrange(k, "n l (h e) -> n h l e", h=self.heads)
        v = rearrange(v, "n l (h e) -> n h l e", h=self.heads)
        out = torch.nn.functional.scaled_dot_product_attention(q, k, v)
        return self.proj(rearrange(out, "n h l e -> n l (h e)"))


class SpatialBlock(nn.Module):
    """2D residual conv block applied independently per (frame, view)."""

    def __init__(self, c_in: int, c_out: int, temb_dim: int):
        super().__init__()
        self.norm1 = _norm(c_in)
        self.conv1 = nn.Conv2d(c_in, c_out, 3, padding=1)
        self.temb_proj = zero_module(nn.Linear(temb_dim, c_out))
        self.norm2 = _norm(c_out)
        self.conv2 = zero_module(nn.Conv2d(c_out, c_out, 3, padding=1))
        self.skip = nn.Conv2d(c_in, c_out, 1) if c_in != c_out else nn.Identity()

    def forward(self, x: torch.Tensor, temb: torch.Tensor, dims: AxisDims) -> torch.Tensor:
        check_axes(x, dims)
        h = self.conv1(torch.nn.functional.silu(self.norm1(x)))
        h = h + self.temb_proj(temb)[:, :, None, None]
        h = self.conv2(torch.nn.functional.silu(self.norm2(h)))
        return self.skip(x) + h


class TemporalBlock(nn.Module):
    """3D conv over (T, H, W) then self-attention over T; zero-gated."""

    def __init__(self, channels: int, heads: int):
        super().__init__()
        self.conv_norm = _norm(channels)
        self.conv3d = nn.Conv3d(channels, channels, 3, padding=1)
        self.attn = SelfAttention(channels, heads)
        self.gate_conv = nn.Parameter(torch.zeros(()))
        self.gate_attn = nn.Parameter(torch.zeros(()))

    def forward(self, x: torch.Tensor, dims: AxisDims) -> torch.Tensor:
        check_axes(x, dims)
        b, t, k = dims.b, dims.t, dims.k
        h = torch.nn.functional.silu(self.conv_norm(x))
        h = rearrange(h, "(b t k) c h w -> (b k) c t h w", b=b, t=t, k=k)
        h = self.conv3d(h)
        h = rearrange(h, "(b k) c t h w -> (b t k) c h w", b=b, k=k)
        x = x + self.gate_conv * h
        seq = rearrange(x, "(b t k) c h w -> (b k h w) t c", b=b, t=t, k=k)
        seq = self.attn(seq)
        seq = rearrange(seq, "(b k h w) t c -> (b t k) c h w",
                        b=b, k=k, h=x.shape[2], w=x.shape[3])
        return x + self.gate_attn * seq


class MultiviewBlock(nn.Module):
    """Self-attention across the view axis per (frame, spatial site); gated."""

    def __init__(self, channels: int, heads: int):
        super().__init__()
        self.attn = SelfAttention(channels, heads)
        self.gate = nn.Parameter(torch.zeros(()))

    def forward(self, x: torch.Tensor, dims: AxisDims) -> torch.Tensor:
        check_axes(x, dims)
        b, t, k = dims.b, dims.t, dims.k
        seq = rearrange(x, "(b t k) c h w -> (b t h w) k c", b=b, t=t, k=k)
        seq = self.attn(seq)
        seq = rearrange(seq, "(b t h w) k c -> (b t k) c h w",
                        b=b, t=t, h=x.shape[2], w=x.shape[3])
        return x + self.gate * seq


class CrossCondBlock(nn.Module):
    """Frame-wise condition injection: each frame attends to its own tokens."""

    def __init__(self, channels: int, cond_dim: int, heads: int):
        super().__init__()
        self.attn = CrossAttention(channels, cond_dim, heads)

    def forward(self, x: torch.Tensor, cond_tokens: torch.Tensor,
                dims: AxisDims) -> torch.Tensor:
        """cond_tokens: [B, T, K, L, d] matched to x's (b t k) slices."""
        check_axes(x, dims)
        if cond_tokens.shape[:3] != (dims.b, dims.t, dims.k):
            raise AxisContractError(
                f"condition tokens shaped {tuple(cond_tokens.shape)} do not match "
                f"(B,T,K)=({dims.b},{dims.t},{dims.k})")
        queries = rearrange(x, "n c h w -> n (h w) c")
        cond = cond_tokens.reshape(dims.n, *cond_tokens.shape[-2:])
        out = self.attn(queries, cond)
        out = rearrange(out, "n (h w) c -> n c h w", h=x.shape[2], w=x.shape[3])
        return x + out
