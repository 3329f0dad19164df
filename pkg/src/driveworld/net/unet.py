"""The denoising U-Net: spatial backbone lifted with temporal/multiview layers.

Per level the block order is spatial -> temporal -> multiview -> condition
cross-attention.  Parameters are tagged into three groups:

    spatial    2D backbone, cross-attention, layout/meta condition encoders
    temporal   3D conv + time attention, context-image/action encoders
    multiview  cross-view attention

The spatial group is exactly the conditional image model; with the temporal
and multiview gates at their zero init the video forward equals the image
forward per frame and view.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
from torch import nn

from .blocks import (AxisContractError, AxisDims, CrossCondBlock, MultiviewBlock,
                     SpatialBlock, TemporalBlock, timestep_embedding, zero_module)


@dataclass
class NetConfig:
    base_channels: int = 64
    channel_mults: tuple[int, ...] = (1, 2, 4)
    attention_levels: tuple[int, ...] = (1, 2)
    heads: int = 4
    token_dim: int = 128
    in_channels: int = 3
    t_frames: int = 8
    k_views: int = 6

    @property
    def temb_dim(self) -> int:
        return self.base_channels * 4


class LevelBlocks(nn.Module):
    """One resolution level: spatial + optional (temporal, view, cross)."""

    def __init__(self, c_in: int, c_out: int, cfg: NetConfig, with_attention: bool):
        super().__init__()
        self.spatial = SpatialBlock(c_in, c_out, cfg.temb_dim)
        self.with_attention = with_attention
        if with_attention:
            self.temporal = TemporalBlock(c_out, cfg.heads)
            self.multiview = MultiviewBlock(c_out, cfg.heads)
            self.cross = CrossCondBlock(c_out, cfg.token_dim, cfg.heads)

    def forward(self, x, temb, cond, dims, video_mode: bool):
        x = self.spatial(x, temb, dims)
        if self.with_attention:
            if video_mode:
                x = self.temporal(x, dims)
                x = self.multiview(x, dims)
            x = self.cross(x, cond, dims)
        return x


class WorldModelUNet(nn.Module):
    """f(z_tau; c, tau) -> predicted noise, over [B, T, K, C, H, W] latents."""

    def __init__(self, cfg: NetConfig):
        super().__init__()
        self.cfg = cfg
        base = cfg.base_channels
        chans = [base * m for m in cfg.channel_mults]
        self.time_mlp = nn.Sequential(
            nn.Linear(base, cfg.temb_dim), nn.SiLU(),
            nn.Linear(cfg.temb_dim, cfg.temb_dim))
        self.in_conv = nn.Conv2d(cfg.in_channels, chans[0], 3, padding=1)

        self.down = nn.ModuleList()
        self.downsample = nn.ModuleList()
        c_prev = chans[0]
        for level, c in enumerate(chans):
            self.down.append(LevelBlocks(c_prev, c, cfg, level in cfg.attention_levels))
            if level < len(chans) - 1:
                self.downsample.append(nn.Conv2d(c, c, 3, stride=2, padding=1))
            c_prev = c

        self.mid1 = LevelBlocks(c_prev, c_prev, cfg,
                                (len(chans) - 1) in cfg.attention_levels)
        self.mid2 = SpatialBlock(c_prev, c_prev, cfg.temb_dim)

        self.up = nn.ModuleList()
        self.upsample = nn.ModuleList()
        for level in reversed(range(len(chans))):
            c = chans[level]
            self.up.append(LevelBlocks(c_prev + c, c, cfg,
                                       level in cfg.attention_levels))
            if level > 0:
                self.upsample.append(nn.Upsample(scale_factor=2, mode="nearest"))
            c_prev = c

        self.out_norm = nn.GroupNorm(8 if chans[0] % 8 == 0 else 1, chans[0])
        self.out_conv = zero_module(nn.Conv2d(chans[0], cfg.in_channels, 3, padding=1))

    # ------------------------------------------------------------------
    def parameter_groups(self) -> dict[str, list[str]]:
        """Name lists for the spatial/temporal/multiview groups (disjoint)."""
        groups: dict[str, list[str]] = {"spatial": [], "temporal": [], "multiview": []}
        for name, _ in self.named_parameters():
            if ".temporal." in name or name.endswith(("gate_conv", "gate_attn")):
                groups["temporal"].append(name)
            elif ".multiview." in name or name.endswith("multiview.gate"):
                groups["multiview"].append(name)
            else:
                groups["spatial"].append(name)
        return groups

    # ------------------------------------------------------------------
    def forward(self, z_tau: torch.Tensor, tau: torch.Tensor,
                cond_tokens: torch.Tensor, video_mode: bool = True) -> torch.Tensor:
        """z_tau: [B, T, K, C, H, W]; tau: [B]; cond_tokens: [B, T, K, L, d]."""
        if z_tau.dim() != 6:
            raise AxisContractError(
                f"expected [B, T, K, C, H, W], got {tuple(z_tau.shape)}")
        b, t, k, c, h, w = z_tau.shape
        dims = AxisDims(b=b, t=t, k=k)
        if tau.shape != (b,):
            raise AxisContractError(f"tau must be [B]={b}, got {tuple(tau.shape)}")
        dtype = self.in_conv.weight.dtype
        temb = self.time_mlp(timestep_embedding(tau, self.cfg.base_channels).to(dtype))
        temb = temb[:, None, None, :].expand(b, t, k, temb.shape[-1]).reshape(dims.n, -1)

        x = self.in_conv(z_tau.reshape(dims.n, c, h, w))
        skips = []
        for level, block in enumerate(self.down):
            x = block(x, temb, cond_tokens, dims, video_mode)
            skips.append(x)
            if level < len(self.downsample):
                x = self.downsample[level](x)
        x = self.mid1(x, temb, cond_tokens, dims, video_mode)
        x = self.mid2(x, temb, dims)
        n_levels = len(self.down)
        for i, block in enumerate(self.up):
            skip = skips[n_levels - 1 - i]
            if x.shape[-2:] != skip.shape[-2:]:
                x = self.upsample[i - 1](x)
                x = x[..., : skip.shape[-2], : skip.shape[-1]]
            x = block(torch.cat([x, skip], dim=1), temb, cond_tokens, dims, video_mode)
        x = self.out_conv(torch.nn.functional.silu(self.out_norm(x)))
        return x.reshape(b, t, k, c, h, w)
