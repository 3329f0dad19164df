"""Unified condition interface: heterogeneous sources to d-dim token sequences.

Every condition source (context/reference images, layout rasters, scene meta,
ego action) is encoded into tokens of one shared dimension and concatenated in
the fixed order [image, layout, meta, action].  Dropped sources are replaced
by learned null tokens of identical shape; the fully dropped set is the
classifier-free-guidance unconditional input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import torch
from torch import nn

SOURCE_ORDER = ("image", "layout", "meta", "action")


class AssemblyError(ValueError):
    pass


@dataclass
class ConditionSet:
    """Per-frame token blocks plus presence mask.

    Token tensors may carry leading batch dims; the last two axes are always
    (tokens, dim).  ``None`` marks a source that does not apply to the mode
    (like actions in layout mode), as opposed to a dropped source, which keeps
    null tokens and a False mask entry.
    """

    image_tokens: torch.Tensor | None
    layout_tokens: torch.Tensor | None
    meta_tokens: torch.Tensor | None
    action_tokens: torch.Tensor | None
    mode: str = "action"                      # "action" | "layout"
    present: dict[str, bool] = field(default_factory=lambda: {
        "image": True, "layout": True, "meta": True, "action": True})

    def source(self, name: str) -> torch.Tensor | None:
        return getattr(self, f"{name}_tokens")

    def assembled(self) -> torch.Tensor:
        """Concatenation in fixed source order; verifies the length law."""
        parts = []
        for name in SOURCE_ORDER:
            tok = self.source(name)
            if tok is None:
                if name == "action" and self.mode == "layout":
                    continue
                raise AssemblyError(f"missing required condition source {name!r}")
            parts.append(tok)
        out = torch.cat(parts, dim=-2)
        expected = sum(p.shape[-2] for p in parts)
        if out.shape[-2] != expected:
            raise AssemblyError("assembled condition length mismatch")
        return out


class ConvTokenEncoder(nn.Module):
    """Strided conv stack flattening a raster to a token grid.

    Learned 2D position embeddings are added to the tokens so cross-attention
    can address spatial structure; the condition axis itself stays order-free.
    """

    def __init__(self, in_channels: int, token_dim: int, stages: int,
                 input_hw: tuple[int, int]):
        super().__init__()
        if stages < 1:
            raise ValueError("encoder needs >= 1 stage")
        chans = [max(16, token_dim >> (stages - 1 - i)) for i in range(stages)]
        chans[-1] = token_dim
        layers: list[nn.Module] = []
        c_prev = in_channels
        for c in chans:
            layers += [nn.Conv2d(c_prev, c, 3, stride=2, padding=1), nn.GELU()]
            c_prev = c
        self.net = nn.Sequential(*layers)
        self.input_hw = input_hw
        h, w = input_hw
        self.grid_hw = (h // 2**stages, w // 2**stages)
        self.n_tokens = self.grid_hw[0] * self.grid_hw[1]
        self.pos = nn.Parameter(torch.randn(self.n_tokens, token_dim) * 0.02)

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        """[..., 3, H, W] -> [..., n, d]."""
        if images.shape[-2:] != torch.Size(self.input_hw):
            raise AssemblyError(
                f"encoder expects {self.input_hw} rasters, got {tuple(images.shape[-2:])}")
        lead = images.shape[:-3]
        x = images.reshape(-1, *images.shape[-3:])
        feats = self.net(x)                              # [N, d, h', w']
        tokens = feats.flatten(2).transpose(1, 2)        # [N, n, d]
        tokens = tokens + self.pos
        return tokens.reshape(*lead, self.n_tokens, tokens.shape[-1])


class ConditionEncoders(nn.Module):
    """All source encoders plus the learned null tokens.

    Parameter groups: the layout/meta encoders and null tokens belong to the
    spatial (image-model) stage; the context-image encoder and action MLP only
    matter for video generation and train with the temporal stage.
    """

    def __init__(self, token_dim: int, image_hw: tuple[int, int], bev_size: int,
                 n_views: int, image_stages: int = 3, bev_stages: int = 3):
        super().__init__()
        self.token_dim = token_dim
        self.image_enc = ConvTokenEncoder(3, token_dim, image_stages, image_hw)
        self.persp_enc = ConvTokenEncoder(3, token_dim, image_stages, image_hw)
        self.bev_enc = ConvTokenEncoder(3, token_dim, bev_stages, (bev_size, bev_size))
        self.weather_emb = nn.Embedding(2, token_dim)
        self.lighting_emb = nn.Embedding(2, token_dim)
        self.view_emb = nn.Embedding(n_views, token_dim)
        hidden = 4 * token_dim
        self.action_mlp = nn.Sequential(
            nn.Linear(2, hidden), nn.SiLU(), nn.Linear(hidden, 2 * token_dim))
        self.nulls = nn.ParameterDict({
            name: nn.Parameter(torch.randn(1, token_dim) * 0.02)
            for name in SOURCE_ORDER
        })

    # parameter-group tags -------------------------------------------------
    def spatial_parameter_names(self) -> set[str]:
        names = set()
        for key in ("persp_enc", "bev_enc", "weather_emb", "lighting_emb",
                    "view_emb", "nulls"):
            names |= {f"{key}.{n}" for n, _ in getattr(self, key).named_parameters()}
        return names

    def temporal_parameter_names(self) -> set[str]:
        names = {f"image_enc.{n}" for n, _ in self.image_enc.named_parameters()}
        names |= {f"action_mlp.{n}" for n, _ in self.action_mlp.named_parameters()}
        return names

    # op-level encoders ----------------------------------------------------
    def encode_image_cond(self, images: torch.Tensor) -> torch.Tensor:
        """[M, 3, H, W] (or one image [3, H, W]) -> [M * n, d]."""
        if images.dim() == 3:
            images = images[None]
        if not torch.isfinite(images).all():
            raise AssemblyError("image condition must be finite")
        tokens = self.image_enc(images)
        return tokens.reshape(-1, self.token_dim)

    def encode_layout_cond(self, persp: torch.Tensor, bev: torch.Tensor) -> torch.Tensor:
        """Perspective + BEV rasters -> [k, d] tokens."""
        pt = self.persp_enc(persp[None] if persp.dim() == 3 else persp)
        bt = self.bev_enc(bev[None] if bev.dim() == 3 else bev)
        return torch.cat([pt.reshape(-1, self.token_dim),
                          bt.reshape(-1, self.token_dim)], dim=0)

    def encode_meta_cond(self, weather: int, lighting: int, view: int) -> torch.Tensor:
        for value, table in ((weather, self.weather_emb), (lighting, self.lighting_emb),
                             (view, self.view_emb)):
            if not 0 <= value < table.num_embeddings:
                raise AssemblyError(f"meta code {value} out of range")
        idx = torch.tensor([weather, lighting, view])
        return torch.cat([
            self.weather_emb(idx[0:1]), self.lighting_emb(idx[1:2]),
            self.view_emb(idx[2:3])], dim=0)

    def encode_action(self, action: torch.Tensor) -> torch.Tensor:
        action = torch.as_tensor(action, dtype=torch.float32)
        if not torch.isfinite(action).all():
            raise AssemblyError("action must be finite")
        out = self.action_mlp(action.reshape(*action.shape[:-1], 2))
        return out.reshape(*action.shape[:-1], 2, self.token_dim)

    def null_tokens(self, name: str, n_tokens: int, lead: tuple[int, ...] = ()) -> torch.Tensor:
        null = self.nulls[name].expand(n_tokens, self.token_dim)
        return null.expand(*lead, n_tokens, self.token_dim)


def assemble(image_tokens: torch.Tensor | None, layout_tokens: torch.Tensor,
             meta_tokens: torch.Tensor, action_tokens: torch.Tensor | None,
             mode: str = "action") -> ConditionSet:
    """Build a ConditionSet; in layout mode action tokens are omitted."""
    if mode not in ("action", "layout"):
        raise AssemblyError(f"unknown condition mode {mode!r}")
    if mode == "action" and action_tokens is None:
        raise AssemblyError("missing required condition source 'action'")
    if image_tokens is None:
        raise AssemblyError("missing required condition source 'image'")
    if layout_tokens is None:
        raise AssemblyError("missing required condition source 'layout'")
    if meta_tokens is None:
        raise AssemblyError("missing required condition source 'meta'")
    return ConditionSet(
        image_tokens=image_tokens, layout_tokens=layout_tokens,
        meta_tokens=meta_tokens,
        action_tokens=action_tokens if mode == "action" else None,
        mode=mode)


def drop_conditions(cond: ConditionSet, encoders: ConditionEncoders, p: float = 0.2,
                    rng: torch.Generator | None = None) -> ConditionSet:
    """Independently replace each source with its null tokens with prob p."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("drop probability must be in [0, 1]")
    out = replace(cond, present=dict(cond.present))
    for name in SOURCE_ORDER:
        tok = cond.source(name)
        if tok is None:
            continue
        if p > 0 and float(torch.rand((), generator=rng)) < p:
            null = encoders.null_tokens(name, tok.shape[-2], tuple(tok.shape[:-2]))
            setattr(out, f"{name}_tokens", null)
            out.present[name] = False
    return out


def unconditional_like(cond: ConditionSet, encoders: ConditionEncoders) -> ConditionSet:
    """The CFG unconditional input: every source nulled."""
    out = replace(cond, present={k: False for k in cond.present})
    for name in SOURCE_ORDER:
        tok = cond.source(name)
        if tok is not None:
            setattr(out, f"{name}_tokens",
                    encoders.null_tokens(name, tok.shape[-2], tuple(tok.shape[:-2])))
    return out
