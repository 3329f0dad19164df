"""Batched condition-token assembly for the joint and stitch pipelines."""

from __future__ import annotations

import contextlib

import torch

from ..conditions import SOURCE_ORDER, ConditionEncoders


def _maybe_no_grad(frozen: bool):
    """Stage 2 freezes the layout/meta encoders; skip their autograd tape."""
    return torch.no_grad() if frozen else contextlib.nullcontext()


def _drop_mask(batch: int, p: float, rng: torch.Generator | None,
               sources: tuple[str, ...]) -> dict[str, torch.Tensor]:
    """Per-sample, per-source keep/drop decisions (True = drop)."""
    out = {}
    for name in sources:
        if p <= 0:
            out[name] = torch.zeros(batch, dtype=torch.bool)
        elif p >= 1:
            out[name] = torch.ones(batch, dtype=torch.bool)
        else:
            out[name] = torch.rand(batch, generator=rng) < p
    return out


def _apply_drop(tokens: torch.Tensor, dropped: torch.Tensor, null: torch.Tensor) -> torch.Tensor:
    """tokens [B, ..., n, d]; dropped [B] bool; null [1, d]."""
    if not dropped.any():
        return tokens
    shape = tokens.shape
    mask = dropped.view(-1, *([1] * (len(shape) - 1)))
    return torch.where(mask, null.expand(shape), tokens)


def image_frame_cond_tokens(encoders: ConditionEncoders, *, persp: torch.Tensor,
                            bev: torch.Tensor, meta_codes: torch.Tensor,
                            drop_p: float = 0.0,
                            rng: torch.Generator | None = None) -> torch.Tensor:
    """Stage-1 conditioning, [B, 1, 1, L, d]: layout + meta over single frames.

    The image source is a single null token (context frames only exist for
    video training) and there is no action source.
    """
    b = persp.shape[0]
    d = encoders.token_dim
    drop = _drop_mask(b, drop_p, rng, ("layout", "meta"))
    img = encoders.nulls["image"].expand(b, 1, d)
    pt = encoders.persp_enc(persp)                        # [B, np, d]
    bt = encoders.bev_enc(bev)                            # [B, nb, d]
    lay = _apply_drop(torch.cat([pt, bt], dim=-2), drop["layout"],
                      encoders.nulls["layout"])
    meta = torch.stack([
        encoders.weather_emb(meta_codes[:, 0]),
        encoders.lighting_emb(meta_codes[:, 1]),
        encoders.view_emb(meta_codes[:, 2])], dim=1)      # [B, 3, d]
    meta = _apply_drop(meta, drop["meta"], encoders.nulls["meta"])
    tokens = torch.cat([img, lay, meta], dim=-2)
    return tokens[:, None, None]


def joint_cond_tokens(encoders: ConditionEncoders, *, ctx_frames: torch.Tensor,
                      persp: torch.Tensor, bev: torch.Tensor,
                      meta_codes: torch.Tensor, actions: torch.Tensor | None,
                      t_frames: int, mode: str, drop_p: float = 0.0,
                      rng: torch.Generator | None = None,
                      frozen_spatial: bool = False) -> torch.Tensor:
    """Condition tokens [B, T, K, L, d] for the joint multiview model.

    ctx_frames: [B, n_ctx, K, 3, H, W] real context frames (image source)
    persp:      [B, K, 3, H, W] (action mode: frame-0 layouts) or
                [B, T, K, 3, H, W] (layout mode: per-frame layouts)
    bev:        [B, 3, S, S] or [B, T, 3, S, S] to match
    meta_codes: [B, 2] (weather, lighting); view codes are implicit
    actions:    [B, T, 2] in action mode, None in layout mode
    """
    b, n_ctx, k = ctx_frames.shape[:3]
    d = encoders.token_dim
    drop = _drop_mask(b, drop_p, rng, SOURCE_ORDER)

    img = encoders.image_enc(ctx_frames)                  # [B, n_ctx, K, n0, d]
    img = img.permute(0, 2, 1, 3, 4).reshape(b, k, -1, d)  # [B, K, n_ctx*n0, d]
    img = _apply_drop(img, drop["image"], encoders.nulls["image"])
    img = img[:, None].expand(b, t_frames, k, img.shape[-2], d)

    with _maybe_no_grad(frozen_spatial):
        if mode == "layout":
            pt = encoders.persp_enc(persp)                    # [B, T, K, np, d]
            bt = encoders.bev_enc(bev)                        # [B, T, nb, d]
            bt = bt[:, :, None].expand(b, t_frames, k, bt.shape[-2], d)
        else:
            pt = encoders.persp_enc(persp)[:, None].expand(
                b, t_frames, k, encoders.persp_enc.n_tokens, d)
            bt = encoders.bev_enc(bev)[:, None, None].expand(
                b, t_frames, k, encoders.bev_enc.n_tokens, d)
        lay = torch.cat([pt, bt], dim=-2)
        lay = _apply_drop(lay, drop["layout"], encoders.nulls["layout"])

        weather = encoders.weather_emb(meta_codes[:, 0])      # [B, d]
        light = encoders.lighting_emb(meta_codes[:, 1])
        views = encoders.view_emb(torch.arange(k))            # [K, d]
        meta = torch.stack([
            weather[:, None].expand(b, k, d),
            light[:, None].expand(b, k, d),
            views[None].expand(b, k, d)], dim=2)              # [B, K, 3, d]
        meta = _apply_drop(meta, drop["meta"], encoders.nulls["meta"])
        meta = meta[:, None].expand(b, t_frames, k, 3, d)

    parts = [img, lay, meta]
    if mode == "action":
        if actions is None:
            raise ValueError("action mode requires actions")
        act = encoders.encode_action(actions)             # [B, T, 2, d]
        act = _apply_drop(act, drop["action"], encoders.nulls["action"])
        parts.append(act[:, :, None].expand(b, t_frames, k, 2, d))
    return torch.cat(parts, dim=-2)


def stitch_cond_tokens(encoders: ConditionEncoders, *, left: torch.Tensor,
                       right: torch.Tensor, own_ctx: torch.Tensor,
                       persp: torch.Tensor, bev: torch.Tensor,
                       meta_codes: torch.Tensor, view_idx: torch.Tensor,
                       actions: torch.Tensor | None, mode: str,
                       drop_p: float = 0.0,
                       rng: torch.Generator | None = None,
                       frozen_spatial: bool = False) -> torch.Tensor:
    """Condition tokens [B, T, 1, L, d] for the single-view stitch model.

    left/right:  [B, T, 3, H, W] neighbouring reference-view frames, per frame
    own_ctx:     [B, 3, H, W] the view's previous (context) frame
    persp/bev:   own-view layouts, shapes as in ``joint_cond_tokens`` sans K
    view_idx:    [B] stitched view index (meta view code)
    """
    b, t_frames = left.shape[:2]
    d = encoders.token_dim
    drop = _drop_mask(b, drop_p, rng, SOURCE_ORDER)

    lt = encoders.image_enc(left)                         # [B, T, n0, d]
    rt = encoders.image_enc(right)
    ot = encoders.image_enc(own_ctx)[:, None].expand(b, t_frames,
                                                     encoders.image_enc.n_tokens, d)
    img = torch.cat([lt, rt, ot], dim=-2)
    img = _apply_drop(img, drop["image"], encoders.nulls["image"])

    with _maybe_no_grad(frozen_spatial):
        if mode == "layout":
            pt = encoders.persp_enc(persp)                    # [B, T, np, d]
            bt = encoders.bev_enc(bev)                        # [B, T, nb, d]
        else:
            pt = encoders.persp_enc(persp)[:, None].expand(
                b, t_frames, encoders.persp_enc.n_tokens, d)
            bt = encoders.bev_enc(bev)[:, None].expand(
                b, t_frames, encoders.bev_enc.n_tokens, d)
        lay = _apply_drop(torch.cat([pt, bt], dim=-2), drop["layout"],
                          encoders.nulls["layout"])

        meta = torch.stack([
            encoders.weather_emb(meta_codes[:, 0]),
            encoders.lighting_emb(meta_codes[:, 1]),
            encoders.view_emb(view_idx)], dim=1)              # [B, 3, d]
        meta = _apply_drop(meta, drop["meta"], encoders.nulls["meta"])
        meta = meta[:, None].expand(b, t_frames, 3, d)

    parts = [img, lay, meta]
    if mode == "action":
        if actions is None:
            raise ValueError("action mode requires actions")
        act = _apply_drop(encoders.encode_action(actions), drop["action"],
                          encoders.nulls["action"])
        parts.append(act)
    tokens = torch.cat(parts, dim=-2)
    return tokens[:, :, None]                             # [B, T, 1, L, d]
