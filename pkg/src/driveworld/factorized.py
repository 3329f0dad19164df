"""Factorized multiview generation and autoregressive long-video rollout.

Reference views come out of the joint multiview model (their marginal is the
joint sample restricted to the reference set); each stitched view is then
re-generated by the single-view conditional model given its two neighbours
and its own previous frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .config import Config
from .diffusion import sample
from .net.conditioning import joint_cond_tokens, stitch_cond_tokens
from .net.training import WorldModel
from .world import CameraRig


class PartitionError(ValueError):
    pass


class DependencyError(RuntimeError):
    """A stitched view was requested before its reference neighbours exist."""


@dataclass(frozen=True)
class ViewPartition:
    reference: tuple[int, ...]
    stitched: tuple[int, ...]
    neighbors: dict[int, tuple[int, int]]   # stitched view -> (left, right)

    def check(self, k: int) -> None:
        if set(self.reference) | set(self.stitched) != set(range(k)):
            raise PartitionError("partition must cover all views")
        if set(self.reference) & set(self.stitched):
            raise PartitionError("reference and stitched sets must be disjoint")
        for v, (l, r) in self.neighbors.items():
            if v not in self.stitched or l not in self.reference or r not in self.reference:
                raise PartitionError("neighbor map must link stitched to reference views")


def partition_views(rig: CameraRig) -> ViewPartition:
    """Alternating split: even view indices are reference, odd are stitched.

    Views are ordered by yaw, so consecutive indices are adjacent; with the
    default six-view rig this yields r = {F, BL, BR}, s = {FL, B, FR}.
    """
    k = rig.k
    if k < 2 or k % 2 != 0:
        raise PartitionError(f"factorization needs an even view count, got {k}")
    if rig.adjacent_overlap() <= 0:
        raise PartitionError("adjacent views must overlap for stitching")
    reference = tuple(range(0, k, 2))
    stitched = tuple(range(1, k, 2))
    neighbors = {v: ((v - 1) % k, (v + 1) % k) for v in stitched}
    part = ViewPartition(reference, stitched, neighbors)
    part.check(k)
    return part


def derive_seed(*parts: int) -> int:
    """Stable composite seed (independent of Python hash randomization)."""
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


@dataclass
class ClipConditions:
    """Everything needed to condition one clip's generation (numpy, [0,1])."""

    ctx_frames: np.ndarray          # [n_ctx, K, 3, H, W] real or generated
    persp: np.ndarray               # layout mode [T, K, 3, H, W]; action [K, 3, H, W]
    bev: np.ndarray                 # layout mode [T, 3, S, S]; action [3, S, S]
    meta_codes: tuple[int, int]     # weather, lighting
    actions: np.ndarray | None      # [T, 2] in action mode
    mode: str


def _to_t(x: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(x, dtype=np.float32))


class FactorizedGenerator:
    """Joint + stitch checkpoints driving Eq.-style factorized sampling."""

    def __init__(self, joint: WorldModel, stitch: WorldModel | None,
                 cfg: Config, rig: CameraRig):
        if stitch is not None and stitch.mode != joint.mode:
            raise ValueError("joint and stitch models must share a condition mode")
        self.joint = joint
        self.stitch = stitch
        self.cfg = cfg
        self.rig = rig
        self.partition = partition_views(rig) if rig.k >= 2 else None

    # ------------------------------------------------------------------
    def _joint_tokens(self, cond: ClipConditions, drop_all: bool) -> torch.Tensor:
        t = self.cfg.clip.frames
        with torch.no_grad():
            return joint_cond_tokens(
                self.joint.encoders,
                ctx_frames=_to_t(cond.ctx_frames)[None],
                persp=_to_t(cond.persp)[None],
                bev=_to_t(cond.bev)[None],
                meta_codes=torch.tensor([list(cond.meta_codes)], dtype=torch.long),
                actions=None if cond.actions is None else _to_t(cond.actions)[None],
                t_frames=t, mode=cond.mode,
                drop_p=1.0 if drop_all else 0.0)

    def generate_joint(self, cond: ClipConditions, seed: int,
                       n_steps: int | None = None, eta: float | None = None,
                       cfg_scale: float | None = None) -> np.ndarray:
        """Full joint sample, [T, K, 3, H, W] in [0, 1]."""
        scfg = self.cfg.sample
        n_steps = scfg.steps if n_steps is None else n_steps
        eta = scfg.eta if eta is None else eta
        cfg_scale = scfg.cfg if cfg_scale is None else cfg_scale
        tok_c = self._joint_tokens(cond, drop_all=False)
        tok_u = self._joint_tokens(cond, drop_all=True)
        t, k = self.cfg.clip.frames, self.rig.k
        h, w = self.rig.image_hw
        shape = (1, t, k, 3, h, w)
        with torch.no_grad():
            z = sample(
                lambda zz, tt: self.joint.eval_eps(zz, tt, tok_c),
                lambda zz, tt: self.joint.eval_eps(zz, tt, tok_u),
                shape, self.joint.schedule, n_steps=n_steps, eta=eta,
                cfg_scale=cfg_scale, seed=seed)
        return ((z[0].numpy() + 1.0) / 2.0).clip(0.0, 1.0)

    def generate_reference(self, cond: ClipConditions, seed: int,
                           **kw) -> dict[int, np.ndarray]:
        """Reference-view clips keyed by view index (joint-model marginal)."""
        if self.partition is None:
            raise PartitionError("reference generation needs >= 2 views")
        full = self.generate_joint(cond, seed, **kw)
        return {v: full[:, v] for v in self.partition.reference}

    # ------------------------------------------------------------------
    def _stitch_tokens(self, view: int, left: np.ndarray, right: np.ndarray,
                       own_ctx: np.ndarray, cond: ClipConditions,
                       drop_all: bool) -> torch.Tensor:
        if cond.mode == "layout":
            persp_v = cond.persp[:, view]
            bev_v = cond.bev
        else:
            persp_v = cond.persp[view]
            bev_v = cond.bev
        with torch.no_grad():
            return stitch_cond_tokens(
                self.stitch.encoders,
                left=_to_t(left)[None], right=_to_t(right)[None],
                own_ctx=_to_t(own_ctx)[None],
                persp=_to_t(persp_v)[None], bev=_to_t(bev_v)[None],
                meta_codes=torch.tensor([list(cond.meta_codes)], dtype=torch.long),
                view_idx=torch.tensor([view], dtype=torch.long),
                actions=None if cond.actions is None else _to_t(cond.actions)[None],
                mode=cond.mode, drop_p=1.0 if drop_all else 0.0)

    def generate_stitched(self, view: int, refs: dict[int, np.ndarray],
                          own_ctx: np.ndarray, cond: ClipConditions, seed: int,
                          n_steps: int | None = None, eta: float | None = None,
                          cfg_scale: float | None = None) -> np.ndarray:
        """One stitched view's clip, [T, 3, H, W], given its neighbours."""
        if self.stitch is None:
            raise DependencyError("no stitch model loaded")
        left_v, right_v = self.partition.neighbors[view]
        if left_v not in refs or right_v not in refs:
            raise DependencyError(
                f"stitched view {view} needs reference views {left_v} and {right_v}")
        scfg = self.cfg.sample
        n_steps = scfg.steps if n_steps is None else n_steps
        eta = scfg.eta if eta is None else eta
        cfg_scale = scfg.cfg if cfg_scale is None else cfg_scale
        tok_c = self._stitch_tokens(view, refs[left_v], refs[right_v], own_ctx,
                                    cond, drop_all=False)
        tok_u = self._stitch_tokens(view, refs[left_v], refs[right_v], own_ctx,
                                    cond, drop_all=True)
        t = self.cfg.clip.frames
        h, w = self.rig.image_hw
        shape = (1, t, 1, 3, h, w)
        with torch.no_grad():
            z = sample(
                lambda zz, tt: self.stitch.eval_eps(zz, tt, tok_c),
                lambda zz, tt: self.stitch.eval_eps(zz, tt, tok_u),
                shape, self.stitch.schedule, n_steps=n_steps, eta=eta,
                cfg_scale=cfg_scale, seed=seed)
        return ((z[0, :, 0].numpy() + 1.0) / 2.0).clip(0.0, 1.0)

    def generate_factorized(self, cond: ClipConditions, seed: int,
                            **kw) -> np.ndarray:
        """Reference views first, then every stitched view; [T, K, 3, H, W]."""
        refs = self.generate_reference(cond, seed, **kw)
        out = np.zeros((self.cfg.clip.frames, self.rig.k, 3, *self.rig.image_hw),
                       dtype=np.float32)
        for v, clip in refs.items():
            out[:, v] = clip
        for v in self.partition.stitched:
            own_ctx = cond.ctx_frames[-1, v]
            out[:, v] = self.generate_stitched(
                v, refs, own_ctx, cond, derive_seed(seed, v), **kw)
        return out

    # ------------------------------------------------------------------
    def rollout_video(self, initial_frames: np.ndarray,
                      per_clip_conditions: list[ClipConditions], seed: int,
                      factorized: bool = True, **kw) -> np.ndarray:
        """Autoregressive long video: clip j > 0 is conditioned on context
        frames from clip j-1; output [T + (n-1)(T - ctx), K, 3, H, W]."""
        n_clips = len(per_clip_conditions)
        if n_clips < 1:
            raise ValueError("rollout needs >= 1 clip")
        n_ctx = self.cfg.clip.context
        chunks: list[np.ndarray] = []
        ctx = initial_frames
        for j, cond in enumerate(per_clip_conditions):
            cond.ctx_frames = ctx
            clip_seed = derive_seed(seed, 1000 + j)
            if factorized and self.stitch is not None and self.partition is not None:
                clip = self.generate_factorized(cond, clip_seed, **kw)
            else:
                clip = self.generate_joint(cond, clip_seed, **kw)
            chunks.append(clip if j == 0 else clip[n_ctx:])
            ctx = clip[-n_ctx:]
        return np.concatenate(chunks, axis=0)
