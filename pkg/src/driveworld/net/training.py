"""Model container, two-stage tuning, and the stitch-model pipeline.

Stage 1 trains the conditional image model (spatial group only) on single
frames.  Stage 2 freezes the spatial group bit-exactly and fine-tunes the
temporal and multiview groups on full clips.  The stitch model shares stage 1
and runs its own stage 2 with view count 1 and neighbour-view conditioning.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..conditions import ConditionEncoders
from ..config import Config
from ..data import Dataset
from ..diffusion import NoiseSchedule, denoising_loss, make_schedule
from .conditioning import (image_frame_cond_tokens, joint_cond_tokens,
                           stitch_cond_tokens)
from .unet import NetConfig, WorldModelUNet


class TrainingStateError(RuntimeError):
    """Stage ordering violated (e.g. stage 2 without stage-1 parameters)."""


@dataclass
class TrainLog:
    losses: list[float] = field(default_factory=list)

    def smoothed(self, window: int = 50) -> list[float]:
        if not self.losses:
            return []
        arr = np.asarray(self.losses, dtype=np.float64)
        window = min(window, len(arr))
        kernel = np.ones(window) / window
        return np.convolve(arr, kernel, mode="valid").tolist()


@dataclass
class WorldModel:
    """A denoiser + condition encoders + schedule, for one (kind, mode)."""

    net: WorldModelUNet
    encoders: ConditionEncoders
    schedule: NoiseSchedule
    kind: str                   # "joint" | "stitch"
    mode: str                   # "action" | "layout"
    stage: str                  # "image" | "video"

    def eval_eps(self, z: torch.Tensor, tau: torch.Tensor,
                 cond_tokens: torch.Tensor, video_mode: bool = True) -> torch.Tensor:
        return self.net(z, tau, cond_tokens, video_mode=video_mode)

    def all_parameters(self) -> list[torch.nn.Parameter]:
        return list(self.net.parameters()) + list(self.encoders.parameters())

    def spatial_state(self) -> dict[str, torch.Tensor]:
        groups = self.net.parameter_groups()
        state = {f"net.{n}": p.detach().clone()
                 for n, p in self.net.named_parameters() if n in set(groups["spatial"])}
        enc_spatial = self.encoders.spatial_parameter_names()
        state.update({f"enc.{n}": p.detach().clone()
                      for n, p in self.encoders.named_parameters() if n in enc_spatial})
        return state

    def trainable_parameters(self, stage: str) -> list[torch.nn.Parameter]:
        groups = self.net.parameter_groups()
        if stage == "image":
            names = set(groups["spatial"])
            enc_names = self.encoders.spatial_parameter_names()
        else:
            names = set(groups["temporal"]) | set(groups["multiview"])
            enc_names = self.encoders.temporal_parameter_names()
        params = [p for n, p in self.net.named_parameters() if n in names]
        params += [p for n, p in self.encoders.named_parameters() if n in enc_names]
        return params

    def save(self, path: str | Path, cfg: Config) -> None:
        out = Path(path)
        out.mkdir(parents=True, exist_ok=True)
        torch.save(self.net.state_dict(), out / "net.pt")
        torch.save(self.encoders.state_dict(), out / "encoders.pt")
        meta = {
            "net_config": asdict(self.net.cfg),
            "kind": self.kind, "mode": self.mode, "stage": self.stage,
            "diffusion": {"n_steps": self.schedule.n_steps, "kind": self.schedule.kind},
            "encoders": {
                "image_hw": list(self.encoders.image_enc.input_hw),
                "bev_size": self.encoders.bev_enc.input_hw[0],
                "n_views": self.encoders.view_emb.num_embeddings,
                "image_stages": len([m for m in self.encoders.image_enc.net
                                     if hasattr(m, "stride")]),
                "bev_stages": len([m for m in self.encoders.bev_enc.net
                                   if hasattr(m, "stride")]),
            },
            "config_fingerprint": cfg.fingerprint(),
        }
        (out / "model.json").write_text(json.dumps(meta, indent=1))

    @staticmethod
    def load(path: str | Path) -> "WorldModel":
        src = Path(path)
        meta = json.loads((src / "model.json").read_text())
        nc = meta["net_config"]
        nc["channel_mults"] = tuple(nc["channel_mults"])
        nc["attention_levels"] = tuple(nc["attention_levels"])
        net_cfg = NetConfig(**nc)
        enc = meta["encoders"]
        model = build_model(net_cfg, meta["kind"], meta["mode"],
                            meta["diffusion"]["n_steps"], meta["diffusion"]["kind"],
                            stage=meta["stage"],
                            image_hw=tuple(enc["image_hw"]),
                            bev_size=enc["bev_size"],
                            image_stages=enc["image_stages"],
                            n_views=enc.get("n_views"))
        model.net.load_state_dict(torch.load(src / "net.pt", weights_only=True))
        model.encoders.load_state_dict(torch.load(src / "encoders.pt", weights_only=True))
        return model


def net_config_from(cfg: Config, k_views: int, t_frames: int | None = None) -> NetConfig:
    return NetConfig(
        base_channels=cfg.net.base_channels,
        channel_mults=tuple(cfg.net.channel_mults),
        attention_levels=tuple(cfg.net.attention_levels),
        heads=cfg.net.heads,
        token_dim=cfg.net.token_dim,
        t_frames=t_frames if t_frames is not None else cfg.clip.frames,
        k_views=k_views,
    )


def build_model(net_cfg: NetConfig, kind: str, mode: str, n_diffusion: int,
                schedule_kind: str, stage: str = "image",
                image_hw: tuple[int, int] | None = None,
                bev_size: int = 64, image_stages: int = 3,
                n_views: int | None = None, seed: int = 0) -> WorldModel:
    torch.manual_seed(seed)
    net = WorldModelUNet(net_cfg)
    hw = image_hw if image_hw is not None else (48, 96)
    bev_stages = max(1, image_stages)
    # the view embedding always covers the whole rig: the stitch model (one
    # latent view) still needs to know which camera it is generating
    rig_views = n_views if n_views is not None else max(net_cfg.k_views, 6)
    encoders = ConditionEncoders(net_cfg.token_dim, hw, bev_size, rig_views,
                                 image_stages=image_stages, bev_stages=bev_stages)
    schedule = make_schedule(n_diffusion, schedule_kind)
    return WorldModel(net=net, encoders=encoders, schedule=schedule,
                      kind=kind, mode=mode, stage=stage)


def model_from_config(cfg: Config, kind: str, mode: str, seed: int = 0) -> WorldModel:
    k = cfg.rig.k if kind == "joint" else 1
    net_cfg = net_config_from(cfg, k)
    stitch_stages = cfg.cond.stitch_image_stages or cfg.cond.image_stages
    stages = cfg.cond.image_stages if kind == "joint" else stitch_stages
    return build_model(net_cfg, kind, mode, cfg.diffusion.n_steps, cfg.diffusion.kind,
                       image_hw=(cfg.render.h, cfg.render.w),
                       bev_size=cfg.render.bev_size,
                       image_stages=stages, n_views=cfg.rig.k, seed=seed)


# ---------------------------------------------------------------------------
# batch builders

class ClipCache:
    """Tiny LRU over decoded clips; training re-visits clips constantly."""

    def __init__(self, dataset: Dataset, capacity: int = 48):
        self.dataset = dataset
        self.capacity = capacity
        self._cache: dict[str, object] = {}

    def get(self, clip_id: str):
        if clip_id in self._cache:
            return self._cache[clip_id]
        clip = self.dataset.load(clip_id)
        if len(self._cache) >= self.capacity:
            self._cache.pop(next(iter(self._cache)))
        self._cache[clip_id] = clip
        return clip


def image_batch(cache: ClipCache, ids: list[str], cfg: Config,
                rng: np.random.Generator, batch: int) -> dict:
    """Random single frames with their layouts for stage-1 training."""
    frames, persp, bev, metas = [], [], [], []
    for _ in range(batch):
        clip = cache.get(ids[int(rng.integers(len(ids)))])
        t = int(rng.integers(clip.t))
        k = int(rng.integers(clip.k))
        frames.append(clip.video[t, k])
        persp.append(clip.layouts_persp[t, k])
        bev.append(clip.layouts_bev[t])
        metas.append([int(clip.meta.weather), int(clip.meta.lighting), k])
    return {
        "video": torch.from_numpy(np.stack(frames))[:, None, None],   # [B,1,1,3,H,W]
        "persp": torch.from_numpy(np.stack(persp))[:, None],          # [B,1,3,H,W]
        "bev": torch.from_numpy(np.stack(bev)),                       # [B,3,S,S]
        "metas": torch.tensor(metas, dtype=torch.long),               # [B,3]
    }


def joint_clip_batch(cache: ClipCache, ids: list[str], cfg: Config,
                     rng: np.random.Generator, batch: int, mode: str) -> dict:
    n_ctx = int(rng.integers(1, cfg.clip.context + 1))
    videos, persps, bevs, metas, actions = [], [], [], [], []
    for _ in range(batch):
        clip = cache.get(ids[int(rng.integers(len(ids)))])
        videos.append(clip.video)
        if mode == "layout":
            persps.append(clip.layouts_persp)
            bevs.append(clip.layouts_bev)
        else:
            persps.append(clip.layouts_persp[0])
            bevs.append(clip.layouts_bev[0])
        metas.append([int(clip.meta.weather), int(clip.meta.lighting)])
        actions.append(clip.actions)
    video = torch.from_numpy(np.stack(videos))                        # [B,T,K,3,H,W]
    return {
        "video": video,
        "ctx": video[:, :n_ctx],                                      # [B,n_ctx,K,3,H,W]
        "persp": torch.from_numpy(np.stack(persps)),
        "bev": torch.from_numpy(np.stack(bevs)),
        "metas": torch.tensor(metas, dtype=torch.long),
        "actions": torch.from_numpy(np.stack(actions)) if mode == "action" else None,
    }


def stitch_clip_batch(cache: ClipCache, ids: list[str], cfg: Config,
                      rng: np.random.Generator, batch: int, mode: str) -> dict:
    """Training samples {x_(i-1), x_i, x_i', x_(i+1)} with random view i."""
    k_total = cfg.rig.k
    videos, lefts, rights, own_ctx, persps, bevs, metas, views, actions = \
        [], [], [], [], [], [], [], [], []
    for _ in range(batch):
        clip = cache.get(ids[int(rng.integers(len(ids)))])
        i = int(rng.integers(k_total))
        left, right = (i - 1) % k_total, (i + 1) % k_total
        videos.append(clip.video[:, i])
        lefts.append(clip.video[:, left])
        rights.append(clip.video[:, right])
        own_ctx.append(clip.video[0, i])
        if mode == "layout":
            persps.append(clip.layouts_persp[:, i])
            bevs.append(clip.layouts_bev)
        else:
            persps.append(clip.layouts_persp[0, i])
            bevs.append(clip.layouts_bev[0])
        metas.append([int(clip.meta.weather), int(clip.meta.lighting)])
        views.append(i)
        actions.append(clip.actions)
    return {
        "video": torch.from_numpy(np.stack(videos))[:, :, None],      # [B,T,1,3,H,W]
        "left": torch.from_numpy(np.stack(lefts)),
        "right": torch.from_numpy(np.stack(rights)),
        "own_ctx": torch.from_numpy(np.stack(own_ctx)),
        "persp": torch.from_numpy(np.stack(persps)),
        "bev": torch.from_numpy(np.stack(bevs)),
        "metas": torch.tensor(metas, dtype=torch.long),
        "views": torch.tensor(views, dtype=torch.long),
        "actions": torch.from_numpy(np.stack(actions)) if mode == "action" else None,
    }


def batch_cond_tokens(model: WorldModel, batch: dict, cfg: Config, *, image_mode: bool,
                      drop_p: float, rng: torch.Generator | None) -> torch.Tensor:
    t_frames = 1 if image_mode else batch["video"].shape[1]
    if image_mode:
        # layout + meta only; the image/action sources join in stage 2
        return image_frame_cond_tokens(
            model.encoders, persp=batch["persp"][:, 0], bev=batch["bev"],
            meta_codes=batch["metas"], drop_p=drop_p, rng=rng)
    frozen = model.stage == "video"
    if model.kind == "joint":
        return joint_cond_tokens(
            model.encoders, ctx_frames=batch["ctx"], persp=batch["persp"],
            bev=batch["bev"], meta_codes=batch["metas"],
            actions=batch["actions"], t_frames=t_frames, mode=model.mode,
            drop_p=drop_p, rng=rng, frozen_spatial=frozen)
    return stitch_cond_tokens(
        model.encoders, left=batch["left"], right=batch["right"],
        own_ctx=batch["own_ctx"], persp=batch["persp"], bev=batch["bev"],
        meta_codes=batch["metas"], view_idx=batch["views"],
        actions=batch["actions"], mode=model.mode, drop_p=drop_p, rng=rng,
        frozen_spatial=frozen)


# ---------------------------------------------------------------------------
# training loops

def _train_steps(model: WorldModel, cache: ClipCache, ids: list[str], cfg: Config,
                 *, stage: str, steps: int, lr: float, batch_fn, seed: int,
                 log: TrainLog, log_every: int = 50,
                 stop_fn=None) -> None:
    params = model.trainable_parameters(stage)
    opt = torch.optim.AdamW(params, lr=lr)
    rng_np = np.random.default_rng(seed)
    rng_t = torch.Generator().manual_seed(seed)
    image_mode = stage == "image"
    model.net.train()
    for step in range(steps):
        batch = batch_fn(cache, ids, cfg, rng_np)
        tokens = batch_cond_tokens(model, batch, cfg, image_mode=image_mode,
                                   drop_p=cfg.cond.dropout, rng=rng_t)
        z = batch["video"] * 2.0 - 1.0

        def eps_model(z_tau, tau, _tokens=tokens, _img=image_mode):
            return model.eval_eps(z_tau, tau, _tokens, video_mode=not _img)

        loss = denoising_loss(eps_model, z, model.schedule, rng_t)
        opt.zero_grad(set_to_none=True)
        loss.backward()
        opt.step()
        log.losses.append(float(loss.detach()))
        if log_every and (step + 1) % log_every == 0:
            sm = log.smoothed()[-1] if log.smoothed() else float("nan")
            print(f"    step {step + 1}/{steps} loss {sm:.4f}", flush=True)
        if stop_fn is not None and stop_fn(log):
            break
    model.net.eval()


def train_image_stage(cfg: Config, dataset: Dataset, steps: int | None = None,
                      seed: int = 0, log_every: int | None = None,
                      stop_fn=None) -> tuple[WorldModel, TrainLog]:
    """Stage 1: conditional image diffusion over single frames (spatial only)."""
    model = model_from_config(cfg, "joint", "layout", seed=seed)
    model.stage = "image"
    cache = ClipCache(dataset)
    log = TrainLog()
    n = steps if steps is not None else cfg.train.stage1_steps
    batch_fn = lambda c, i, cf, r: image_batch(c, i, cf, r, cfg.train.batch_frames)
    _train_steps(model, cache, dataset.clip_ids, cfg, stage="image", steps=n,
                 lr=cfg.train.lr_stage1, batch_fn=batch_fn, seed=seed, log=log,
                 log_every=cfg.train.log_every if log_every is None else log_every,
                 stop_fn=stop_fn)
    return model, log


def lift_to_video(image_model: WorldModel, cfg: Config, kind: str,
                  mode: str) -> WorldModel:
    """Build a video model whose spatial group equals the image model's."""
    if image_model.stage != "image":
        raise TrainingStateError("stage 2 requires a stage-1 (image) model")
    model = model_from_config(cfg, kind, mode, seed=1)
    model.stage = "video"
    src_net = image_model.net.state_dict()
    dst_net = model.net.state_dict()
    spatial = set(model.net.parameter_groups()["spatial"])
    for name in dst_net:
        if name in spatial and name in src_net and src_net[name].shape == dst_net[name].shape:
            dst_net[name] = src_net[name].clone()
    model.net.load_state_dict(dst_net)
    src_enc = image_model.encoders.state_dict()
    dst_enc = model.encoders.state_dict()
    for name in model.encoders.spatial_parameter_names():
        if name in src_enc and src_enc[name].shape == dst_enc[name].shape:
            dst_enc[name] = src_enc[name].clone()
    model.encoders.load_state_dict(dst_enc)
    return model


def train_video_stage(cfg: Config, dataset: Dataset, image_model: WorldModel,
                      kind: str, mode: str, steps: int | None = None,
                      seed: int = 1) -> tuple[WorldModel, TrainLog]:
    """Stage 2: freeze spatial, fit temporal + multiview on clips."""
    model = lift_to_video(image_model, cfg, kind, mode)
    cache = ClipCache(dataset)
    log = TrainLog()
    if kind == "joint":
        n = steps if steps is not None else cfg.train.stage2_steps
        batch_fn = lambda c, i, cf, r: joint_clip_batch(c, i, cf, r,
                                                        cfg.train.batch_clips, mode)
    else:
        n = steps if steps is not None else cfg.train.stitch_steps
        batch_fn = lambda c, i, cf, r: stitch_clip_batch(c, i, cf, r,
                                                         cfg.train.batch_clips, mode)
    _train_steps(model, cache, dataset.clip_ids, cfg, stage="video", steps=n,
                 lr=cfg.train.lr_stage2, batch_fn=batch_fn, seed=seed, log=log,
                 log_every=cfg.train.log_every)
    return model, log


def two_stage_fit(cfg: Config, dataset: Dataset, kind: str = "joint",
                  mode: str = "layout", stage1_steps: int | None = None,
                  stage2_steps: int | None = None, seed: int = 0
                  ) -> tuple[WorldModel, TrainLog, TrainLog]:
    image_model, log1 = train_image_stage(cfg, dataset, stage1_steps, seed=seed)
    video_model, log2 = train_video_stage(cfg, dataset, image_model, kind, mode,
                                          stage2_steps, seed=seed + 1)
    return video_model, log1, log2
