"""Shared acceptance-scale configuration and cached artifact builder.

The training-dependent acceptance criteria share one toy pipeline: a 200-clip
dataset and five checkpoints (image stage, joint/stitch in layout and action
modes).  Artifacts are cached on disk keyed by the config fingerprint so a
green suite can be re-run without retraining; deleting the cache rebuilds
everything from scratch.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

from driveworld.config import Config

CACHE_ENV = "DRIVEWORLD_TEST_CACHE"


def acceptance_config() -> Config:
    cfg = Config()
    cfg.rig.fov_deg = 80.0            # 20-degree view overlap at desk scale
    cfg.render.h, cfg.render.w = 24, 48
    cfg.render.bev_size = 32
    cfg.net.base_channels = 16
    cfg.net.channel_mults = (1, 2, 4)
    cfg.net.attention_levels = (1, 2)
    cfg.net.token_dim = 96
    cfg.cond.image_stages = 2
    cfg.clip.frames = 8
    cfg.train.batch_frames = 12
    cfg.train.stage1_steps = 2500
    cfg.train.stage2_steps = 800
    cfg.train.stitch_steps = 800
    cfg.train.log_every = 200
    cfg.sample.steps = 20             # evaluation sampling budget
    cfg.planner.sample_steps = 8      # imagination budget
    return cfg.validate()


def cache_dir() -> Path:
    return Path(os.environ.get(CACHE_ENV, Path(__file__).resolve().parent.parent
                               / ".cache" / "acceptance"))


def dataset_dir() -> Path:
    return cache_dir() / "dataset"


def models_dir() -> Path:
    return cache_dir() / "models"


def build_artifacts(progress: bool = True) -> None:
    """Generate the dataset and train all checkpoints (idempotent)."""
    import torch

    torch.set_num_threads(1)
    from driveworld.data import generate_dataset, load_dataset
    from driveworld.net.training import (WorldModel, train_image_stage,
                                         train_video_stage)

    cfg = acceptance_config()
    root = cache_dir()
    root.mkdir(parents=True, exist_ok=True)
    stamp = root / "fingerprint.json"
    if stamp.exists() and json.loads(stamp.read_text()).get("fingerprint") \
            == cfg.fingerprint() and (models_dir() / "stitch_action").exists():
        return

    if progress:
        print("[accept] generating dataset", flush=True)
    if not (dataset_dir() / "manifest.json").exists():
        generate_dataset(cfg, dataset_dir(), seed0=0, progress=progress)
    ds = load_dataset(dataset_dir())

    models = models_dir()
    if not (models / "image" / "model.json").exists():
        if progress:
            print("[accept] training stage 1 (image model)", flush=True)
        image_model, _ = train_image_stage(cfg, ds, seed=0)
        image_model.save(models / "image", cfg)
    image_model = WorldModel.load(models / "image")

    for kind, mode in (("joint", "layout"), ("stitch", "layout"),
                       ("joint", "action"), ("stitch", "action")):
        name = f"{kind}_{mode}"
        if (models / name / "model.json").exists():
            continue
        if progress:
            print(f"[accept] training stage 2: {name}", flush=True)
        model, _ = train_video_stage(cfg, ds, image_model, kind, mode, seed=1)
        model.save(models / name, cfg)

    stamp.write_text(json.dumps({"fingerprint": cfg.fingerprint()}))


if __name__ == "__main__":
    build_artifacts()
