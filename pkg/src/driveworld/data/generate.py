"""Dataset generation driver: worlds -> clips -> tagged, binned dataset."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..config import Config
from .binning import digitize_action, split_clips_by_behavior
from .clips import MultiviewClip, generate_clip
from .store import Dataset, export_dataset


def tag_clip(clip: MultiviewClip, cfg: Config) -> dict:
    """Manifest entry with the clip's action bin and behavior tag."""
    deltas = clip.heading_changes_deg()
    mean_delta = float(deltas.mean()) if len(deltas) else 0.0
    if abs(mean_delta) < cfg.data.theta_straight_deg:
        behavior = "straight"
    else:
        behavior = "left" if mean_delta > 0 else "right"
    speed = clip.mean_speed(cfg.clip.dt_s)
    steer = mean_delta * cfg.data.steer_scale
    b = digitize_action(speed, steer)
    return {"id": clip.clip_id, "bin": [b.speed_bin, b.steer_bin], "behavior": behavior}


def generate_dataset(cfg: Config, path: str | Path, n_clips: int | None = None,
                     seed0: int = 0, progress: bool = False) -> Dataset:
    n = n_clips if n_clips is not None else cfg.data.n_clips
    clips = []
    entries = []
    for i in range(n):
        clip = generate_clip(seed0 + i, cfg)
        segments = split_clips_by_behavior(
            clip.ego_trajectory, min_frames=2, theta_straight_deg=cfg.data.theta_straight_deg)
        entry = tag_clip(clip, cfg)
        entry["segments"] = [[s.start, s.stop, s.tag] for s in segments]
        clips.append(clip)
        entries.append(entry)
        if progress and (i + 1) % 25 == 0:
            print(f"  generated {i + 1}/{n} clips")
    return export_dataset(clips, path, entries, seed=seed0,
                          extra={"config_fingerprint": cfg.fingerprint()})


def bin_histogram(dataset: Dataset) -> np.ndarray:
    """Counts over the 32 x 11 action grid (steer x speed)."""
    grid = np.zeros((32, 11), dtype=np.int64)
    for entry in dataset.manifest["clips"]:
        speed_bin, steer_bin = entry["bin"]
        grid[steer_bin, speed_bin] += 1
    return grid
