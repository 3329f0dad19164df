"""Multiview clip sample format and the synthetic-world clip generator."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..config import Config
from ..world import (CameraRig, SceneMeta, WorldState, build_world,
                     lane_polyline, project_layout, render_views, step_world)


@dataclass
class MultiviewClip:
    """A [T, K] multiview video with layouts, actions, and meta.

    ``actions[t]`` is the ego displacement from ``ego_trajectory[t]`` to the
    next position; for the last frame it comes from the source trajectory's
    extra point.
    """

    clip_id: str
    video: np.ndarray            # [T, K, 3, H, W] float32 in [0, 1]
    layouts_persp: np.ndarray    # [T, K, 3, H, W] float32
    layouts_bev: np.ndarray      # [T, 3, B, B] float32
    actions: np.ndarray          # [T, 2] m
    ego_trajectory: np.ndarray   # [T, 2] m (world frame)
    meta: SceneMeta

    def __post_init__(self):
        t = self.video.shape[0]
        if t < 2:
            raise ValueError("clips need T >= 2 frames")
        if not np.isfinite(self.video).all():
            raise ValueError("video must be finite")
        diff = self.ego_trajectory[1:] - self.ego_trajectory[:-1]
        if not np.allclose(self.actions[: t - 1], diff, atol=1e-6):
            raise ValueError("actions[t] must equal trajectory[t+1] - trajectory[t]")

    @property
    def t(self) -> int:
        return self.video.shape[0]

    @property
    def k(self) -> int:
        return self.video.shape[1]

    def mean_speed(self, dt: float) -> float:
        return float(np.hypot(self.actions[:, 0], self.actions[:, 1]).mean() / dt)

    def heading_changes_deg(self) -> np.ndarray:
        """Per-step signed heading change of the trajectory, degrees."""
        d = self.actions
        headings = np.arctan2(d[:, 1], d[:, 0])
        delta = np.diff(headings)
        return np.degrees((delta + np.pi) % (2 * np.pi) - np.pi)


def rig_from_config(cfg: Config) -> CameraRig:
    return CameraRig(
        k=cfg.rig.k,
        fov=math.radians(cfg.rig.fov_deg),
        image_hw=(cfg.render.h, cfg.render.w),
        mount_height=cfg.rig.mount_height,
    )


def _maneuver_trajectory(rng: np.random.Generator, state: WorldState,
                         n_points: int, dt: float, cruise: float) -> np.ndarray:
    """Ego positions [n_points, 2]: lane-follow, arc, or speed-ramp maneuvers."""
    kind = rng.choice(["lane", "arc", "ramp"], p=[0.45, 0.4, 0.15])
    x, y, heading = state.ego_pose
    if kind == "lane":
        lane, _ = state.ego_track
        line = lane_polyline(state.road, lane)
        s0, _ = line.project(np.array([x, y]))
        speed = float(rng.uniform(1.0, 9.0))
        return np.stack([line.point_at(s0 + i * speed * dt) for i in range(n_points)])
    pts = [np.array([x, y])]
    if kind == "arc":
        speed = float(rng.uniform(1.0, 9.0))
        turn = math.radians(float(rng.uniform(-10.0, 10.0)))
        h = heading
        for _ in range(n_points - 1):
            h += turn
            pts.append(pts[-1] + speed * dt * np.array([math.cos(h), math.sin(h)]))
    else:  # ramp: accelerate or brake along the current heading
        v0 = float(rng.uniform(0.5, 4.0))
        v1 = float(rng.uniform(4.0, 9.0))
        if rng.random() < 0.5:
            v0, v1 = v1, v0
        for i in range(n_points - 1):
            v = v0 + (v1 - v0) * i / max(n_points - 2, 1)
            pts.append(pts[-1] + v * dt * np.array([math.cos(heading), math.sin(heading)]))
    return np.stack(pts)


def generate_clip(seed: int, cfg: Config) -> MultiviewClip:
    """One deterministic training clip: build a world, drive a maneuver, record."""
    rig = rig_from_config(cfg)
    t_frames = cfg.clip.frames
    dt = cfg.clip.dt_s
    state = build_world(seed, cfg)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xC11F]))
    traj = _maneuver_trajectory(rng, state, t_frames + 1, dt, cfg.world.cruise_speed)

    video = np.empty((t_frames, rig.k, 3, cfg.render.h, cfg.render.w), dtype=np.float32)
    persp = np.empty_like(video)
    bev = np.empty((t_frames, 3, cfg.render.bev_size, cfg.render.bev_size), dtype=np.float32)
    for t in range(t_frames):
        frame = render_views(state, rig)
        video[t] = frame.images
        for k in range(rig.k):
            lr = project_layout(state, k, rig, cfg.render.bev_size, cfg.render.bev_scale)
            persp[t, k] = lr.perspective
            if k == 0:
                bev[t] = lr.bev
        action = traj[t + 1] - traj[t]
        state = step_world(state, (float(action[0]), float(action[1])), dt)
    actions = np.diff(traj, axis=0).astype(np.float32)
    return MultiviewClip(
        clip_id=f"clip{seed:06d}",
        video=video,
        layouts_persp=persp,
        layouts_bev=bev,
        actions=actions,
        ego_trajectory=traj[:t_frames].astype(np.float32),
        meta=state.meta,
    )
