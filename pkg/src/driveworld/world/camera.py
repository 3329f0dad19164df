"""Pinhole projection for the ring rig: all cameras share the mount point."""

from __future__ import annotations

import math

import numpy as np

from .types import CameraRig, WorldState

NEAR_PLANE = 0.15


def view_yaw(state_heading: float, rig: CameraRig, view: int) -> float:
    return state_heading + rig.yaw_offsets[view]


def world_to_cam(points: np.ndarray, ego_pose: tuple[float, float, float],
                 rig: CameraRig, view: int) -> np.ndarray:
    """World [N, 2 or 3] -> camera frame [N, 3] = (forward, left, up).

    The camera sits at the ego position at mount height; heights default to 0.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if pts.shape[1] == 2:
        pts = np.concatenate([pts, np.zeros((len(pts), 1))], axis=1)
    x, y, heading = ego_pose
    yaw = heading + rig.yaw_offsets[view]
    c, s = math.cos(yaw), math.sin(yaw)
    dx = pts[:, 0] - x
    dy = pts[:, 1] - y
    fwd = c * dx + s * dy
    left = -s * dx + c * dy
    up = pts[:, 2] - rig.mount_height
    return np.stack([fwd, left, up], axis=1)


def cam_to_pixel(cam: np.ndarray, rig: CameraRig) -> np.ndarray:
    """Camera frame [N, 3] -> pixel coords [N, 2] (u right, v down).

    Callers must cull points behind the near plane first; forward depth <= 0
    produces inf coordinates.
    """
    h, w = rig.image_hw
    f = rig.focal
    cx = (w - 1) / 2.0
    cy = (h - 1) / 2.0
    fwd = cam[:, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = cx + f * (-cam[:, 1]) / fwd
        v = cy + f * (-cam[:, 2]) / fwd
    bad = fwd <= 0
    u = np.where(bad, np.inf, u)
    v = np.where(bad, np.inf, v)
    return np.stack([u, v], axis=1)


def project_world(points: np.ndarray, state: WorldState, rig: CameraRig,
                  view: int) -> tuple[np.ndarray, np.ndarray]:
    """World points -> (pixels [N, 2], forward depth [N])."""
    cam = world_to_cam(points, state.ego_pose, rig, view)
    return cam_to_pixel(cam, rig), cam[:, 0]


def pixel_ground_grid(rig: CameraRig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-pixel ground intersection in the camera frame.

    Returns (forward, left, valid) arrays of shape [H, W]; valid is False above
    the horizon.
    """
    h, w = rig.image_hw
    f = rig.focal
    cx = (w - 1) / 2.0
    cy = (h - 1) / 2.0
    v = np.arange(h, dtype=np.float64)[:, None] - cy
    u = np.arange(w, dtype=np.float64)[None, :] - cx
    valid = np.broadcast_to(v > 1e-9, (h, w))
    with np.errstate(divide="ignore", invalid="ignore"):
        fwd = np.where(valid, f * rig.mount_height / np.where(v == 0, np.nan, v), np.inf)
        left = np.where(valid, -u * fwd / f, 0.0)
    fwd = np.broadcast_to(fwd, (h, w))
    return fwd, left, valid


def ground_from_pixels(us: np.ndarray, vs: np.ndarray, rig: CameraRig,
                       view: int) -> np.ndarray:
    """Pixels (below horizon) -> ego-frame ground points [N, 2]."""
    h, w = rig.image_hw
    f = rig.focal
    cx = (w - 1) / 2.0
    cy = (h - 1) / 2.0
    dv = np.maximum(np.asarray(vs, dtype=np.float64) - cy, 1e-9)
    fwd = f * rig.mount_height / dv
    left = -(np.asarray(us, dtype=np.float64) - cx) * fwd / f
    yaw = rig.yaw_offsets[view]
    c, s = math.cos(yaw), math.sin(yaw)
    x = c * fwd - s * left
    y = s * fwd + c * left
    return np.stack([x, y], axis=1)


def bearing_from_column(u: float, rig: CameraRig, view: int) -> float:
    """Ego-frame azimuth of a pixel column."""
    h, w = rig.image_hw
    cx = (w - 1) / 2.0
    cam_az = math.atan2(-(u - cx), rig.focal)
    return cam_az + rig.yaw_offsets[view]


def agent_in_frustum(state: WorldState, rig: CameraRig, agent_idx: int,
                     max_dist: float = 25.0) -> bool:
    """True when the agent's footprint projects fully in front of >= 1 camera
    within ``max_dist`` of the mount, with its centroid inside that image."""
    agent = state.agents[agent_idx]
    ex, ey, _ = state.ego_pose
    d = math.hypot(agent.center[0] - ex, agent.center[1] - ey)
    # the rig cannot see the ground closer than the bottom image row; agents
    # with their centre inside that blind ring are out of coverage
    h_img = rig.image_hw[0]
    blind = rig.focal * rig.mount_height * 2.0 / (h_img - 1) + 0.3
    if d > max_dist or d < max(blind, 1.0):
        return False
    corners = agent.footprint()
    h, w = rig.image_hw
    for view in range(rig.k):
        cam = world_to_cam(corners, state.ego_pose, rig, view)
        if (cam[:, 0] > NEAR_PLANE).all():
            px = cam_to_pixel(cam, rig)
            # visible if the projected footprint's bbox meets the image
            if px[:, 0].max() >= 0 and px[:, 0].min() < w \
                    and px[:, 1].max() >= 0 and px[:, 1].min() < h:
                return True
    return False
