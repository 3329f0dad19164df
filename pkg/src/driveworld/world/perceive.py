"""Hue-decoding oracle perceiver for rendered (or generated) frames."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import cv2
import numpy as np
from matplotlib.colors import rgb_to_hsv

from .camera import bearing_from_column, ground_from_pixels
from .render import (BAND_CURB, BAND_LANE, BAND_PED_FOOT, BAND_VEHICLE_FOOT,
                     HAZE_LAMBDA, MultiviewFrame, SAT_DECODE_MIN)
from .types import CameraRig

MERGE_RADIUS = 1.0       # de-duplication distance across views (m)
ROW_DIST_MAX = 12.0      # below this range the bottom-row depth is trusted


@dataclass(frozen=True)
class PerceivedAgent:
    category: str
    position: tuple[float, float]   # ego frame (x forward at view 0 yaw=0)
    distance: float
    confidence: float


@dataclass
class PerceivedLayout:
    """Ego-frame layout recovered from one multiview frame."""

    agents: list[PerceivedAgent] = field(default_factory=list)
    centerline_points: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    curb_points: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    centerline_confidence: float = 0.0
    curb_confidence: float = 0.0

    def is_empty(self) -> bool:
        return (not self.agents and len(self.centerline_points) == 0
                and len(self.curb_points) == 0)


def _family_mask(hsv: np.ndarray, band: tuple[float, float]) -> np.ndarray:
    h = hsv[..., 0]
    s = hsv[..., 1]
    return (h >= band[0]) & (h <= band[1]) & (s > SAT_DECODE_MIN)


SAT_SHELL = 0.04  # footprints of one agent share one saturation; shells split queues


def _components_by_shell(hsv: np.ndarray, mask: np.ndarray):
    """Connected components within quantized-saturation shells.

    Two agents whose footprints touch in image space still separate because
    their haze saturations differ; noisy (generated) pixels may fragment,
    which the cross-view merge re-joins.
    """
    shells = np.floor(hsv[..., 1] / SAT_SHELL).astype(np.int32)
    for q in np.unique(shells[mask]):
        sub = (mask & (shells == q)).astype(np.uint8)
        n, labels = cv2.connectedComponents(sub, connectivity=8)
        for lbl in range(1, n):
            yield np.nonzero(labels == lbl)


def _decode_agents(hsv: np.ndarray, rig: CameraRig, view: int,
                   band: tuple[float, float], category: str) -> list[PerceivedAgent]:
    mask = _family_mask(hsv, band)
    if not mask.any():
        return []
    out = []
    h_img, _ = mask.shape
    cy = (h_img - 1) / 2.0
    for ys, xs in _components_by_shell(hsv, mask):
        if len(xs) < 1:
            continue
        below = ys > cy + 1e-6
        if not below.any():
            continue
        # range: the footprint fill carries exp(-d_center / lambda) in saturation
        s_med = float(np.median(hsv[ys, xs, 1]))
        d = -HAZE_LAMBDA * math.log(min(max(s_med, 1e-3), 1.0))
        # bearing: extent midpoint of the ground-projected footprint pixels
        # (a rectangle is centrally symmetric, so the AABB centre is unbiased)
        pts = ground_from_pixels(xs[below].astype(np.float64),
                                 ys[below].astype(np.float64), rig, view)
        mid = (pts.min(axis=0) + pts.max(axis=0)) / 2.0
        az = math.atan2(mid[1], mid[0])
        pos = (d * math.cos(az), d * math.sin(az))
        conf = min(1.0, len(xs) / 15.0)
        if xs.min() == 0 or xs.max() == hsv.shape[1] - 1:
            conf *= 0.3  # clipped at the image edge: bearing is biased
        out.append(PerceivedAgent(category, pos, d, conf))
    return out


def _same_agent(a: PerceivedAgent, b: PerceivedAgent) -> bool:
    """Detections of one agent from two views share the exact haze range but
    may each see only part of the footprint, so allow more cross-range slack."""
    if a.category != b.category:
        return False
    sep = math.hypot(a.position[0] - b.position[0], a.position[1] - b.position[1])
    if sep < MERGE_RADIUS:
        return True
    return abs(a.distance - b.distance) < 1.0 and sep < 2.2


def _merge_agents(agents: list[PerceivedAgent]) -> list[PerceivedAgent]:
    agents = sorted(agents, key=lambda a: -a.confidence)
    groups: list[list[PerceivedAgent]] = []
    for a in agents:
        for g in groups:
            if _same_agent(a, g[0]):
                g.append(a)
                break
        else:
            groups.append([a])
    merged = []
    for g in groups:
        wsum = sum(m.confidence for m in g) or 1.0
        x = sum(m.position[0] * m.confidence for m in g) / wsum
        y = sum(m.position[1] * m.confidence for m in g) / wsum
        d = sum(m.distance * m.confidence for m in g) / wsum
        merged.append(PerceivedAgent(g[0].category, (x, y), d,
                                     max(m.confidence for m in g)))
    return merged


def _decode_lines(hsv: np.ndarray, rig: CameraRig, view: int,
                  band: tuple[float, float]) -> np.ndarray:
    mask = _family_mask(hsv, band)
    h_img = mask.shape[0]
    cy = (h_img - 1) / 2.0
    ys, xs = np.nonzero(mask)
    below = ys > cy + 0.5
    if not below.any():
        return np.zeros((0, 2))
    return ground_from_pixels(xs[below].astype(np.float64),
                              ys[below].astype(np.float64), rig, view)


def oracle_perceive(frame: MultiviewFrame, rig: CameraRig) -> PerceivedLayout:
    """Recover agents and map geometry from rendered frames (ego frame)."""
    agents: list[PerceivedAgent] = []
    center_pts = []
    curb_pts = []
    for view in range(rig.k):
        img = np.transpose(frame.images[view], (1, 2, 0))
        hsv = rgb_to_hsv(np.clip(img, 0.0, 1.0))
        agents += _decode_agents(hsv, rig, view, BAND_VEHICLE_FOOT, "vehicle")
        agents += _decode_agents(hsv, rig, view, BAND_PED_FOOT, "pedestrian")
        center_pts.append(_decode_lines(hsv, rig, view, BAND_LANE))
        curb_pts.append(_decode_lines(hsv, rig, view, BAND_CURB))
    center = np.concatenate(center_pts, axis=0) if center_pts else np.zeros((0, 2))
    curb = np.concatenate(curb_pts, axis=0) if curb_pts else np.zeros((0, 2))
    return PerceivedLayout(
        agents=_merge_agents(agents),
        centerline_points=center,
        curb_points=curb,
        centerline_confidence=min(1.0, len(center) / 40.0),
        curb_confidence=min(1.0, len(curb) / 40.0),
    )
