"""Flat-ground renderer for the K-camera rig.

Everything on the ground plane (road surface, lane markings, curbs) is drawn
once per frame into a world-aligned ground texture and resampled per view, so
overlapping views see bit-consistent content.  Agents are drawn per view as
projected cuboids.  Colors follow a fixed hue-family scheme that the oracle
perceiver decodes:

    hue band          element
    [0.00, 0.08]      vehicle footprint (saturation encodes camera distance)
    [0.11, 0.20]      lane markings (dashed yellow)
    [0.30, 0.37]      pedestrian footprint (saturation encodes distance)
    [0.50, 0.60]      curbs
    [0.88, 0.97]      vehicle body

Weather/lighting tags only remap the value channel (a bijection), so decoding
is identical across all tags.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import cv2
import numpy as np
from matplotlib.colors import hsv_to_rgb

from .camera import NEAR_PLANE, pixel_ground_grid, world_to_cam, cam_to_pixel
from .types import AgentBox, CameraRig, Lighting, SceneMeta, Weather, WorldState

# Hue-family constants (H, S, V in [0, 1]).
HUE_VEHICLE_FOOT = 0.04
HUE_VEHICLE_BODY = 0.93
HUE_PED_FOOT = 0.335
HUE_PED_BODY = 0.27
HUE_LANE = 0.155
HUE_CURB = 0.55

BAND_VEHICLE_FOOT = (0.0, 0.08)
BAND_LANE = (0.11, 0.20)
BAND_PED_FOOT = (0.30, 0.37)
BAND_CURB = (0.50, 0.60)
BAND_VEHICLE_BODY = (0.88, 0.97)

HAZE_LAMBDA = 40.0       # metres; footprint saturation = exp(-d / HAZE_LAMBDA)
SAT_DECODE_MIN = 0.30    # decoder mask threshold

ROAD_FILL = (0.0, 0.0, 0.30)
GROUND_FILL = (0.10, 0.08, 0.55)
SKY_BASE = 0.80
SKY_AMP = 0.12
SUN_AZIMUTH = 0.8        # world azimuth of the bright sky sector
FAR_CLIP = 38.0          # metres of ground texture coverage
TEX_RES = 0.25           # metres per texel
DASH_ON = 2.0            # lane-marking dash pattern (m)
DASH_OFF = 2.0


@dataclass(frozen=True)
class MultiviewFrame:
    """One time step of all K views, float32 RGB in [0, 1]."""

    images: np.ndarray           # [K, 3, H, W]
    meta: SceneMeta

    def view(self, i: int) -> np.ndarray:
        return self.images[i]


@dataclass(frozen=True)
class LayoutRaster:
    """Conditioning rasters: perspective wireframes plus the ego-centric BEV."""

    perspective: np.ndarray      # [3, H, W] in [0, 1]
    bev: np.ndarray              # [3, B, B]: channels (drivable, agents, lines)


def value_transform(meta: SceneMeta) -> tuple[float, float]:
    """Affine value-channel map (offset, gain); strictly positive gain."""
    offset, gain = 0.0, 1.0
    if meta.weather == Weather.RAINY:
        offset, gain = offset + 0.05 * gain, gain * 0.72
    if meta.lighting == Lighting.NIGHT:
        offset, gain = 0.04 + 0.45 * offset, 0.45 * gain
    return offset, gain


def apply_palette(img_hsv: np.ndarray, meta: SceneMeta) -> np.ndarray:
    offset, gain = value_transform(meta)
    out = img_hsv.copy()
    out[..., 2] = np.clip(offset + gain * out[..., 2], 0.0, 1.0)
    return out


def _hsv_color(h: float, s: float, v: float) -> tuple[float, float, float]:
    return float(h), float(s), float(v)


def _ground_texture(state: WorldState) -> tuple[np.ndarray, np.ndarray, float]:
    """World-aligned HSV texture around the ego plus its origin and resolution."""
    ex, ey, _ = state.ego_pose
    n = int(2 * FAR_CLIP / TEX_RES)
    origin = np.array([ex - FAR_CLIP, ey - FAR_CLIP])
    tex = np.empty((n, n, 3), dtype=np.float32)
    tex[...] = GROUND_FILL

    def to_px(pts: np.ndarray) -> np.ndarray:
        return np.round((pts - origin) / TEX_RES).astype(np.int32)

    # road fill
    poly = state.road.drivable
    rings = [np.asarray(poly.exterior.coords)] + [np.asarray(r.coords) for r in poly.interiors]
    cv2.fillPoly(tex, [to_px(r) for r in rings], _hsv_color(*ROAD_FILL))

    # curbs: solid lines
    for curb in state.road.curbs:
        cv2.polylines(tex, [to_px(curb)], False, _hsv_color(HUE_CURB, 0.9, 0.85), 2)

    # road studs: unsaturated bright dots, isotropic corner fodder
    if len(state.road.studs):
        px = to_px(state.road.studs[:, :2])
        n = tex.shape[0]
        ok = (px[:, 0] >= 0) & (px[:, 0] < n - 1) & (px[:, 1] >= 0) & (px[:, 1] < n - 1)
        for (cx_px, cy_px), v in zip(px[ok], state.road.studs[ok, 2]):
            tex[cy_px: cy_px + 2, cx_px: cx_px + 2] = (0.0, 0.05, float(v))

    # lane markings: dashes with world-anchored phase
    for line in state.road.centerlines:
        seg = np.diff(line, axis=0)
        lens = np.hypot(seg[:, 0], seg[:, 1])
        cum = np.concatenate([[0.0], np.cumsum(lens)])
        period = DASH_ON + DASH_OFF
        s = 0.0
        while s < cum[-1]:
            if (s % period) < DASH_ON:
                s_end = min(s + DASH_ON - (s % period), cum[-1])
                i0 = np.searchsorted(cum, s, side="right") - 1
                i1 = np.searchsorted(cum, s_end, side="right") - 1
                p0 = line[i0] + (line[min(i0 + 1, len(line) - 1)] - line[i0]) * (
                    (s - cum[i0]) / max(lens[min(i0, len(lens) - 1)], 1e-9))
                p1 = line[i1] + (line[min(i1 + 1, len(line) - 1)] - line[i1]) * (
                    (s_end - cum[i1]) / max(lens[min(i1, len(lens) - 1)], 1e-9))
                cv2.polylines(tex, [to_px(np.stack([p0, p1]))], False,
                              _hsv_color(HUE_LANE, 0.9, 0.9), 1)
                s = s_end + DASH_OFF
            else:
                s = s - (s % period) + period
    return tex, origin, TEX_RES


def _sky_rows(rig: CameraRig, state_heading: float, view: int) -> np.ndarray:
    """Azimuth-shaded sky color per column, [W, 3] HSV."""
    h, w = rig.image_hw
    f = rig.focal
    cx = (w - 1) / 2.0
    u = np.arange(w) - cx
    az = state_heading + rig.yaw_offsets[view] + np.arctan2(-u, f)
    v = SKY_BASE + SKY_AMP * np.cos(az - SUN_AZIMUTH)
    sky = np.zeros((w, 3), dtype=np.float32)
    sky[:, 0] = 0.60
    sky[:, 1] = 0.12
    sky[:, 2] = v
    return sky


def _distance_dim(d: np.ndarray) -> np.ndarray:
    return (0.55 + 0.45 * np.exp(-d / 60.0)).astype(np.float32)


def background_template(rig: CameraRig, meta: SceneMeta, view: int,
                        state_heading: float = 0.0) -> np.ndarray:
    """Sky + bare-ground view with no geometry, [3, H, W] RGB."""
    h, w = rig.image_hw
    hsv = np.empty((h, w, 3), dtype=np.float32)
    sky = _sky_rows(rig, state_heading, view)
    for r in range(h):
        hsv[r, :, :] = sky
    fwd, left, valid = pixel_ground_grid(rig)
    d = np.hypot(fwd, left)
    ground = np.empty((h, w, 3), dtype=np.float32)
    ground[...] = GROUND_FILL
    ground[..., 2] *= _distance_dim(d)
    hsv[valid] = ground[valid]
    hsv = apply_palette(hsv, meta)
    rgb = hsv_to_rgb(hsv).astype(np.float32)
    return np.transpose(rgb, (2, 0, 1))


def _draw_agents_hsv(img_hsv: np.ndarray, state: WorldState, rig: CameraRig,
                     view: int, wireframe: bool) -> None:
    """Paint projected agent cuboids (far to near) into the HSV image."""
    h, w = rig.image_hw
    ex, ey, _ = state.ego_pose
    order = sorted(
        range(len(state.agents)),
        key=lambda i: -math.hypot(state.agents[i].center[0] - ex,
                                  state.agents[i].center[1] - ey),
    )
    for idx in order:
        agent = state.agents[idx]
        foot = agent.footprint()
        height = agent.size[2]
        corners = np.concatenate(
            [np.concatenate([foot, np.zeros((4, 1))], axis=1),
             np.concatenate([foot, np.full((4, 1), height)], axis=1)], axis=0)
        cam = world_to_cam(corners, state.ego_pose, rig, view)
        if (cam[:, 0] <= NEAR_PLANE).any():
            continue
        px = cam_to_pixel(cam, rig)
        if (px[:, 0] < -w).all() or (px[:, 0] > 2 * w).all():
            continue
        d = float(math.hypot(agent.center[0] - ex, agent.center[1] - ey))
        pts = np.round(px).astype(np.int32)
        if agent.category == "vehicle":
            hue_body, hue_foot = HUE_VEHICLE_BODY, HUE_VEHICLE_FOOT
        else:
            hue_body, hue_foot = HUE_PED_BODY, HUE_PED_FOOT
        sat_foot = float(math.exp(-d / HAZE_LAMBDA))
        if wireframe:
            edges = [(0, 1), (1, 2), (2, 3), (3, 0), (4, 5), (5, 6), (6, 7), (7, 4),
                     (0, 4), (1, 5), (2, 6), (3, 7)]
            color = _hsv_color(hue_body, 0.9, 0.9)
            for a, b in edges:
                cv2.line(img_hsv, tuple(pts[a]), tuple(pts[b]), color, 1)
        else:
            hull = cv2.convexHull(pts)
            body_v = float(0.80 * (0.55 + 0.45 * math.exp(-d / 60.0)))
            cv2.fillPoly(img_hsv, [hull], _hsv_color(hue_body, 0.85, body_v))
            foot_px = pts[:4]
            cv2.fillPoly(img_hsv, [foot_px], _hsv_color(hue_foot, sat_foot, 0.95))
            cv2.polylines(img_hsv, [foot_px], True, _hsv_color(hue_foot, sat_foot, 0.95), 1)


def render_views(state: WorldState, rig: CameraRig) -> MultiviewFrame:
    """Render all K views; float32 RGB images in [0, 1]."""
    h, w = rig.image_hw
    tex, origin, res = _ground_texture(state)
    fwd, left, valid = pixel_ground_grid(rig)
    d = np.hypot(fwd, left)
    dim = _distance_dim(np.where(valid, d, 1.0))
    ex, ey, heading = state.ego_pose
    images = np.empty((rig.k, 3, h, w), dtype=np.float32)
    for view in range(rig.k):
        hsv = np.empty((h, w, 3), dtype=np.float32)
        sky = _sky_rows(rig, heading, view)
        for r in range(h):
            hsv[r, :, :] = sky
        yaw = heading + rig.yaw_offsets[view]
        c, s = math.cos(yaw), math.sin(yaw)
        fwd_safe = np.where(valid, fwd, 0.0)
        left_safe = np.where(valid, left, 0.0)
        wx = ex + c * fwd_safe - s * left_safe
        wy = ey + s * fwd_safe + c * left_safe
        ti = np.round((wx - origin[0]) / res).astype(np.int64)
        tj = np.round((wy - origin[1]) / res).astype(np.int64)
        inside = valid & (ti >= 0) & (ti < tex.shape[0]) & (tj >= 0) & (tj < tex.shape[1]) \
            & (np.where(valid, d, np.inf) < FAR_CLIP)
        ground = np.empty((h, w, 3), dtype=np.float32)
        ground[...] = GROUND_FILL
        ground[inside] = tex[tj[inside], ti[inside]]
        ground[..., 2] = ground[..., 2] * dim
        hsv[valid] = ground[valid]
        _draw_agents_hsv(hsv, state, rig, view, wireframe=False)
        hsv = apply_palette(hsv, state.meta)
        images[view] = np.transpose(hsv_to_rgb(hsv).astype(np.float32), (2, 0, 1))
    return MultiviewFrame(images=images, meta=state.meta)


def _bev_raster(state: WorldState, bev_size: int, bev_scale: float) -> np.ndarray:
    """Ego-centric top view, [3, B, B]: (drivable, agents, lines); ego faces up."""
    b = bev_size
    out = np.zeros((3, b, b), dtype=np.float32)
    ex, ey, heading = state.ego_pose
    c, s = math.cos(heading), math.sin(heading)

    def to_px(pts: np.ndarray) -> np.ndarray:
        dx = pts[:, 0] - ex
        dy = pts[:, 1] - ey
        fwd = c * dx + s * dy
        left = -s * dx + c * dy
        col = b / 2.0 - left / bev_scale
        row = b / 2.0 - fwd / bev_scale
        return np.round(np.stack([col, row], axis=1)).astype(np.int32)

    layer = np.zeros((b, b), dtype=np.float32)
    poly = state.road.drivable
    rings = [np.asarray(poly.exterior.coords)] + [np.asarray(r.coords) for r in poly.interiors]
    cv2.fillPoly(layer, [to_px(np.asarray(r)) for r in rings], 1.0)
    out[0] = layer

    layer = np.zeros((b, b), dtype=np.float32)
    for agent in state.agents:
        cv2.fillPoly(layer, [to_px(agent.footprint())], 1.0)
    out[1] = layer

    layer = np.zeros((b, b), dtype=np.float32)
    for line in state.road.centerlines:
        cv2.polylines(layer, [to_px(line)], False, 1.0, 1)
    for curb in state.road.curbs:
        cv2.polylines(layer, [to_px(curb)], False, 1.0, 1)
    out[2] = layer
    return out


def project_layout(state: WorldState, view: int, rig: CameraRig,
                   bev_size: int = 64, bev_scale: float = 0.75) -> LayoutRaster:
    """Wireframe/polyline conditioning raster for one view plus the shared BEV."""
    h, w = rig.image_hw
    hsv = np.zeros((h, w, 3), dtype=np.float32)
    # map polylines on the ground
    for line, hue in [*((c, HUE_LANE) for c in state.road.centerlines),
                      *((c, HUE_CURB) for c in state.road.curbs)]:
        cam = world_to_cam(line, state.ego_pose, rig, view)
        ok = cam[:, 0] > NEAR_PLANE
        px = cam_to_pixel(cam, rig)
        runs = np.split(np.arange(len(line)), np.where(~ok)[0])
        for run in runs:
            run = run[ok[run]] if len(run) else run
            if len(run) >= 2:
                pts = np.round(px[run]).astype(np.int32)
                cv2.polylines(hsv, [pts], False, _hsv_color(hue, 0.9, 0.9), 1)
    _draw_agents_hsv(hsv, state, rig, view, wireframe=True)
    rgb = np.transpose(hsv_to_rgb(hsv).astype(np.float32), (2, 0, 1))
    return LayoutRaster(perspective=rgb, bev=_bev_raster(state, bev_size, bev_scale))
