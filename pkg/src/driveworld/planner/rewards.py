"""Image-based rewards: curb clearance, centerline keeping, object distance.

All rewards are computed per imagined frame from the oracle-perceived layout
(each imagined frame is ego-centric, so the ego sits at the origin); the
total is the product of the map and object rewards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..world.build import PEDESTRIAN_SIZE, VEHICLE_SIZE
from ..world.perceive import PerceivedLayout
from .candidates import fit_centerline

D_SAFE = 1.0          # curb clearance that saturates the curb reward (m)
SIGMA_CENTER = 0.5    # centerline penalty scale (m)
D_LONG = 5.0          # longitudinal object clearance scale (m)
D_LAT = 1.5           # lateral object clearance scale (m)
EGO_SIZE = VEHICLE_SIZE


@dataclass
class RewardBreakdown:
    r_curb: float
    r_center: float
    r_object: float
    low_confidence: bool = False

    def __post_init__(self):
        for name in ("r_curb", "r_center", "r_object"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} = {v} outside [0, 1]")

    @property
    def r_map(self) -> float:
        return self.r_curb * self.r_center

    @property
    def r_total(self) -> float:
        return self.r_map * self.r_object

    def as_dict(self) -> dict:
        return {"r_curb": self.r_curb, "r_center": self.r_center,
                "r_map": self.r_map, "r_object": self.r_object,
                "r_total": self.r_total, "low_confidence": self.low_confidence}


def _clamp01(x: float) -> float:
    return min(max(x, 0.0), 1.0)


def _curb_distance(perceived: PerceivedLayout) -> float | None:
    """Distance from the ego footprint boundary to the nearest fitted curb."""
    pts = perceived.curb_points
    if len(pts) < 4:
        return None
    half_l, half_w = EGO_SIZE[0] / 2.0, EGO_SIZE[1] / 2.0
    best = None
    # cluster curbs by lateral offset and fit a line to each side
    m = (pts[:, 0] > -4.0) & (pts[:, 0] < 18.0)
    pts = pts[m]
    if len(pts) < 4:
        return None
    for side in (-1.0, 1.0):
        sel = pts[np.sign(pts[:, 1]) == side]
        if len(sel) < 4:
            continue
        b, a = np.polyfit(sel[:, 0], sel[:, 1], 1)
        denom = math.hypot(b, 1.0)
        # distance from the footprint corners to the line y = a + b x
        corners = np.array([[half_l, half_w], [half_l, -half_w],
                            [-half_l, half_w], [-half_l, -half_w]])
        d = np.abs(corners[:, 1] - (a + b * corners[:, 0])) / denom
        signs = np.sign(corners[:, 1] - (a + b * corners[:, 0]))
        dist = 0.0 if len(set(signs.tolist())) > 1 else float(d.min())
        best = dist if best is None else min(best, dist)
    return best


def map_reward(perceived_frames: list[PerceivedLayout]) -> tuple[float, float, bool]:
    """(r_curb, r_center, low_confidence) over the imagined frames."""
    curb_vals = []
    offsets = []
    low_conf = False
    for perceived in perceived_frames:
        d = _curb_distance(perceived)
        if d is not None:
            curb_vals.append(_clamp01(d / D_SAFE))
        line = fit_centerline(perceived)
        if line is not None:
            a, b = line
            offsets.append(abs(a) / math.hypot(b, 1.0))
    if not curb_vals:
        r_curb = 1.0
        low_conf = True
    else:
        r_curb = min(curb_vals)
    if not offsets:
        r_center = 1.0
        low_conf = True
    else:
        r_center = math.exp(-float(np.mean(offsets)) / SIGMA_CENTER)
    return r_curb, r_center, low_conf


def _agent_gap_reward(position: tuple[float, float], category: str) -> float:
    """Longitudinal x lateral clearance product, zero exactly at contact.

    When the footprints overlap on one axis only, the remaining gap alone
    decides (a lead car 20 m ahead is not a collision).
    """
    size = VEHICLE_SIZE if category == "vehicle" else PEDESTRIAN_SIZE
    gap_long = max(0.0, abs(position[0]) - (EGO_SIZE[0] + size[0]) / 2.0)
    gap_lat = max(0.0, abs(position[1]) - (EGO_SIZE[1] + size[1]) / 2.0)
    if gap_long == 0.0 and gap_lat == 0.0:
        return 0.0
    if gap_lat == 0.0:
        return _clamp01(gap_long / D_LONG)
    if gap_long == 0.0:
        return _clamp01(gap_lat / D_LAT)
    return _clamp01(gap_long / D_LONG) * _clamp01(gap_lat / D_LAT)


def object_reward(perceived_frames: list[PerceivedLayout]) -> float:
    """Min over frames and agents of the longitudinal x lateral clearance."""
    worst = 1.0
    for perceived in perceived_frames:
        for agent in perceived.agents:
            worst = min(worst, _agent_gap_reward(agent.position, agent.category))
    return worst


def combined_reward(perceived_frames: list[PerceivedLayout]) -> RewardBreakdown:
    r_curb, r_center, low_conf = map_reward(perceived_frames)
    r_obj = object_reward(perceived_frames)
    return RewardBreakdown(r_curb=r_curb, r_center=r_center, r_object=r_obj,
                           low_confidence=low_conf)
