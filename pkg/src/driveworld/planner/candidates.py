"""Analytic trajectory candidates: one arc per driving command."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..world.perceive import PerceivedLayout

COMMANDS = ("left", "straight", "right")


@dataclass
class TrajectoryCandidate:
    """Ego-frame candidate: ego starts at the origin facing +x."""

    command: str
    waypoints: np.ndarray          # [horizon + 1, 2], waypoints[0] = origin
    flagged: bool = False          # True when no centerline was perceived

    def __post_init__(self):
        if len(self.waypoints) < 3:
            raise ValueError("candidates need horizon >= 2")

    @property
    def actions(self) -> np.ndarray:
        return np.diff(self.waypoints, axis=0)

    @property
    def curvature(self) -> float:
        d = self.actions
        headings = np.arctan2(d[:, 1], d[:, 0])
        if len(headings) < 2:
            return 0.0
        delta = np.diff(headings)
        return float(np.mean((delta + np.pi) % (2 * np.pi) - np.pi))


def fit_centerline(perceived: PerceivedLayout, lane_width: float = 3.5,
                   x_range: tuple[float, float] = (2.0, 16.0)
                   ) -> tuple[float, float] | None:
    """Fit y = a + b x to the ego lane's centerline points.

    Points are clustered by lateral offset so adjacent lanes do not drag the
    fit; returns None when too few points are visible.
    """
    pts = perceived.centerline_points
    if len(pts) < 4:
        return None
    m = (pts[:, 0] >= x_range[0]) & (pts[:, 0] <= x_range[1]) \
        & (np.abs(pts[:, 1]) < lane_width * 1.2)
    pts = pts[m]
    if len(pts) < 4:
        return None
    # keep the lateral cluster nearest the ego
    ys = pts[:, 1]
    order = np.argsort(np.abs(ys))
    seed_y = ys[order[0]]
    cluster = pts[np.abs(ys - seed_y) < lane_width / 2.5]
    if len(cluster) < 4:
        return None
    b, a = np.polyfit(cluster[:, 0], cluster[:, 1], 1)
    return float(a), float(b)


def _arc(horizon: int, step: float, turn_per_step: float) -> np.ndarray:
    pts = [np.zeros(2)]
    heading = 0.0
    for _ in range(horizon):
        heading += turn_per_step
        pts.append(pts[-1] + step * np.array([math.cos(heading), math.sin(heading)]))
    return np.stack(pts)


def sample_candidates(perceived: PerceivedLayout, commands=COMMANDS, *,
                      speed: float = 5.0, horizon: int = 6, dt: float = 0.5,
                      turn_rate_deg: float = 6.0) -> list[TrajectoryCandidate]:
    """One constant-curvature arc per command at the current speed; the
    straight command follows the perceived lane centerline when visible."""
    step = max(speed, 0.1) * dt
    line = fit_centerline(perceived)
    out = []
    for command in commands:
        if command == "straight":
            if line is None:
                out.append(TrajectoryCandidate(
                    "straight", _arc(horizon, step, 0.0), flagged=True))
                continue
            a, b = line
            direction = np.array([1.0, b]) / math.hypot(1.0, b)
            # start from the ego's foot point on the lane line, then advance
            foot = np.array([0.0, a])
            pts = [np.zeros(2)]
            for i in range(1, horizon + 1):
                pts.append(foot + direction * step * i)
            out.append(TrajectoryCandidate("straight", np.stack(pts)))
        else:
            sign = 1.0 if command == "left" else -1.0
            out.append(TrajectoryCandidate(
                command, _arc(horizon, step, sign * math.radians(turn_rate_deg))))
    return out
