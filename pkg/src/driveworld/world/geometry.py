"""Polyline and arc helpers shared by the world builder and the planner."""

from __future__ import annotations

import math

import numpy as np


class Polyline:
    """Arc-length parameterized 2D polyline."""

    def __init__(self, points: np.ndarray):
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise ValueError("polyline needs [N>=2, 2] points")
        self.points = pts
        seg = np.diff(pts, axis=0)
        self._seg_len = np.hypot(seg[:, 0], seg[:, 1])
        self.cum = np.concatenate([[0.0], np.cumsum(self._seg_len)])
        self.length = float(self.cum[-1])

    def point_at(self, s: float) -> np.ndarray:
        s = float(np.clip(s, 0.0, self.length))
        i = int(np.searchsorted(self.cum, s, side="right") - 1)
        i = min(i, len(self._seg_len) - 1)
        t = (s - self.cum[i]) / max(self._seg_len[i], 1e-12)
        return self.points[i] * (1.0 - t) + self.points[i + 1] * t

    def heading_at(self, s: float) -> float:
        s = float(np.clip(s, 0.0, self.length))
        i = int(np.searchsorted(self.cum, s, side="right") - 1)
        i = min(max(i, 0), len(self._seg_len) - 1)
        d = self.points[i + 1] - self.points[i]
        return math.atan2(d[1], d[0])

    def offset(self, dist: float) -> "Polyline":
        """Parallel polyline offset ``dist`` to the left of travel direction."""
        pts = self.points
        d = np.gradient(pts, axis=0)
        norm = np.hypot(d[:, 0], d[:, 1])
        norm[norm < 1e-12] = 1.0
        normal = np.stack([-d[:, 1] / norm, d[:, 0] / norm], axis=1)
        return Polyline(pts + dist * normal)

    def project(self, p: np.ndarray) -> tuple[float, float]:
        """Return (arc position, signed lateral offset) of point ``p``.

        Positive offset = left of travel direction.
        """
        p = np.asarray(p, dtype=np.float64)
        best = (0.0, float("inf"))
        for i in range(len(self._seg_len)):
            a, b = self.points[i], self.points[i + 1]
            ab = b - a
            denom = float(ab @ ab)
            t = 0.0 if denom < 1e-12 else float(np.clip((p - a) @ ab / denom, 0.0, 1.0))
            q = a + t * ab
            dist = float(np.hypot(*(p - q)))
            if dist < abs(best[1]):
                tang = ab / max(math.sqrt(denom), 1e-12)
                side = float(np.sign(tang[0] * (p - q)[1] - tang[1] * (p - q)[0]))
                s = self.cum[i] + t * self._seg_len[i]
                best = (float(s), dist * (side if side != 0 else 1.0))
        return best


def arc_points(start: np.ndarray, heading: float, radius: float,
               angle: float, step: float = 1.0) -> np.ndarray:
    """Points along a circular arc; ``angle`` > 0 turns left."""
    n = max(2, int(abs(radius * angle) / step) + 1)
    ts = np.linspace(0.0, abs(angle), n)
    side = 1.0 if angle >= 0 else -1.0
    # arc centre sits at 90 degrees to the left (right) of the heading
    cx = start[0] - side * radius * math.sin(heading)
    cy = start[1] + side * radius * math.cos(heading)
    a0 = heading - side * math.pi / 2.0
    pts = np.stack(
        [cx + radius * np.cos(a0 + side * ts), cy + radius * np.sin(a0 + side * ts)], axis=1
    )
    return pts


def straight_points(start: np.ndarray, heading: float, length: float,
                    step: float = 1.0) -> np.ndarray:
    n = max(2, int(length / step) + 1)
    ts = np.linspace(0.0, length, n)
    return np.stack(
        [start[0] + ts * math.cos(heading), start[1] + ts * math.sin(heading)], axis=1
    )
