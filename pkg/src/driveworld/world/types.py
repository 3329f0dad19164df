"""Core world-state types: agents, road map, camera rig, scene meta."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np
from shapely.geometry import Point, Polygon


class InputError(ValueError):
    """Bad caller-supplied value (non-finite action, out-of-range code...)."""


class Weather(enum.IntEnum):
    SUNNY = 0
    RAINY = 1


class Lighting(enum.IntEnum):
    DAY = 0
    NIGHT = 1


#: Camera labels in rig order (consecutive = adjacent in yaw).
VIEW_NAMES = ("F", "FL", "BL", "B", "BR", "FR")


@dataclass(frozen=True)
class SceneMeta:
    """Weather/lighting tags plus, where relevant, the view label."""

    weather: Weather = Weather.SUNNY
    lighting: Lighting = Lighting.DAY

    def codes(self, view: int) -> tuple[int, int, int]:
        return int(self.weather), int(self.lighting), int(view)


@dataclass(frozen=True)
class AgentBox:
    id: int
    category: str                     # "vehicle" | "pedestrian"
    center: tuple[float, float]       # m, world frame
    size: tuple[float, float, float]  # length, width, height (m)
    heading: float                    # rad
    velocity: tuple[float, float]     # m/s, world frame

    def __post_init__(self):
        if self.category not in ("vehicle", "pedestrian"):
            raise InputError(f"unknown agent category {self.category!r}")
        if any(s <= 0 for s in self.size):
            raise InputError(f"agent size components must be > 0, got {self.size}")
        if not all(math.isfinite(v) for v in (*self.center, self.heading, *self.velocity)):
            raise InputError("agent state must be finite")

    def footprint(self) -> np.ndarray:
        """Ground-plane corner points, [4, 2], CCW."""
        length, width, _ = self.size
        c, s = math.cos(self.heading), math.sin(self.heading)
        rot = np.array([[c, -s], [s, c]])
        half = np.array(
            [[length / 2, width / 2], [-length / 2, width / 2],
             [-length / 2, -width / 2], [length / 2, -width / 2]]
        )
        return half @ rot.T + np.asarray(self.center)


@dataclass(frozen=True)
class RoadMap:
    """Lane centerlines, curbs, and the drivable corridor polygon."""

    centerlines: tuple[np.ndarray, ...]   # each [N, 2] m
    curbs: tuple[np.ndarray, ...]         # each [N, 2] m
    drivable: Polygon
    lane_width: float
    # road studs / verge markers: [N, 3] = (x, y, brightness); dense, isotropic
    # texture that keypoint matching can latch onto in the view overlaps
    studs: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))

    def contains(self, x: float, y: float) -> bool:
        return self.drivable.contains(Point(x, y))

    def check_invariants(self) -> None:
        hull = self.drivable.buffer(1e-6)
        for line in self.centerlines:
            for p in line[:: max(1, len(line) // 16)]:
                if not hull.contains(Point(*p)):
                    raise AssertionError(f"centerline point {p} outside drivable polygon")


@dataclass(frozen=True)
class CameraRig:
    """K pinhole cameras on a ring, flat ground, zero pitch/roll."""

    k: int = 6
    fov: float = math.radians(70.0)
    image_hw: tuple[int, int] = (48, 96)
    mount_height: float = 1.6
    yaw_offsets: tuple[float, ...] = ()

    def __post_init__(self):
        if not self.yaw_offsets:
            object.__setattr__(
                self, "yaw_offsets",
                tuple(i * 2.0 * math.pi / self.k for i in range(self.k)),
            )
        if len(self.yaw_offsets) != self.k:
            raise InputError("yaw_offsets length must equal k")

    @property
    def focal(self) -> float:
        h, w = self.image_hw
        return (w / 2.0) / math.tan(self.fov / 2.0)

    def adjacent_overlap(self) -> float:
        """Shared angular sector between neighbouring views (rad)."""
        if self.k < 2:
            return 0.0
        spacing = 2.0 * math.pi / self.k
        return self.fov - spacing

    def view_names(self) -> tuple[str, ...]:
        if self.k == 6:
            return VIEW_NAMES
        return tuple(f"V{i}" for i in range(self.k))


@dataclass(frozen=True)
class WorldState:
    time: float
    ego_pose: tuple[float, float, float]   # x, y, heading
    agents: tuple[AgentBox, ...]
    road: RoadMap
    meta: SceneMeta
    # Scripted agent bookkeeping: lane index + arc position for lane followers.
    agent_tracks: tuple[tuple[int, float], ...] = field(default=(), repr=False)
    ego_track: tuple[int, float] = (0, 0.0)

    def __post_init__(self):
        x, y, h = self.ego_pose
        if not (math.isfinite(x) and math.isfinite(y) and math.isfinite(h)):
            raise InputError("ego pose must be finite")
        if not -math.pi <= h < math.pi:
            object.__setattr__(self, "ego_pose", (x, y, wrap_angle(h)))

    def with_ego(self, pose: tuple[float, float, float]) -> "WorldState":
        return replace(self, ego_pose=(pose[0], pose[1], wrap_angle(pose[2])))


def wrap_angle(a: float) -> float:
    """Wrap to [-pi, pi)."""
    return (a + math.pi) % (2.0 * math.pi) - math.pi
