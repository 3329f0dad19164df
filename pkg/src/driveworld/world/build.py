"""Procedural world construction, scripted stepping, and the expert oracle."""

from __future__ import annotations

import math

import numpy as np
from shapely.geometry import LineString, Polygon
from shapely.ops import unary_union

from ..config import Config, ConfigError
from .geometry import Polyline, arc_points, straight_points
from .types import AgentBox, InputError, Lighting, RoadMap, SceneMeta, Weather, WorldState, wrap_angle

HEADING_EPS = 1e-6  # below this action norm the heading is left unchanged

VEHICLE_SIZE = (4.6, 1.9, 1.5)
PEDESTRIAN_SIZE = (0.5, 0.5, 1.7)


def _build_path(rng: np.random.Generator, include_turns: bool) -> np.ndarray:
    """Main corridor spine: a straight lead-in followed by mixed segments."""
    pts = [straight_points(np.zeros(2), 0.0, 70.0)]
    heading = 0.0
    end = pts[-1][-1]
    n_segments = int(rng.integers(3, 6))
    for _ in range(n_segments):
        if include_turns and rng.random() < 0.55:
            radius = float(rng.uniform(25.0, 60.0))
            angle = float(rng.uniform(math.radians(20), math.radians(60)))
            if rng.random() < 0.5:
                angle = -angle
            seg = arc_points(end, heading, radius, angle)
            heading = wrap_angle(heading + angle)
        else:
            seg = straight_points(end, heading, float(rng.uniform(25.0, 45.0)))
        pts.append(seg[1:])
        end = seg[-1]
    return np.concatenate(pts, axis=0)


def _make_studs(rng: np.random.Generator, spine: Polyline, half: float) -> np.ndarray:
    """Verge markers flanking the road plus a scatter further out."""
    rows = []
    for side in (-1.0, 1.0):
        s = 1.0
        while s < spine.length:
            p = spine.point_at(s)
            h = spine.heading_at(s)
            off = side * (half + rng.uniform(0.4, 1.6))
            rows.append([p[0] - off * math.sin(h), p[1] + off * math.cos(h),
                         rng.uniform(0.78, 1.0)])
            s += rng.uniform(0.9, 1.7)
    # sparse far scatter so side views are never featureless
    for _ in range(int(spine.length * 4.0)):
        s = rng.uniform(0.0, spine.length)
        p = spine.point_at(s)
        h = spine.heading_at(s)
        off = rng.uniform(half + 2.5, half + 14.0) * (1 if rng.random() < 0.5 else -1)
        rows.append([p[0] - off * math.sin(h), p[1] + off * math.cos(h),
                     rng.uniform(0.55, 0.95)])
    return np.asarray(rows, dtype=np.float64)


def _road_from_path(path: np.ndarray, n_lanes: int, lane_width: float,
                    cross_station: float | None,
                    rng: np.random.Generator | None = None) -> RoadMap:
    spine = Polyline(path)
    half = n_lanes * lane_width / 2.0
    centerlines = []
    for lane in range(n_lanes):
        off = (lane - (n_lanes - 1) / 2.0) * lane_width
        centerlines.append(spine.offset(off).points)
    curbs = [spine.offset(-half).points, spine.offset(half).points]
    drivable = LineString(path).buffer(half, cap_style="flat", join_style="round")

    if cross_station is not None:
        p = spine.point_at(cross_station)
        h = spine.heading_at(cross_station) + math.pi / 2.0
        cross = straight_points(p - 30.0 * np.array([math.cos(h), math.sin(h)]), h, 60.0)
        centerlines.append(cross)
        cross_half = lane_width  # two-lane crossing road
        cross_poly = LineString(cross).buffer(cross_half, cap_style="flat")
        curbs.append(Polyline(cross).offset(-cross_half).points)
        curbs.append(Polyline(cross).offset(cross_half).points)
        drivable = unary_union([drivable, cross_poly])

    if isinstance(drivable, Polygon):
        poly = drivable
    else:  # MultiPolygon from numeric slivers: keep the largest piece
        poly = max(drivable.geoms, key=lambda g: g.area)
    studs = _make_studs(rng, spine, half) if rng is not None else np.zeros((0, 3))
    return RoadMap(
        centerlines=tuple(np.asarray(c) for c in centerlines),
        curbs=tuple(np.asarray(c) for c in curbs),
        drivable=poly,
        lane_width=lane_width,
        studs=studs,
    )


def lane_polyline(road: RoadMap, lane: int) -> Polyline:
    return Polyline(road.centerlines[lane])


def _spawn_agents(rng: np.random.Generator, road: RoadMap, n_lanes: int,
                  ego_station: float, min_gap: float,
                  n_agents: int) -> tuple[tuple[AgentBox, ...], tuple[tuple[int, float], ...]]:
    agents: list[AgentBox] = []
    tracks: list[tuple[int, float]] = []
    taken: dict[int, list[float]] = {lane: [] for lane in range(n_lanes)}
    taken[0] = [ego_station]
    spine_len = Polyline(road.centerlines[0]).length
    attempts = 0
    while len(agents) < n_agents and attempts < n_agents * 40:
        attempts += 1
        if rng.random() < 0.8:  # vehicle on a lane
            lane = int(rng.integers(0, n_lanes))
            s = float(rng.uniform(5.0, spine_len - 5.0))
            if any(abs(s - o) < min_gap for o in taken[lane]):
                continue
            line = lane_polyline(road, lane)
            direction = -1.0 if (n_lanes >= 2 and lane == n_lanes - 1) else 1.0
            heading = wrap_angle(line.heading_at(s) + (0.0 if direction > 0 else math.pi))
            speed = float(rng.uniform(2.0, 8.0))
            pos = line.point_at(s)
            agents.append(AgentBox(
                id=len(agents), category="vehicle", center=(float(pos[0]), float(pos[1])),
                size=VEHICLE_SIZE, heading=heading,
                velocity=(speed * math.cos(heading), speed * math.sin(heading)),
            ))
            tracks.append((lane, s if direction > 0 else -s))
            taken[lane].append(s)
        else:  # pedestrian on the verge, constant-velocity walk
            s = float(rng.uniform(5.0, spine_len - 5.0))
            side = 1.0 if rng.random() < 0.5 else -1.0
            spine = Polyline(road.centerlines[0])
            h = spine.heading_at(s)
            half = road.lane_width * 1.6
            pos = spine.point_at(s) + side * half * np.array([-math.sin(h), math.cos(h)])
            heading = wrap_angle(h + (0.0 if rng.random() < 0.7 else math.pi))
            speed = float(rng.uniform(0.5, 1.5))
            agents.append(AgentBox(
                id=len(agents), category="pedestrian", center=(float(pos[0]), float(pos[1])),
                size=PEDESTRIAN_SIZE, heading=heading,
                velocity=(speed * math.cos(heading), speed * math.sin(heading)),
            ))
            tracks.append((-1, 0.0))
    return tuple(agents), tuple(tracks)


def build_world(seed: int, config: Config) -> WorldState:
    """Deterministic world from (seed, config)."""
    if seed < 0:
        raise ConfigError("seed must be >= 0")
    w = config.world
    if w.n_lanes < 1:
        raise ConfigError("world.n_lanes must be >= 1")
    if w.n_agents_min < 0 or w.n_agents_max < w.n_agents_min:
        raise ConfigError("world.n_agents_min/max must satisfy 0 <= min <= max")
    rng = np.random.default_rng(seed)
    path = _build_path(rng, w.include_turns)
    cross_station = float(rng.uniform(55.0, 90.0)) if w.include_turns else None
    road = _road_from_path(path, w.n_lanes, w.lane_width, cross_station, rng)

    ego_station = 30.0
    ego_lane = 0
    line = lane_polyline(road, ego_lane)
    pos = line.point_at(ego_station)
    heading = line.heading_at(ego_station)

    n_agents = int(rng.integers(w.n_agents_min, w.n_agents_max + 1))
    agents, tracks = _spawn_agents(rng, road, w.n_lanes, ego_station, w.agent_min_gap, n_agents)

    meta = SceneMeta(
        weather=Weather.RAINY if rng.random() < 0.3 else Weather.SUNNY,
        lighting=Lighting.NIGHT if rng.random() < 0.2 else Lighting.DAY,
    )
    return WorldState(
        time=0.0,
        ego_pose=(float(pos[0]), float(pos[1]), float(heading)),
        agents=agents,
        road=road,
        meta=meta,
        agent_tracks=tracks,
        ego_track=(ego_lane, ego_station),
    )


def _advance_agent(agent: AgentBox, track: tuple[int, float], road: RoadMap,
                   dt: float) -> tuple[AgentBox, tuple[int, float]]:
    lane, s = track
    if lane < 0:  # free-walking pedestrian: straight constant velocity
        cx, cy = agent.center
        vx, vy = agent.velocity
        return (
            AgentBox(agent.id, agent.category, (cx + vx * dt, cy + vy * dt),
                     agent.size, agent.heading, agent.velocity),
            track,
        )
    line = lane_polyline(road, lane)
    speed = math.hypot(*agent.velocity)
    direction = 1.0 if s >= 0 else -1.0
    new_s = abs(s) + direction * speed * dt
    new_s = float(np.clip(new_s, 0.0, line.length))
    pos = line.point_at(new_s)
    heading = wrap_angle(line.heading_at(new_s) + (0.0 if direction > 0 else math.pi))
    return (
        AgentBox(agent.id, agent.category, (float(pos[0]), float(pos[1])),
                 agent.size, heading,
                 (speed * math.cos(heading), speed * math.sin(heading))),
        (lane, new_s * direction),
    )


def step_world(state: WorldState, ego_action: tuple[float, float], dt: float) -> WorldState:
    """Advance the world one step: ego teleports by the action, agents follow scripts."""
    dx, dy = ego_action
    if not (math.isfinite(dx) and math.isfinite(dy)):
        raise InputError(f"ego action must be finite, got {ego_action}")
    if dt <= 0:
        raise InputError("dt must be > 0")
    x, y, heading = state.ego_pose
    if math.hypot(dx, dy) > HEADING_EPS:
        heading = math.atan2(dy, dx)
    new_agents = []
    new_tracks = []
    for agent, track in zip(state.agents, state.agent_tracks):
        a, t = _advance_agent(agent, track, state.road, dt)
        new_agents.append(a)
        new_tracks.append(t)
    return WorldState(
        time=state.time + dt,
        ego_pose=(x + dx, y + dy, heading),
        agents=tuple(new_agents),
        road=state.road,
        meta=state.meta,
        agent_tracks=tuple(new_tracks),
        ego_track=state.ego_track,
    )


def expert_trajectory(state: WorldState, n_steps: int, speed: float, dt: float) -> np.ndarray:
    """Lane-following ground-truth trajectory, [n_steps + 1, 2] starting at ego."""
    lane, s0 = state.ego_track
    line = lane_polyline(state.road, lane)
    pts = [np.asarray(state.ego_pose[:2], dtype=np.float64)]
    # project the true ego position in case it was shifted off the track
    s, _ = line.project(pts[0])
    for i in range(1, n_steps + 1):
        pts.append(line.point_at(s + i * speed * dt))
    return np.stack(pts, axis=0)


def shift_ego_lateral(state: WorldState, shift: float) -> WorldState:
    """Move the ego sideways (positive = left of its heading); used for OOD runs."""
    x, y, h = state.ego_pose
    return state.with_ego((x - shift * math.sin(h), y + shift * math.cos(h), h))
