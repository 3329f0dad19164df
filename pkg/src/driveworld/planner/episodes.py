"""Planning episodes: synthetic scenarios with hazards and an expert oracle.

Each episode pins a world whose agents are placed so that wrong commands
collide (oncoming traffic in the left lane, a parked obstacle off the right
verge, sometimes a slow lead), plus a lane-following expert trajectory whose
speed is chosen collision-free over the horizon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from shapely.geometry import Polygon

from ..config import Config
from ..world import (AgentBox, WorldState, build_world, expert_trajectory,
                     lane_polyline, shift_ego_lateral, step_world)
from ..world.build import VEHICLE_SIZE
from .rewards import EGO_SIZE


@dataclass
class PlanningEpisode:
    seed: int
    world: WorldState                       # state at t = 0 (possibly shifted)
    expert: np.ndarray                      # [horizon + 1, 2] world frame
    expert_speed: float
    states: list[WorldState] = field(default_factory=list)  # t = 0..horizon
    ood_shift: float = 0.0

    @property
    def horizon(self) -> int:
        return len(self.expert) - 1


def ego_polygon(center: np.ndarray, heading: float) -> Polygon:
    box = AgentBox(id=-1, category="vehicle",
                   center=(float(center[0]), float(center[1])),
                   size=EGO_SIZE, heading=float(heading), velocity=(0.0, 0.0))
    return Polygon(box.footprint())


def _heading_along(waypoints: np.ndarray, i: int, fallback: float) -> float:
    if i + 1 < len(waypoints):
        d = waypoints[i + 1] - waypoints[i]
    else:
        d = waypoints[i] - waypoints[i - 1]
    n = math.hypot(d[0], d[1])
    return fallback if n < 1e-6 else math.atan2(d[1], d[0])


def trajectory_collides(waypoints: np.ndarray, states: list[WorldState],
                        heading0: float, up_to: int | None = None) -> bool:
    """True when the ego footprint intersects any agent footprint by the mark."""
    stop = len(waypoints) - 1 if up_to is None else up_to
    for i in range(1, stop + 1):
        state = states[min(i, len(states) - 1)]
        ego = ego_polygon(waypoints[i], _heading_along(waypoints, i, heading0))
        for agent in state.agents:
            if ego.intersects(Polygon(agent.footprint())):
                return True
    return False


def _spawn_hazards(rng: np.random.Generator, world: WorldState,
                   cfg: Config) -> list[AgentBox]:
    lane0 = lane_polyline(world.road, 0)
    _, s_ego = world.ego_track
    agents: list[AgentBox] = []
    next_id = 0

    def lane_agent(lane: int, s: float, speed: float, reverse: bool) -> AgentBox:
        nonlocal next_id
        line = lane_polyline(world.road, lane)
        p = line.point_at(s)
        h = line.heading_at(s) + (math.pi if reverse else 0.0)
        next_id += 1
        return AgentBox(id=next_id, category="vehicle",
                        center=(float(p[0]), float(p[1])), size=VEHICLE_SIZE,
                        heading=h,
                        velocity=(speed * math.cos(h), speed * math.sin(h)))

    n_lanes = len(world.road.centerlines) - (1 if cfg.world.include_turns else 0)
    n_lanes = max(1, min(cfg.world.n_lanes, n_lanes))
    if n_lanes >= 2 and rng.random() < 0.9:   # oncoming traffic in the left lane
        agents.append(lane_agent(n_lanes - 1, s_ego + rng.uniform(8.0, 16.0),
                                 rng.uniform(2.0, 5.0), reverse=True))
    def parked(s: float, extra_off: float) -> AgentBox:
        nonlocal next_id
        p = lane0.point_at(s)
        h = lane0.heading_at(s)
        off = world.road.lane_width * cfg.world.n_lanes / 2.0 + extra_off
        center = (p[0] + off * math.sin(h), p[1] - off * math.cos(h))
        next_id += 1
        return AgentBox(id=next_id + 100, category="vehicle", center=center,
                        size=VEHICLE_SIZE, heading=h, velocity=(0.0, 0.0))

    if rng.random() < 0.8:                     # near parked car on the right verge
        agents.append(parked(s_ego + rng.uniform(5.0, 9.0), rng.uniform(0.3, 0.8)))
    if rng.random() < 0.6:                     # second parked car further out
        agents.append(parked(s_ego + rng.uniform(10.0, 16.0), rng.uniform(0.2, 0.8)))
    if rng.random() < 0.35:                    # slow lead in the ego lane
        agents.append(lane_agent(0, s_ego + rng.uniform(12.0, 22.0),
                                 rng.uniform(0.8, 2.0), reverse=False))
    if rng.random() < 0.85:                    # following traffic: stalling is unsafe
        gap = rng.uniform(11.0, 16.0)
        speed = cfg.world.cruise_speed * rng.uniform(0.9, 1.05)
        agents.append(lane_agent(0, max(s_ego - gap, 2.0), speed, reverse=False))
    return agents


def _agent_tracks(agents: list[AgentBox], world: WorldState) -> tuple:
    tracks = []
    for agent in agents:
        if math.hypot(*agent.velocity) < 1e-6:
            tracks.append((-1, 0.0))           # parked: free agent, zero velocity
            continue
        best = (-1, 0.0)
        for lane in range(len(world.road.centerlines)):
            line = lane_polyline(world.road, lane)
            s, off = line.project(np.asarray(agent.center))
            if abs(off) < 0.5:
                fwd = abs(
                    (line.heading_at(s) - agent.heading + math.pi) % (2 * math.pi)
                    - math.pi) < math.pi / 2
                best = (lane, s if fwd else -s)
                break
        tracks.append(best)
    return tuple(tracks)


def build_episode(seed: int, cfg: Config, ood_shift: float = 0.0,
                  station_range: tuple[float, float] = (28.0, 73.0)) -> PlanningEpisode:
    """Deterministic scenario: hazards + collision-free expert."""
    base_cfg = cfg
    world = build_world(seed, base_cfg)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x9E1]))
    # restation the ego so some episodes start at curve onsets
    lane0 = lane_polyline(world.road, 0)
    lo, hi = station_range
    s_ego = min(lo + float(rng.uniform(0.0, hi - lo)), lane0.length - 25.0)
    pos = lane0.point_at(s_ego)
    world = replace(world.with_ego((float(pos[0]), float(pos[1]),
                                    lane0.heading_at(s_ego))),
                    ego_track=(0, s_ego))
    hazards = _spawn_hazards(rng, world, cfg)
    world = replace(world, agents=tuple(hazards),
                    agent_tracks=_agent_tracks(hazards, world))

    horizon = cfg.planner.horizon
    extended = horizon * 2        # extra steps so training targets never clamp
    dt = cfg.clip.dt_s
    x, y, h = world.ego_pose

    # expert: lane-following at the fastest collision-free speed; if no speed
    # works (boxed in between a slow lead and following traffic) drop hazards
    # until the episode is feasible
    def search_expert(w: WorldState):
        for speed in [cfg.world.cruise_speed - 0.5 * k for k in range(11)]:
            speed = max(speed, 0.0)
            expert = expert_trajectory(w, extended, speed, dt)
            states = [w]
            for i in range(extended):
                action = expert[i + 1] - expert[i]
                states.append(step_world(states[-1],
                                         (float(action[0]), float(action[1])), dt))
            if not trajectory_collides(expert, states, h):
                return speed, expert, states
        return None

    chosen = search_expert(world)
    while chosen is None and world.agents:
        world = replace(world, agents=world.agents[:-1],
                        agent_tracks=world.agent_tracks[:-1])
        chosen = search_expert(world)
    if chosen is None:
        speed, expert = 0.0, np.repeat([[x, y]], extended + 1, axis=0)
        states = [world]
        for i in range(extended):
            states.append(step_world(states[-1], (0.0, 0.0), dt))
        chosen = (speed, expert, states)
    speed, expert, states = chosen

    if ood_shift != 0.0:
        world = shift_ego_lateral(world, ood_shift)
        states = [shift_ego_lateral(s, ood_shift) for s in states]
    return PlanningEpisode(seed=seed, world=world, expert=expert,
                           expert_speed=speed, states=states, ood_shift=ood_shift)
