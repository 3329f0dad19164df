"""Tree-based rollout: imagine candidate futures, score, select, expand."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from shapely.geometry import LineString, Point, Polygon

from ..config import Config
from ..factorized import ClipConditions, FactorizedGenerator, derive_seed
from ..world import MultiviewFrame, WorldState, oracle_perceive, project_layout, render_views
from ..world.build import VEHICLE_SIZE
from ..world.perceive import PerceivedLayout
from .candidates import TrajectoryCandidate
from .episodes import ego_polygon, _heading_along
from .rewards import (D_LAT, D_LONG, D_SAFE, SIGMA_CENTER, RewardBreakdown,
                      _agent_gap_reward, _clamp01, combined_reward)

COMMAND_ORDER = {"left": 0, "straight": 1, "right": 2}


@dataclass
class PlanningTreeNode:
    depth: int
    trajectory_prefix: np.ndarray                 # [n, 2] world frame, committed
    candidate: TrajectoryCandidate | None = None
    imagined: np.ndarray | None = None            # [T, K, 3, H, W]
    reward: RewardBreakdown | None = None
    children: list["PlanningTreeNode"] = field(default_factory=list)
    node_id: int = 0
    warning: str = ""

    def to_dict(self, with_children: bool = True) -> dict:
        out = {
            "node_id": self.node_id,
            "depth": self.depth,
            "command": None if self.candidate is None else self.candidate.command,
            "reward": None if self.reward is None else self.reward.as_dict(),
            "warning": self.warning,
        }
        if with_children:
            out["children"] = [c.to_dict() for c in self.children]
        return out


def ego_to_world(waypoints_ego: np.ndarray, ego_pose) -> np.ndarray:
    x, y, h = ego_pose
    c, s = math.cos(h), math.sin(h)
    rot = np.array([[c, -s], [s, c]])
    return waypoints_ego @ rot.T + np.array([x, y])


def select_index(rewards: list[RewardBreakdown],
                 candidates: list[TrajectoryCandidate]) -> tuple[int, str]:
    """Argmax total reward; ties prefer the smaller curvature then the
    left < straight < right command order."""
    totals = [r.r_total for r in rewards]
    best = max(totals)
    tied = [i for i, t in enumerate(totals) if t == best]
    warning = ""
    if best == 0.0:
        warning = "all candidate rewards are zero; selecting by tie-break"
    if len(tied) > 1:
        tied.sort(key=lambda i: (abs(candidates[i].curvature),
                                 COMMAND_ORDER.get(candidates[i].command, 9)))
    return tied[0], warning


def select_and_expand(node: PlanningTreeNode) -> PlanningTreeNode:
    """Pick the best scored child; the caller then commits its first action."""
    if not node.children:
        raise ValueError("node has no scored children to select from")
    rewards = [c.reward for c in node.children]
    cands = [c.candidate for c in node.children]
    idx, warning = select_index(rewards, cands)
    chosen = node.children[idx]
    chosen.warning = warning
    return chosen


# ---------------------------------------------------------------------------
# imagination: one factorized rollout per candidate

def _pad_actions(candidate: TrajectoryCandidate, t_frames: int) -> np.ndarray:
    acts = candidate.actions
    if len(acts) >= t_frames:
        return acts[:t_frames].astype(np.float32)
    pad = np.repeat(acts[-1:], t_frames - len(acts), axis=0)
    return np.concatenate([acts, pad], axis=0).astype(np.float32)


def imagine(candidates: list[TrajectoryCandidate], state: WorldState,
            frame0: MultiviewFrame, generator: FactorizedGenerator, cfg: Config,
            node_id: int = 0) -> list[np.ndarray]:
    """One imagined clip per candidate, seeded by (node id, candidate id)."""
    rig = generator.rig
    persp = np.stack([
        project_layout(state, k, rig, cfg.render.bev_size, cfg.render.bev_scale).perspective
        for k in range(rig.k)])
    bev = project_layout(state, 0, rig, cfg.render.bev_size, cfg.render.bev_scale).bev
    clips = []
    for cand_id, cand in enumerate(candidates):
        cond = ClipConditions(
            ctx_frames=frame0.images[None],
            persp=persp, bev=bev,
            meta_codes=(int(state.meta.weather), int(state.meta.lighting)),
            actions=_pad_actions(cand, cfg.clip.frames),
            mode="action")
        clips.append(generator.generate_factorized(
            cond, derive_seed(node_id, cand_id),
            n_steps=cfg.planner.sample_steps))
    return clips


def score_imagined(clip: np.ndarray, state: WorldState, horizon: int,
                   rig) -> RewardBreakdown:
    """Oracle-perceive each imagined future frame and apply the rewards."""
    frames = []
    for t in range(1, min(horizon + 1, clip.shape[0])):
        frames.append(oracle_perceive(
            MultiviewFrame(images=clip[t], meta=state.meta), rig))
    return combined_reward(frames)


# ---------------------------------------------------------------------------
# ground-truth bypass: same reward forms on exact geometry

def gt_reward(candidate: TrajectoryCandidate, episode_states: list[WorldState],
              ego_pose) -> RewardBreakdown:
    """Rewards evaluated on the scripted world instead of imagined frames.

    The object reward is zero exactly when the swept footprints intersect, so
    a positive total certifies a collision-free, on-road candidate.
    """
    waypoints = ego_to_world(candidate.waypoints, ego_pose)
    x, y, h0 = ego_pose
    road = episode_states[0].road
    curb_lines = [LineString(c) for c in road.curbs]
    center_lines = [LineString(c) for c in road.centerlines]
    r_curb = 1.0
    offsets = []
    r_obj = 1.0
    for i in range(1, len(waypoints)):
        state = episode_states[min(i, len(episode_states) - 1)]
        heading = _heading_along(waypoints, i, h0)
        ego = ego_polygon(waypoints[i], heading)
        d_curb = min((ego.distance(cl) for cl in curb_lines), default=D_SAFE)
        if any(ego.intersects(cl) for cl in curb_lines) or \
                not road.drivable.contains(Point(*waypoints[i])):
            d_curb = 0.0
        r_curb = min(r_curb, _clamp01(d_curb / D_SAFE))
        offsets.append(min((cl.distance(Point(*waypoints[i])) for cl in center_lines),
                           default=0.0))
        c, s = math.cos(heading), math.sin(heading)
        for agent in state.agents:
            poly = Polygon(agent.footprint())
            if ego.intersects(poly):
                r_obj = 0.0
                continue
            dx = agent.center[0] - waypoints[i][0]
            dy = agent.center[1] - waypoints[i][1]
            rel = (c * dx + s * dy, -s * dx + c * dy)
            r_obj = min(r_obj, _agent_gap_reward(rel, agent.category))
    r_center = math.exp(-float(np.mean(offsets)) / SIGMA_CENTER) if offsets else 1.0
    return RewardBreakdown(r_curb=r_curb, r_center=r_center, r_object=r_obj)
