"""Open-loop planning evaluation: L2 to the expert and collision rates."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..config import Config
from ..data import rig_from_config
from ..factorized import FactorizedGenerator
from ..world import MultiviewFrame, oracle_perceive, render_views
from .candidates import TrajectoryCandidate, sample_candidates
from .episodes import PlanningEpisode, trajectory_collides
from .rewards import RewardBreakdown
from .tree import ego_to_world, gt_reward, imagine, score_imagined, select_index

MARKS = (2, 4, 6)     # steps at dt = 0.5 s -> 1 s, 2 s, 3 s
STRATEGIES = ("tree", "random", "map_only", "object_only", "expert")


@dataclass
class OpenLoopMetrics:
    l2: dict[str, float]
    collision: dict[str, float]
    selections: list[str]

    def as_dict(self) -> dict:
        return {"l2": self.l2, "collision": self.collision,
                "selections": self.selections}

    @property
    def l2_avg(self) -> float:
        return self.l2["avg"]

    @property
    def collision_avg(self) -> float:
        return self.collision["avg"]


def _strategy_total(reward: RewardBreakdown, strategy: str) -> float:
    if strategy == "map_only":
        return reward.r_map
    if strategy == "object_only":
        return reward.r_object
    return reward.r_total


def _select(strategy: str, candidates: list[TrajectoryCandidate],
            rewards: list[RewardBreakdown] | None,
            rng: np.random.Generator) -> int:
    if strategy == "random":
        return int(rng.integers(len(candidates)))
    scaled = [RewardBreakdown(r_curb=1.0, r_center=1.0,
                              r_object=_strategy_total(r, strategy))
              for r in rewards]
    idx, _ = select_index(scaled, candidates)
    return idx


def episode_rewards(episode: PlanningEpisode, candidates: list[TrajectoryCandidate],
                    cfg: Config, generator: FactorizedGenerator | None,
                    use_bypass: bool) -> list[RewardBreakdown]:
    """Score all candidates once; strategies reuse these scores."""
    if use_bypass or generator is None:
        return [gt_reward(c, episode.states, episode.world.ego_pose)
                for c in candidates]
    rig = generator.rig
    frame0 = render_views(episode.world, rig)
    clips = imagine(candidates, episode.world, frame0, generator, cfg,
                    node_id=episode.seed)
    return [score_imagined(clip, episode.world, cfg.planner.horizon, rig)
            for clip in clips]


def evaluate_open_loop(cfg: Config, episodes: list[PlanningEpisode],
                       strategies: tuple[str, ...] = ("tree", "random"),
                       generator: FactorizedGenerator | None = None,
                       use_bypass: bool = False,
                       seed: int = 0) -> dict[str, OpenLoopMetrics]:
    """Evaluate selection strategies over shared per-episode candidate scores."""
    rig = rig_from_config(cfg)
    per_strategy: dict[str, dict] = {
        s: {"l2": {m: [] for m in MARKS}, "coll": {m: [] for m in MARKS},
            "sel": []} for s in strategies}
    for ep_idx, episode in enumerate(episodes):
        perceived = oracle_perceive(render_views(episode.world, rig), rig)
        candidates = sample_candidates(
            perceived, speed=max(episode.expert_speed, 0.5),
            horizon=cfg.planner.horizon, dt=cfg.clip.dt_s,
            turn_rate_deg=cfg.planner.turn_rate_deg)
        needs_rewards = any(s not in ("random", "expert") for s in strategies)
        rewards = episode_rewards(episode, candidates, cfg, generator,
                                  use_bypass) if needs_rewards else None
        for strategy in strategies:
            strategy_tag = sum(strategy.encode())   # stable across processes
            rng = np.random.default_rng(
                np.random.SeedSequence([seed, episode.seed, strategy_tag]))
            if strategy == "expert":
                waypoints = episode.expert
                command = "expert"
            else:
                idx = _select(strategy, candidates, rewards, rng)
                waypoints = ego_to_world(candidates[idx].waypoints,
                                         episode.world.ego_pose)
                command = candidates[idx].command
            rec = per_strategy[strategy]
            rec["sel"].append(command)
            for mark in MARKS:
                i = min(mark, len(waypoints) - 1)
                rec["l2"][mark].append(float(np.hypot(
                    *(waypoints[i] - episode.expert[min(mark, len(episode.expert) - 1)]))))
                rec["coll"][mark].append(float(trajectory_collides(
                    waypoints, episode.states, episode.world.ego_pose[2], up_to=mark)))
    out = {}
    for strategy, rec in per_strategy.items():
        l2 = {f"{m // 2}s": float(np.mean(rec["l2"][m])) for m in MARKS}
        l2["avg"] = float(np.mean(list(l2.values())))
        coll = {f"{m // 2}s": float(np.mean(rec["coll"][m])) for m in MARKS}
        coll["avg"] = float(np.mean(list(coll.values())))
        out[strategy] = OpenLoopMetrics(l2=l2, collision=coll, selections=rec["sel"])
    return out


def evaluate_planner_fn(cfg: Config, episodes: list[PlanningEpisode],
                        plan_fn) -> OpenLoopMetrics:
    """Evaluate an arbitrary planner: plan_fn(episode) -> ego-frame waypoints."""
    l2 = {m: [] for m in MARKS}
    coll = {m: [] for m in MARKS}
    for episode in episodes:
        waypoints = ego_to_world(plan_fn(episode), episode.world.ego_pose)
        for mark in MARKS:
            i = min(mark, len(waypoints) - 1)
            l2[mark].append(float(np.hypot(
                *(waypoints[i] - episode.expert[min(mark, len(episode.expert) - 1)]))))
            coll[mark].append(float(trajectory_collides(
                waypoints, episode.states, episode.world.ego_pose[2], up_to=mark)))
    l2_out = {f"{m // 2}s": float(np.mean(l2[m])) for m in MARKS}
    l2_out["avg"] = float(np.mean(list(l2_out.values())))
    coll_out = {f"{m // 2}s": float(np.mean(coll[m])) for m in MARKS}
    coll_out["avg"] = float(np.mean(list(coll_out.values())))
    return OpenLoopMetrics(l2=l2_out, collision=coll_out, selections=[])


def evaluate_bc(cfg: Config, episodes: list[PlanningEpisode], planner) -> OpenLoopMetrics:
    rig = rig_from_config(cfg)

    def plan(episode: PlanningEpisode) -> np.ndarray:
        perceived = oracle_perceive(render_views(episode.world, rig), rig)
        return planner.plan(perceived, max(episode.expert_speed, 0.5))

    return evaluate_planner_fn(cfg, episodes, plan)


def ood_shift_experiment(cfg: Config, planner, episode_seeds: list[int],
                         lateral_shift: float = 0.5) -> dict[str, OpenLoopMetrics]:
    """BC-planner metrics on centered vs laterally shifted starts.

    Positive shift moves the ego toward the roadside (rightward), the
    direction that runs out of room first.
    """
    from .bc import BC_STATION_RANGE
    from .episodes import build_episode
    centered = [build_episode(s, cfg, station_range=BC_STATION_RANGE)
                for s in episode_seeds]
    shifted = centered if lateral_shift == 0.0 else [
        build_episode(s, cfg, ood_shift=-lateral_shift,
                      station_range=BC_STATION_RANGE) for s in episode_seeds]
    return {
        "centered": evaluate_bc(cfg, centered, planner),
        "shifted": evaluate_bc(cfg, shifted, planner),
    }
