from .bc import (BC_STATION_RANGE, BCPlanner, BCStateError, bc_planner_fit,
                 bc_recovery_finetune, layout_features, recovery_trajectory)
from .candidates import COMMANDS, TrajectoryCandidate, fit_centerline, sample_candidates
from .episodes import PlanningEpisode, build_episode, ego_polygon, trajectory_collides
from .evaluate import (MARKS, OpenLoopMetrics, episode_rewards, evaluate_bc,
                       evaluate_open_loop, evaluate_planner_fn, ood_shift_experiment)
from .external import ExternalRewardClient, encode_frames_png
from .rewards import (D_LAT, D_LONG, D_SAFE, SIGMA_CENTER, RewardBreakdown,
                      combined_reward, map_reward, object_reward)
from .tree import (PlanningTreeNode, ego_to_world, gt_reward, imagine,
                   score_imagined, select_and_expand, select_index)

__all__ = [
    "BCPlanner", "BCStateError", "BC_STATION_RANGE", "COMMANDS", "D_LAT", "D_LONG", "D_SAFE",
    "ExternalRewardClient", "MARKS", "OpenLoopMetrics", "PlanningEpisode",
    "PlanningTreeNode", "RewardBreakdown", "SIGMA_CENTER",
    "TrajectoryCandidate", "bc_planner_fit", "bc_recovery_finetune",
    "build_episode", "combined_reward", "ego_polygon", "ego_to_world",
    "encode_frames_png", "episode_rewards", "evaluate_bc",
    "evaluate_open_loop", "evaluate_planner_fn", "fit_centerline", "gt_reward",
    "imagine", "layout_features", "map_reward", "object_reward",
    "ood_shift_experiment", "recovery_trajectory", "sample_candidates",
    "score_imagined", "select_and_expand", "select_index",
    "trajectory_collides",
]
