"""Behavior-cloning mini-planner and world-model recovery fine-tuning.

A small regressor maps oracle-perceived layout features to future waypoints.
Trained only on centered expert data it fails under lateral offsets (features
land far outside the standardization range); fine-tuning on world-model
generated return-to-centerline clips restores it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..config import Config
from ..data import rig_from_config
from ..factorized import ClipConditions, FactorizedGenerator, derive_seed
from ..world import MultiviewFrame, WorldState, oracle_perceive, project_layout, render_views
from ..world.perceive import PerceivedLayout
from .candidates import fit_centerline
from .episodes import PlanningEpisode
from .rewards import _curb_distance

LATERAL_BINS = 32          # quarter-metre bins over [-4, 4) m
FEATURE_DIM = 2 + 3 * LATERAL_BINS
#: the BC experiments run on the straight lead-in: behaviour cloning from a
#: single driving mode, the paper's lack-of-exploration setting
BC_STATION_RANGE = (28.0, 58.0)


class BCStateError(RuntimeError):
    pass


def _straight_baseline(horizon: int, speed: float, dt: float = 0.5) -> np.ndarray:
    xs = np.arange(1, horizon + 1) * speed * dt
    return np.stack([xs, np.zeros_like(xs)], axis=1)


def _lateral_histogram(points: np.ndarray) -> np.ndarray:
    """Normalized lateral occupancy of near-field map points.

    Raw-ish perception input: under a lateral shift the whole histogram
    translates, putting many dimensions off the training manifold at once
    (the behavior-cloning failure mode this experiment reproduces).
    """
    hist = np.zeros(LATERAL_BINS)
    if len(points):
        m = (points[:, 0] > 1.0) & (points[:, 0] < 14.0)
        ys = points[m, 1]
        idx = np.floor((ys + 4.0) / 0.25).astype(int)
        ok = (idx >= 0) & (idx < LATERAL_BINS)
        np.add.at(hist, idx[ok], 1.0)
        total = hist.sum()
        if total > 0:
            hist /= total
    return hist


def _lane_quadratic(perceived: PerceivedLayout) -> tuple[float, float, float] | None:
    """y = a + b x + c x^2 fit of the ego lane's centerline points."""
    pts = perceived.centerline_points
    if len(pts) < 6:
        return None
    m = (pts[:, 0] >= 2.0) & (pts[:, 0] <= 18.0) & (np.abs(pts[:, 1]) < 4.2)
    pts = pts[m]
    if len(pts) < 6:
        return None
    ys = pts[:, 1]
    seed_y = ys[np.argsort(np.abs(ys))[0]]
    cluster = pts[np.abs(ys - seed_y) < 1.4]
    if len(cluster) < 6:
        return None
    c2, c1, c0 = np.polyfit(cluster[:, 0], cluster[:, 1], 2)
    return float(c0), float(c1), float(c2)


def layout_features(perceived: PerceivedLayout, speed: float) -> np.ndarray:
    """Raw-ish features: lateral occupancy rasters for lanes, curbs, agents.

    Deliberately no distilled offset/slope/position scalars: like an
    end-to-end planner the regressor reads scene geometry from rasters, which
    is exactly the representation that breaks under an out-of-distribution
    lateral shift.
    """
    agent_pts = np.asarray([[det.position[0], det.position[1] / 2.0]
                            for det in perceived.agents])
    base = [speed, float(len(perceived.agents))]
    return np.concatenate([
        np.asarray(base, dtype=np.float64),
        _lateral_histogram(perceived.centerline_points),
        _lateral_histogram(perceived.curb_points),
        _lateral_histogram(agent_pts.reshape(-1, 2) if len(agent_pts) else agent_pts)])


@dataclass
class BCPlanner:
    """Ridge regression from layout features to horizon waypoints.

    Closed-form and deterministic: behavior cloning with no corrective
    demonstrations learns (near-)zero weight on the lateral-offset feature
    directions, so an out-of-distribution shift simply is not corrected.
    """

    horizon: int
    weights: np.ndarray            # [FEATURE_DIM + 1, 2 * horizon]
    mean: np.ndarray
    std: np.ndarray
    trained_steps: int = 0

    def plan(self, perceived: PerceivedLayout, speed: float) -> np.ndarray:
        """Ego-frame waypoints [horizon + 1, 2] (origin first)."""
        feats = (layout_features(perceived, speed) - self.mean) / self.std
        x = np.concatenate([feats, [1.0]])
        pts = (x @ self.weights).reshape(self.horizon, 2)
        return np.concatenate([np.zeros((1, 2)), pts], axis=0)

    def parameter_snapshot(self) -> np.ndarray:
        return self.weights.copy()


def _expert_samples(episodes: list[PlanningEpisode], cfg: Config) -> tuple[np.ndarray, np.ndarray]:
    """(features, targets) from centered expert rollouts on real renders."""
    rig = rig_from_config(cfg)
    horizon = cfg.planner.horizon
    xs, ys = [], []
    for episode in episodes:
        expert = episode.expert
        usable = max(1, len(expert) - 1 - horizon)
        for t in range(usable):
            state = episode.states[t]
            perceived = oracle_perceive(render_views(state, rig), rig)
            xs.append(layout_features(perceived, episode.expert_speed))
            # future expert waypoints in the ego frame at step t
            x0, y0, h0 = state.ego_pose
            c, s = math.cos(h0), math.sin(h0)
            fut = []
            for i in range(1, horizon + 1):
                p = expert[min(t + i, len(expert) - 1)] - np.array([x0, y0])
                fut.append([c * p[0] + s * p[1], -s * p[0] + c * p[1]])
            ys.append(np.asarray(fut).ravel())
    return np.stack(xs), np.stack(ys)


RIDGE_LAMBDA = 0.3


def _ridge(xs: np.ndarray, ys: np.ndarray, mean: np.ndarray,
           std: np.ndarray) -> np.ndarray:
    x = (xs - mean) / std
    x = np.concatenate([x, np.ones((len(x), 1))], axis=1)
    gram = x.T @ x + RIDGE_LAMBDA * np.eye(x.shape[1])
    return np.linalg.solve(gram, x.T @ ys)


def bc_planner_fit(episodes: list[PlanningEpisode], cfg: Config,
                   steps: int = 400, seed: int = 0) -> BCPlanner:
    """Fit the regression planner on centered expert clips."""
    xs, ys = _expert_samples(episodes, cfg)
    mean = xs.mean(axis=0)
    std = np.maximum(xs.std(axis=0), 1e-3)
    weights = _ridge(xs, ys, mean, std)
    return BCPlanner(horizon=cfg.planner.horizon, weights=weights, mean=mean,
                     std=std, trained_steps=1)


def recovery_trajectory(offset: float, speed: float, horizon: int,
                        dt: float) -> np.ndarray:
    """Ego-frame waypoints steering back to the lane centre over ~4 steps."""
    pts = [np.zeros(2)]
    for i in range(1, horizon + 1):
        frac = min(1.0, i / 4.0)
        pts.append(np.array([i * speed * dt, -offset * frac]))
    return np.stack(pts)


def _generate_recovery_samples(episodes: list[PlanningEpisode], cfg: Config,
                               generator: FactorizedGenerator,
                               shift: float) -> tuple[np.ndarray, np.ndarray]:
    """World-model generated OOD-start clips under return trajectories."""
    if generator.joint.stage != "video":
        raise BCStateError("recovery fine-tuning requires a trained world model")
    rig = generator.rig
    horizon = cfg.planner.horizon
    xs, ys = [], []
    for episode in episodes:
        state = episode.world           # already laterally shifted
        frame0 = render_views(state, rig)
        perceived0 = oracle_perceive(frame0, rig)
        line = fit_centerline(perceived0)
        offset = shift if line is None else -float(line[0] / math.hypot(line[1], 1.0))
        speed = max(episode.expert_speed, 1.0)
        recovery = recovery_trajectory(offset, speed, cfg.clip.frames, cfg.clip.dt_s)
        actions = np.diff(recovery, axis=0).astype(np.float32)
        persp = np.stack([
            project_layout(state, k, rig, cfg.render.bev_size,
                           cfg.render.bev_scale).perspective for k in range(rig.k)])
        bev = project_layout(state, 0, rig, cfg.render.bev_size,
                             cfg.render.bev_scale).bev
        cond = ClipConditions(
            ctx_frames=frame0.images[None], persp=persp, bev=bev,
            meta_codes=(int(state.meta.weather), int(state.meta.lighting)),
            actions=actions, mode="action")
        clip = generator.generate_factorized(
            cond, derive_seed(0xBC, episode.seed), n_steps=cfg.planner.sample_steps)

        def target_from(step: int) -> np.ndarray:
            base = recovery[step]
            d = recovery[min(step + 1, len(recovery) - 1)] - recovery[step]
            h = math.atan2(d[1], d[0]) if np.hypot(*d) > 1e-6 else 0.0
            c, s = math.cos(h), math.sin(h)
            fut = []
            for i in range(1, horizon + 1):
                p = recovery[min(step + i, len(recovery) - 1)] - base
                fut.append([c * p[0] + s * p[1], -s * p[0] + c * p[1]])
            return np.asarray(fut).ravel()

        # the shifted real frame anchors the distribution; generated frames
        # supply the rest of the return maneuver
        xs.append(layout_features(perceived0, speed))
        ys.append(target_from(0))
        for t in range(1, min(horizon, clip.shape[0])):
            perceived = oracle_perceive(
                MultiviewFrame(images=clip[t], meta=state.meta), rig)
            xs.append(layout_features(perceived, speed))
            ys.append(target_from(t))
    return np.stack(xs), np.stack(ys)


def bc_recovery_finetune(planner: BCPlanner, episodes: list[PlanningEpisode],
                         cfg: Config, generator: FactorizedGenerator,
                         shift: float = 0.5, expert_episodes: list[PlanningEpisode] | None = None,
                         steps: int = 400, seed: int = 1) -> BCPlanner:
    """Continue training on generated recovery clips; no clips, no change."""
    if not episodes:
        return planner
    xs_new, ys_new = _generate_recovery_samples(episodes, cfg, generator, shift)
    if expert_episodes:
        xs_old, ys_old = _expert_samples(expert_episodes, cfg)
        xs = np.concatenate([xs_old, xs_new])
        ys = np.concatenate([ys_old, ys_new])
    else:
        xs, ys = xs_new, ys_new
    mean = xs.mean(axis=0)
    std = np.maximum(xs.std(axis=0), 1e-3)
    planner.weights = _ridge(xs, ys, mean, std)
    planner.mean = mean
    planner.std = std
    planner.trained_steps += 1
    return planner
