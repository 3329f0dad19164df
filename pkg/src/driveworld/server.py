"""HTTP session service: interactive action-conditioned rollout and what-if
planning for the explorer client.

Sessions are isolated and allow one in-flight operation each (409 otherwise).
Frames travel as base64 PNG inside JSON.  The ``oracle`` checkpoint imagines
futures by stepping the synthetic world itself; a trained checkpoint directory
swaps in the diffusion world model.
"""

from __future__ import annotations

import base64
import math
import threading
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np
from fastapi import FastAPI
from fastapi.responses import JSONResponse

from .config import Config
from .data import rig_from_config
from .factorized import FactorizedGenerator
from .net.training import WorldModel
from .planner import (PlanningTreeNode, RewardBreakdown, combined_reward,
                      gt_reward, sample_candidates, select_index)
from .planner.tree import imagine, score_imagined
from .world import (MultiviewFrame, build_world, oracle_perceive, render_views,
                    step_world)


def _png_b64(image: np.ndarray) -> str:
    bgr = (np.transpose(image, (1, 2, 0))[:, :, ::-1] * 255.0).round().astype(np.uint8)
    ok, buf = cv2.imencode(".png", bgr)
    if not ok:
        raise RuntimeError("PNG encode failed")
    return base64.b64encode(buf.tobytes()).decode("ascii")


def _frames_payload(images: np.ndarray) -> list[str]:
    return [_png_b64(images[v]) for v in range(images.shape[0])]


@dataclass
class Session:
    session_id: str
    seed: int
    checkpoint: str
    state: object
    committed: list[list[float]] = field(default_factory=list)
    branches: list[dict] = field(default_factory=list)
    branch_epoch: int = 0
    tree: PlanningTreeNode | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)
    steps: int = 0


class ServiceError(Exception):
    def __init__(self, status: int, code: str, message: str):
        self.status = status
        self.code = code
        self.message = message


def create_app(cfg: Config, models_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="driveworld session service")
    rig = rig_from_config(cfg)
    sessions: dict[str, Session] = {}
    counter = {"n": 0}
    generators: dict[str, FactorizedGenerator] = {}

    def load_generator(checkpoint: str) -> FactorizedGenerator | None:
        if checkpoint == "oracle":
            return None
        if checkpoint in generators:
            return generators[checkpoint]
        if models_dir is None:
            raise ServiceError(400, "no_models", "server started without --models")
        base = Path(models_dir)
        joint = WorldModel.load(base / f"joint_{checkpoint}")
        stitch_dir = base / f"stitch_{checkpoint}"
        stitch = WorldModel.load(stitch_dir) if stitch_dir.exists() else None
        generators[checkpoint] = FactorizedGenerator(joint, stitch, cfg, rig)
        return generators[checkpoint]

    def get_session(session_id: str) -> Session:
        if session_id not in sessions:
            raise ServiceError(404, "unknown_session", f"no session {session_id}")
        return sessions[session_id]

    def perceived_payload(state) -> dict:
        frame = render_views(state, rig)
        perceived = oracle_perceive(frame, rig)
        return {
            "agents": [
                {"category": a.category, "x": a.position[0], "y": a.position[1],
                 "confidence": a.confidence} for a in perceived.agents],
            "centerline_points": perceived.centerline_points.tolist(),
            "curb_points": perceived.curb_points.tolist(),
        }, frame, perceived

    @app.exception_handler(ServiceError)
    async def service_error_handler(_, exc: ServiceError):
        return JSONResponse(status_code=exc.status,
                            content={"error": exc.message, "code": exc.code})

    @app.post("/sessions")
    def create_session(body: dict):
        seed = int(body.get("seed", 0))
        checkpoint = str(body.get("checkpoint", "oracle"))
        load_generator(checkpoint)   # validate eagerly
        counter["n"] += 1
        session_id = f"s{counter['n']:04d}"
        state = build_world(seed, cfg)
        session = Session(session_id=session_id, seed=seed,
                          checkpoint=checkpoint, state=state)
        session.tree = PlanningTreeNode(
            depth=0, trajectory_prefix=np.asarray([state.ego_pose[:2]]), node_id=0)
        sessions[session_id] = session
        frame = render_views(state, rig)
        return {"id": session_id, "frames": _frames_payload(frame.images)}

    def _locked(session: Session):
        if not session.lock.acquire(blocking=False):
            raise ServiceError(409, "busy", "another operation is in flight")
        return session.lock

    @app.post("/sessions/{session_id}/step")
    def step(session_id: str, body: dict):
        session = get_session(session_id)
        lock = _locked(session)
        try:
            action = body.get("action", {})
            dx = float(action.get("dx", 0.0))
            dy = float(action.get("dy", 0.0))
            session.state = step_world(session.state, (dx, dy), cfg.clip.dt_s)
            session.committed.append([dx, dy])
            session.steps += 1
            session.branches = []
            overlay, frame, perceived = perceived_payload(session.state)
            reward = combined_reward([perceived])
            return {"frames": _frames_payload(frame.images),
                    "perceived": overlay,
                    "reward": reward.as_dict(),
                    "step": session.steps}
        finally:
            lock.release()

    @app.post("/sessions/{session_id}/imagine")
    def imagine_endpoint(session_id: str, body: dict):
        session = get_session(session_id)
        lock = _locked(session)
        try:
            commands = body.get("commands", ["left", "straight", "right"])
            state = session.state
            frame = render_views(state, rig)
            perceived = oracle_perceive(frame, rig)
            speed = cfg.world.cruise_speed
            candidates = sample_candidates(
                perceived, tuple(commands), speed=speed,
                horizon=cfg.planner.horizon, dt=cfg.clip.dt_s,
                turn_rate_deg=cfg.planner.turn_rate_deg)
            generator = load_generator(session.checkpoint)
            branches = []
            session.branch_epoch += 1
            parent = session.tree
            parent.children = []
            for i, cand in enumerate(candidates):
                if generator is None:
                    clip, reward = _oracle_imagine(state, cand, cfg, rig)
                else:
                    clip = imagine([cand], state, frame, generator, cfg,
                                   node_id=session.steps)[0]
                    reward = score_imagined(clip, state, cfg.planner.horizon, rig)
                branch_id = f"{session.branch_epoch}:{i}"
                frames = [_frames_payload(clip[t]) for t in range(clip.shape[0])]
                branch = {
                    "branch": branch_id,
                    "candidate": {"command": cand.command,
                                  "waypoints": cand.waypoints.tolist()},
                    "frames": frames,
                    "reward_breakdown": reward.as_dict(),
                }
                branches.append(branch)
                parent.children.append(PlanningTreeNode(
                    depth=parent.depth + 1, trajectory_prefix=parent.trajectory_prefix,
                    candidate=cand, reward=reward, node_id=len(parent.children)))
            session.branches = branches
            return {"branches": branches}
        finally:
            lock.release()

    @app.post("/sessions/{session_id}/commit")
    def commit(session_id: str, body: dict):
        session = get_session(session_id)
        lock = _locked(session)
        try:
            branch_id = str(body.get("branch", ""))
            match = [b for b in session.branches if b["branch"] == branch_id]
            if not match:
                raise ServiceError(409, "stale_branch",
                                   "branch is not part of the latest imagine")
            branch = match[0]
            waypoints = np.asarray(branch["candidate"]["waypoints"])
            x, y, h = session.state.ego_pose
            c, s = math.cos(h), math.sin(h)
            step_ego = waypoints[1] - waypoints[0]
            dx = c * step_ego[0] - s * step_ego[1]
            dy = s * step_ego[0] + c * step_ego[1]
            session.state = step_world(session.state, (float(dx), float(dy)),
                                       cfg.clip.dt_s)
            session.committed.append([float(dx), float(dy)])
            session.steps += 1
            chosen = next(n for n in session.tree.children
                          if n.candidate.command == branch["candidate"]["command"])
            chosen.trajectory_prefix = np.concatenate(
                [session.tree.trajectory_prefix,
                 np.asarray([session.state.ego_pose[:2]])])
            session.tree = chosen
            session.branches = []
            frame = render_views(session.state, rig)
            return {"frames": _frames_payload(frame.images), "step": session.steps}
        finally:
            lock.release()

    @app.get("/sessions/{session_id}/tree")
    def tree(session_id: str):
        session = get_session(session_id)
        node = session.tree
        return {"depth": node.depth,
                "committed": session.committed,
                "node": node.to_dict()}

    return app


def _oracle_imagine(state, candidate, cfg: Config, rig):
    """Ground-truth imagination: step the world along the candidate."""
    from .planner.tree import ego_to_world

    waypoints = ego_to_world(candidate.waypoints, state.ego_pose)
    sim = state
    frames = [render_views(sim, rig).images]
    states = [sim]
    for i in range(1, len(waypoints)):
        action = waypoints[i] - waypoints[i - 1]
        sim = step_world(sim, (float(action[0]), float(action[1])), cfg.clip.dt_s)
        states.append(sim)
        frames.append(render_views(sim, rig).images)
    reward = gt_reward(candidate, states, state.ego_pose)
    return np.stack(frames), reward


def run_server(cfg: Config, port: int, models_dir: str | None = None) -> None:
    import uvicorn

    app = create_app(cfg, models_dir)
    uvicorn.run(app, host="127.0.0.1", port=port, log_level="warning")
