from .build import (HEADING_EPS, build_world, expert_trajectory, lane_polyline,
                    shift_ego_lateral, step_world)
from .camera import agent_in_frustum, ground_from_pixels, project_world
from .perceive import PerceivedAgent, PerceivedLayout, oracle_perceive
from .render import (LayoutRaster, MultiviewFrame, background_template,
                     project_layout, render_views)
from .types import (AgentBox, CameraRig, InputError, Lighting, RoadMap,
                    SceneMeta, Weather, WorldState, wrap_angle)

__all__ = [
    "AgentBox", "CameraRig", "InputError", "LayoutRaster", "Lighting",
    "MultiviewFrame", "PerceivedAgent", "PerceivedLayout", "RoadMap",
    "SceneMeta", "Weather", "WorldState", "agent_in_frustum",
    "background_template", "build_world", "expert_trajectory",
    "ground_from_pixels", "lane_polyline", "oracle_perceive", "project_layout",
    "project_world", "render_views", "shift_ego_lateral", "step_world",
    "wrap_angle", "HEADING_EPS",
]
