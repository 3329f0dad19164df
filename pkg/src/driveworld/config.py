"""Configuration for the whole pipeline.

One plain-text key-value file drives every subcommand.  Lines look like

    world.n_lanes = 2
    rig.fov_deg = 70.0
    sample.steps = 50

``#`` starts a comment, blank lines are ignored, keys are dotted paths into
the dataclasses below.  The env var ``DRIVEWORLD_CONFIG`` overrides the path
given on the command line.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    """Raised for unknown keys, bad values, or invalid combinations."""


@dataclass
class WorldSection:
    n_lanes: int = 2
    n_agents_min: int = 2
    n_agents_max: int = 6
    lane_width: float = 3.5
    include_turns: bool = True
    agent_min_gap: float = 10.0   # min spacing along a lane between spawned agents (m)
    cruise_speed: float = 5.0     # expert lane-following speed (m/s)


@dataclass
class RigSection:
    k: int = 6
    fov_deg: float = 70.0
    mount_height: float = 1.6


@dataclass
class RenderSection:
    h: int = 48
    w: int = 96
    bev_size: int = 64
    bev_scale: float = 0.75       # metres per BEV pixel


@dataclass
class ClipSection:
    frames: int = 8
    dt_s: float = 0.5
    context: int = 2              # context frames carried between clips


@dataclass
class DataSection:
    n_clips: int = 200
    theta_straight_deg: float = 2.0   # per-step |heading change| below this = straight
    steer_scale: float = 15.0         # heading-change -> steering-angle proxy factor
    n_per_bin: int = 36


@dataclass
class DiffusionSection:
    n_steps: int = 1000
    kind: str = "cosine"


@dataclass
class SampleSection:
    steps: int = 50
    eta: float = 1.0
    cfg: float = 5.0


@dataclass
class NetSection:
    base_channels: int = 64
    channel_mults: tuple[int, ...] = (1, 2, 4)
    attention_levels: tuple[int, ...] = (1, 2)  # levels with temporal/view/cross attention
    heads: int = 4
    token_dim: int = 128


@dataclass
class CondSection:
    image_stages: int = 3         # stride-2 stages in the image/layout encoders
    stitch_image_stages: int = 0  # 0 = same as image_stages
    dropout: float = 0.2


@dataclass
class TrainSection:
    stage1_steps: int = 6000
    stage2_steps: int = 4000
    stitch_steps: int = 4000
    batch_frames: int = 16        # stage-1 image batch
    batch_clips: int = 1          # stage-2 clip batch
    lr_stage1: float = 1e-4
    lr_stage2: float = 5e-5
    log_every: int = 50
    smoke_budget_steps: int = 2000     # stage-1 loss must halve within this many steps
    bc_l2_factor: float = 2.0          # BC planner must reach <= factor * arc planner L2


@dataclass
class PlannerSection:
    horizon: int = 6              # planning steps (x dt = 3 s)
    depth: int = 2                # tree expansions in interactive mode
    d_safe: float = 1.0           # curb clearance saturation (m)
    sigma_center: float = 0.5     # centerline penalty scale (m)
    d_long: float = 5.0           # object reward longitudinal scale (m)
    d_lat: float = 1.5            # object reward lateral scale (m)
    turn_rate_deg: float = 6.0    # per-step heading change of the turn candidates
    sample_steps: int = 10        # DDIM steps used for imagination
    use_gt_bypass: bool = False   # score candidates on ground-truth geometry
    external_reward_url: str = ""
    external_reward_timeout: float = 5.0


@dataclass
class Config:
    world: WorldSection = field(default_factory=WorldSection)
    rig: RigSection = field(default_factory=RigSection)
    render: RenderSection = field(default_factory=RenderSection)
    clip: ClipSection = field(default_factory=ClipSection)
    data: DataSection = field(default_factory=DataSection)
    diffusion: DiffusionSection = field(default_factory=DiffusionSection)
    sample: SampleSection = field(default_factory=SampleSection)
    net: NetSection = field(default_factory=NetSection)
    cond: CondSection = field(default_factory=CondSection)
    train: TrainSection = field(default_factory=TrainSection)
    planner: PlannerSection = field(default_factory=PlannerSection)

    def validate(self) -> "Config":
        if self.world.n_lanes < 1:
            raise ConfigError("world.n_lanes must be >= 1")
        if self.world.n_agents_min < 0 or self.world.n_agents_max < self.world.n_agents_min:
            raise ConfigError("world.n_agents_min/max must satisfy 0 <= min <= max")
        if self.rig.k < 1:
            raise ConfigError("rig.k must be >= 1")
        if self.rig.fov_deg <= 0 or self.rig.fov_deg >= 180:
            raise ConfigError("rig.fov_deg must be in (0, 180)")
        if self.render.h < 8 or self.render.w < 8:
            raise ConfigError("render.h and render.w must be >= 8")
        if self.clip.frames < 2:
            raise ConfigError("clip.frames must be >= 2")
        if self.clip.dt_s <= 0:
            raise ConfigError("clip.dt_s must be > 0")
        if self.diffusion.n_steps < 2:
            raise ConfigError("diffusion.n_steps must be >= 2")
        if self.diffusion.kind not in ("linear", "cosine"):
            raise ConfigError("diffusion.kind must be 'linear' or 'cosine'")
        if not 0.0 <= self.cond.dropout <= 1.0:
            raise ConfigError("cond.dropout must be in [0, 1]")
        if self.rig.k >= 2 and 360.0 / self.rig.k >= self.rig.fov_deg:
            raise ConfigError("rig.k/rig.fov_deg leave no overlap between adjacent views")
        return self

    def fingerprint(self) -> str:
        """Stable hash of the config contents, used to key cached artifacts."""
        blob = json.dumps(dataclasses.asdict(self), sort_keys=True, default=list)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _coerce(raw: str, current) -> object:
    raw = raw.strip()
    if isinstance(current, bool):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if isinstance(current, int):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    if isinstance(current, tuple):
        return tuple(int(v) for v in raw.replace(",", " ").split())
    return raw


def apply_overrides(cfg: Config, pairs: dict[str, str]) -> Config:
    """Apply ``section.keydotted`` -> value string overrides in place."""
    for key, raw in pairs.items():
        parts = key.split(".")
        if len(parts) != 2:
            raise ConfigError(f"config key {key!r} must look like section.name")
        section, name = parts
        if not hasattr(cfg, section):
            raise ConfigError(f"unknown config section {section!r} (key {key!r})")
        sec = getattr(cfg, section)
        if not hasattr(sec, name):
            raise ConfigError(f"unknown config key {key!r}")
        try:
            setattr(sec, name, _coerce(raw, getattr(sec, name)))
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}") from exc
    return cfg


def load_config(path: str | Path | None = None) -> Config:
    """Load a key-value config file; missing path means pure defaults.

    ``DRIVEWORLD_CONFIG`` overrides ``path`` when set.
    """
    env = os.environ.get("DRIVEWORLD_CONFIG")
    if env:
        path = env
    cfg = Config()
    if path is None:
        return cfg.validate()
    text = Path(path).read_text()
    pairs: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, raw = line.split("=", 1)
        pairs[key.strip()] = raw
    apply_overrides(cfg, pairs)
    return cfg.validate()


def dump_config(cfg: Config) -> str:
    lines = []
    for section_name in (f.name for f in dataclasses.fields(cfg)):
        sec = getattr(cfg, section_name)
        for f in dataclasses.fields(sec):
            value = getattr(sec, f.name)
            if isinstance(value, tuple):
                value = " ".join(str(v) for v in value)
            lines.append(f"{section_name}.{f.name} = {value}")
    return "\n".join(lines) + "\n"
