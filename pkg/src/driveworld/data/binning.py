"""Behavior splitting, action digitization, and balanced re-sampling.

The action grid is 32 steering bins by 11 speed bins.  Speed bins 0-9 cover
[0, 40) m/s in 4 m/s strides with bin 10 as overflow; steering bins 1-30
cover [-150, 150) degrees in 10-degree strides with bins 0 and 31 as the two
overflow sides.  Intervals are half-open and lower-inclusive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SPEED_BIN_WIDTH = 4.0
SPEED_MAX = 40.0
STEER_BIN_WIDTH = 10.0
STEER_MAX = 150.0
N_SPEED_BINS = 11
N_STEER_BINS = 32


@dataclass(frozen=True, order=True)
class ActionBin:
    speed_bin: int
    steer_bin: int

    def __post_init__(self):
        if not 0 <= self.speed_bin < N_SPEED_BINS:
            raise ValueError(f"speed_bin out of range: {self.speed_bin}")
        if not 0 <= self.steer_bin < N_STEER_BINS:
            raise ValueError(f"steer_bin out of range: {self.steer_bin}")


def digitize_action(mean_speed: float, mean_steer: float) -> ActionBin:
    """Map a (speed m/s, steering deg) pair to its grid bin."""
    if not (math.isfinite(mean_speed) and math.isfinite(mean_steer)):
        raise ValueError("digitize_action needs finite inputs")
    if mean_speed >= SPEED_MAX:
        speed_bin = 10
    else:
        speed_bin = max(0, int(mean_speed // SPEED_BIN_WIDTH))
    if mean_steer < -STEER_MAX:
        steer_bin = 0
    elif mean_steer >= STEER_MAX:
        steer_bin = N_STEER_BINS - 1
    else:
        steer_bin = 1 + int((mean_steer + STEER_MAX) // STEER_BIN_WIDTH)
    return ActionBin(speed_bin, steer_bin)


@dataclass(frozen=True)
class BehaviorSegment:
    start: int            # first frame index (inclusive)
    stop: int             # last frame index (exclusive)
    tag: str              # left | straight | right

    @property
    def n_frames(self) -> int:
        return self.stop - self.start


def _classify_step(delta_deg: float, theta_straight: float) -> str:
    if abs(delta_deg) < theta_straight:
        return "straight"
    return "left" if delta_deg > 0 else "right"


def split_clips_by_behavior(trajectory: np.ndarray, min_frames: int,
                            theta_straight_deg: float = 2.0) -> list[BehaviorSegment]:
    """Maximal single-behavior frame ranges; ranges shorter than
    ``min_frames`` are dropped."""
    traj = np.asarray(trajectory, dtype=np.float64)
    if len(traj) < 2:
        return []
    steps = np.diff(traj, axis=0)
    headings = np.arctan2(steps[:, 1], steps[:, 0])
    deltas = np.degrees((np.diff(headings) + np.pi) % (2 * np.pi) - np.pi)
    if len(deltas) == 0:
        classes = ["straight"]
    else:
        classes = [_classify_step(d, theta_straight_deg) for d in deltas]
        classes = [classes[0]] + classes  # first step inherits its delta class
    segments: list[BehaviorSegment] = []
    start = 0
    for i in range(1, len(classes) + 1):
        if i == len(classes) or classes[i] != classes[start]:
            seg = BehaviorSegment(start=start, stop=i + 1, tag=classes[start])
            if seg.n_frames >= min_frames:
                segments.append(seg)
            start = i
    return segments


@dataclass
class ClipIndex:
    """Index of clips with their action bins and behavior tags."""

    seed: int
    entries: list[tuple[str, ActionBin, str]] = field(default_factory=list)

    def bins(self) -> dict[ActionBin, list[int]]:
        table: dict[ActionBin, list[int]] = {}
        for i, (_, b, _) in enumerate(self.entries):
            table.setdefault(b, []).append(i)
        return table


def resample_bins(index: ClipIndex, n_per_bin: int) -> ClipIndex:
    """Balanced index: every non-empty bin contributes exactly ``n_per_bin``
    entries (sampled without replacement when over-full, cycled in order when
    under-full)."""
    if n_per_bin < 1:
        raise ValueError("n_per_bin must be >= 1")
    out = ClipIndex(seed=index.seed)
    for action_bin, members in sorted(index.bins().items()):
        if len(members) >= n_per_bin:
            rng = np.random.default_rng(
                np.random.SeedSequence([index.seed, action_bin.speed_bin,
                                        action_bin.steer_bin]))
            chosen = rng.choice(len(members), size=n_per_bin, replace=False)
            picked = [members[i] for i in sorted(chosen)]
        else:
            picked = [members[i % len(members)] for i in range(n_per_bin)]
        out.entries.extend(index.entries[i] for i in picked)
    return out
