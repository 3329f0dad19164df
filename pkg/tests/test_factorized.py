import math

import numpy as np
import pytest
import torch

from driveworld.config import Config
from driveworld.data import rig_from_config
from driveworld.factorized import (ClipConditions, DependencyError,
                                   FactorizedGenerator, PartitionError,
                                   derive_seed, partition_views)
from driveworld.net.training import model_from_config
from driveworld.world import CameraRig

torch.set_num_threads(1)


def _tiny_cfg() -> Config:
    cfg = Config()
    cfg.rig.fov_deg = 80.0
    cfg.render.h, cfg.render.w = 16, 32
    cfg.render.bev_size = 16
    cfg.net.base_channels = 8
    cfg.net.channel_mults = (1, 2)
    cfg.net.attention_levels = (1,)
    cfg.net.heads = 2
    cfg.net.token_dim = 32
    cfg.cond.image_stages = 2
    cfg.clip.frames = 4
    cfg.sample.steps = 3
    return cfg


@pytest.fixture(scope="module")
def generator():
    cfg = _tiny_cfg()
    joint = model_from_config(cfg, "joint", "layout", seed=0)
    joint.stage = "video"
    stitch = model_from_config(cfg, "stitch", "layout", seed=1)
    stitch.stage = "video"
    return FactorizedGenerator(joint, stitch, cfg, rig_from_config(cfg))


def _conditions(cfg: Config, seed=0) -> ClipConditions:
    rng = np.random.default_rng(seed)
    t, k = cfg.clip.frames, cfg.rig.k
    h, w, s = cfg.render.h, cfg.render.w, cfg.render.bev_size
    return ClipConditions(
        ctx_frames=rng.random((1, k, 3, h, w), dtype=np.float32),
        persp=rng.random((t, k, 3, h, w), dtype=np.float32),
        bev=rng.random((t, 3, s, s), dtype=np.float32),
        meta_codes=(0, 0), actions=None, mode="layout")


# ----------------------------------------------------------------- partition

def test_default_partition_matches_reference_sets():
    rig = CameraRig(k=6)
    part = partition_views(rig)
    names = rig.view_names()
    assert {names[v] for v in part.reference} == {"F", "BL", "BR"}
    assert {names[v] for v in part.stitched} == {"FL", "B", "FR"}
    assert part.neighbors[1] == (0, 2)
    assert part.neighbors[3] == (2, 4)
    assert part.neighbors[5] == (4, 0)


def test_partition_two_views():
    rig = CameraRig(k=2, fov=math.radians(200.0))
    part = partition_views(rig)
    assert part.reference == (0,)
    assert part.stitched == (1,)
    assert part.neighbors[1] == (0, 0)


@pytest.mark.parametrize("k", [2, 4, 6])
def test_partition_invariants(k):
    fov = math.radians(360.0 / k + 20.0) if k > 2 else math.radians(200.0)
    part = partition_views(CameraRig(k=k, fov=fov))
    assert set(part.reference) | set(part.stitched) == set(range(k))
    assert not set(part.reference) & set(part.stitched)
    spacing = 360.0 / k
    for v, (left, right) in part.neighbors.items():
        assert (v - left) % k == 1 and (right - v) % k == 1
    # no two reference views adjacent: spacing between them exceeds the fov
    refs = sorted(part.reference)
    for a, b in zip(refs, refs[1:] + [refs[0] + k]):
        assert (b - a) * spacing >= 2 * spacing - 1e-9


def test_partition_rejects_odd_or_disjoint():
    with pytest.raises(PartitionError):
        partition_views(CameraRig(k=3, fov=math.radians(130)))
    with pytest.raises(PartitionError):
        partition_views(CameraRig(k=6, fov=math.radians(59.0)))


def test_derive_seed_stable():
    assert derive_seed(1, 2) == derive_seed(1, 2)
    assert derive_seed(1, 2) != derive_seed(2, 1)


# ---------------------------------------------------------------- generation

def test_reference_views_from_joint(generator):
    cfg = generator.cfg
    refs = generator.generate_reference(_conditions(cfg), seed=0)
    assert set(refs) == set(generator.partition.reference)
    assert len(refs) == 3
    for clip in refs.values():
        assert clip.shape == (cfg.clip.frames, 3, cfg.render.h, cfg.render.w)
        assert np.isfinite(clip).all()


def test_generation_deterministic(generator):
    cfg = generator.cfg
    a = generator.generate_factorized(_conditions(cfg), seed=5)
    b = generator.generate_factorized(_conditions(cfg), seed=5)
    assert np.array_equal(a, b)
    c = generator.generate_factorized(_conditions(cfg), seed=6)
    assert not np.array_equal(a, c)


def test_stitched_requires_neighbors(generator):
    cfg = generator.cfg
    cond = _conditions(cfg)
    refs = generator.generate_reference(cond, seed=0)
    missing = {k: v for k, v in refs.items() if k != 0}
    with pytest.raises(DependencyError):
        generator.generate_stitched(1, missing, cond.ctx_frames[-1, 1], cond, seed=0)


def test_stitched_view_shape(generator):
    cfg = generator.cfg
    cond = _conditions(cfg)
    refs = generator.generate_reference(cond, seed=0)
    clip = generator.generate_stitched(1, refs, cond.ctx_frames[-1, 1], cond, seed=1)
    assert clip.shape == (cfg.clip.frames, 3, cfg.render.h, cfg.render.w)


def test_rollout_frame_arithmetic(generator):
    cfg = generator.cfg
    conds = [_conditions(cfg, seed=i) for i in range(3)]
    video = generator.rollout_video(conds[0].ctx_frames, conds, seed=2,
                                    factorized=False)
    t, ctx = cfg.clip.frames, cfg.clip.context
    assert video.shape[0] == t + (len(conds) - 1) * (t - ctx)


def test_rollout_single_clip_is_plain_generation(generator):
    cfg = generator.cfg
    cond = _conditions(cfg, seed=3)
    video = generator.rollout_video(cond.ctx_frames, [cond], seed=9,
                                    factorized=True)
    direct = generator.generate_factorized(cond, derive_seed(9, 1000))
    assert np.array_equal(video, direct)


def test_rollout_deterministic(generator):
    cfg = generator.cfg
    conds = [_conditions(cfg, seed=i) for i in range(2)]
    a = generator.rollout_video(conds[0].ctx_frames, conds, seed=4, factorized=False)
    b = generator.rollout_video(conds[0].ctx_frames, conds, seed=4, factorized=False)
    assert np.array_equal(a, b)


def test_rollout_frame_count_default_arithmetic():
    # five clips of eight frames with two context frames -> 8 + 4 * 6 = 32
    t, ctx, n = 8, 2, 5
    assert t + (n - 1) * (t - ctx) == 32
