import numpy as np
import pytest
import torch

from driveworld.conditions import (AssemblyError, ConditionEncoders, assemble,
                                   drop_conditions, unconditional_like)

torch.set_num_threads(1)

D = 128
HW = (48, 96)      # default render resolution
BEV = 64


@pytest.fixture(scope="module")
def enc():
    torch.manual_seed(0)
    return ConditionEncoders(token_dim=D, image_hw=HW, bev_size=BEV, n_views=6,
                             image_stages=3, bev_stages=3)


def _image(seed=0):
    g = torch.Generator().manual_seed(seed)
    return torch.rand(3, *HW, generator=g)


def _bev(seed=1):
    g = torch.Generator().manual_seed(seed)
    return torch.rand(3, BEV, BEV, generator=g)


# -------------------------------------------------------------- image tokens

def test_image_tokens_count(enc):
    tokens = enc.encode_image_cond(_image())
    assert tokens.shape == (72, D)          # 96/8 * 48/8 with three stride-2 stages


def test_two_images_concatenate(enc):
    one = enc.encode_image_cond(_image(0))
    two = enc.encode_image_cond(torch.stack([_image(0), _image(5)]))
    assert two.shape == (144, D)
    assert torch.allclose(two[:72], one, atol=1e-6)


def test_image_tokens_deterministic(enc):
    a = enc.encode_image_cond(_image(2))
    b = enc.encode_image_cond(_image(2))
    assert torch.equal(a, b)


def test_image_wrong_resolution_rejected(enc):
    with pytest.raises(AssemblyError):
        enc.encode_image_cond(torch.rand(3, 24, 48))


# ------------------------------------------------------------- layout tokens

def test_layout_token_count(enc):
    tokens = enc.encode_layout_cond(_image(3), _bev())
    assert tokens.shape == (72 + 64, D)     # perspective 72 + BEV 8x8


def test_layout_black_embedding_fixed(enc):
    a = enc.encode_layout_cond(torch.zeros(3, *HW), torch.zeros(3, BEV, BEV))
    b = enc.encode_layout_cond(torch.zeros(3, *HW), torch.zeros(3, BEV, BEV))
    assert torch.equal(a, b)


def test_layout_sensitive_to_box_shift(enc):
    persp = torch.zeros(3, *HW)
    persp[:, 20:28, 30:38] = 1.0
    moved = torch.zeros(3, *HW)
    moved[:, 20:28, 40:48] = 1.0
    a = enc.encode_layout_cond(persp, _bev())
    b = enc.encode_layout_cond(moved, _bev())
    assert (a - b).norm(dim=-1).max().item() >= 1e-3


# --------------------------------------------------------------- meta tokens

def test_meta_three_tokens_factorized(enc):
    sunny = enc.encode_meta_cond(0, 0, 0)
    rainy = enc.encode_meta_cond(1, 0, 0)
    assert sunny.shape == (3, D)
    assert not torch.equal(sunny[0], rainy[0])
    assert torch.equal(sunny[1:], rainy[1:])


def test_meta_deterministic_and_validated(enc):
    assert torch.equal(enc.encode_meta_cond(1, 1, 3), enc.encode_meta_cond(1, 1, 3))
    with pytest.raises(AssemblyError):
        enc.encode_meta_cond(2, 0, 0)
    with pytest.raises(AssemblyError):
        enc.encode_meta_cond(0, 0, 97)


# -------------------------------------------------------------------- action

def test_action_shape_and_bias_block(enc):
    zero = enc.encode_action(torch.zeros(2))
    assert zero.shape == (2, D)
    assert torch.equal(zero, enc.encode_action(torch.zeros(2)))
    assert enc.encode_action(torch.tensor([3.0, -1.0])).shape == (2, D)


def test_action_continuity(enc):
    base = enc.encode_action(torch.tensor([1.0, 0.5]))
    deltas = [1e-1, 1e-2, 1e-3, 1e-4]
    norms = [(enc.encode_action(torch.tensor([1.0 + d, 0.5])) - base).norm().item()
             for d in deltas]
    assert all(a > b for a, b in zip(norms, norms[1:]))
    assert norms[-1] < 1e-2


def test_action_rejects_nonfinite(enc):
    with pytest.raises(AssemblyError):
        enc.encode_action(torch.tensor([float("inf"), 0.0]))


# ------------------------------------------------------------------ assembly

def _sources(enc):
    img = enc.encode_image_cond(_image())
    lay = enc.encode_layout_cond(_image(7), _bev())
    meta = enc.encode_meta_cond(0, 1, 2)
    act = enc.encode_action(torch.tensor([1.0, 0.0]))
    return img, lay, meta, act


def test_assemble_length_law(enc):
    img, lay, meta, act = _sources(enc)
    cond = assemble(img, lay, meta, act, mode="action")
    assert cond.assembled().shape == (72 + 136 + 3 + 2, D)
    assert cond.assembled().shape[0] == 213


def test_assemble_layout_mode_omits_action(enc):
    img, lay, meta, _ = _sources(enc)
    cond = assemble(img, lay, meta, None, mode="layout")
    assert cond.assembled().shape == (72 + 136 + 3, D)


def test_assemble_order_stable(enc):
    img, lay, meta, act = _sources(enc)
    for _ in range(5):
        tokens = assemble(img, lay, meta, act, mode="action").assembled()
        assert torch.equal(tokens[:72], img)
        assert torch.equal(tokens[72:208], lay)
        assert torch.equal(tokens[208:211], meta)
        assert torch.equal(tokens[211:], act)


def test_assemble_missing_source_named(enc):
    img, lay, meta, _ = _sources(enc)
    with pytest.raises(AssemblyError, match="action"):
        assemble(img, lay, meta, None, mode="action")
    with pytest.raises(AssemblyError, match="image"):
        assemble(None, lay, meta, None, mode="layout")


# ------------------------------------------------------------------- dropout

def test_drop_p0_identity(enc):
    img, lay, meta, act = _sources(enc)
    cond = assemble(img, lay, meta, act)
    rng = torch.Generator().manual_seed(0)
    dropped = drop_conditions(cond, enc, p=0.0, rng=rng)
    assert torch.equal(dropped.assembled(), cond.assembled())
    assert all(dropped.present.values())


def test_drop_p1_all_null(enc):
    img, lay, meta, act = _sources(enc)
    cond = assemble(img, lay, meta, act)
    rng = torch.Generator().manual_seed(0)
    dropped = drop_conditions(cond, enc, p=1.0, rng=rng)
    assert not any(dropped.present.values())
    assert torch.equal(dropped.image_tokens,
                       enc.nulls["image"].expand(72, D))
    uncond = unconditional_like(cond, enc)
    assert torch.equal(dropped.assembled(), uncond.assembled())


def test_drop_frequency_concentrates(enc):
    img, lay, meta, act = _sources(enc)
    cond = assemble(img, lay, meta, act)
    rng = torch.Generator().manual_seed(42)
    counts = {name: 0 for name in cond.present}
    trials = 10_000
    for _ in range(trials):
        dropped = drop_conditions(cond, enc, p=0.2, rng=rng)
        for name, present in dropped.present.items():
            if not present:
                counts[name] += 1
    for name, count in counts.items():
        assert 0.18 <= count / trials <= 0.22, (name, count / trials)


def test_null_tokens_stable(enc):
    a = enc.null_tokens("layout", 10)
    b = enc.null_tokens("layout", 10)
    assert torch.equal(a, b)
    assert torch.equal(a[0], a[5])


def test_source_isolation(enc):
    img, lay, meta, act = _sources(enc)
    img2 = enc.encode_image_cond(_image(99))
    cond_a = assemble(img, lay, meta, act).assembled()
    cond_b = assemble(img2, lay, meta, act).assembled()
    assert torch.equal(cond_a[72:], cond_b[72:])
    assert not torch.equal(cond_a[:72], cond_b[:72])
