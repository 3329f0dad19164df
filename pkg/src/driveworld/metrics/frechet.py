"""Frechet feature distance over a fixed-seed conv encoder.

Ordinal stand-in for FID/FVD: no pretrained backbone, so absolute values are
only comparable within this codebase (A-vs-B on the same encoder).
"""

from __future__ import annotations

import numpy as np
import scipy.linalg
import torch
from torch import nn

FEATURE_DIM = 64
ENCODER_SEED = 1234
SHRINKAGE = 0.05


class InputError(ValueError):
    pass


_encoder_cache: dict[tuple, nn.Module] = {}


def feature_encoder(in_hw: tuple[int, int]) -> nn.Module:
    """Random conv encoder with weights fixed by a constant seed."""
    key = ("conv", in_hw)
    if key not in _encoder_cache:
        gen = torch.Generator().manual_seed(ENCODER_SEED)
        layers = []
        c_prev = 3
        for c in (16, 32, FEATURE_DIM):
            conv = nn.Conv2d(c_prev, c, 3, stride=2, padding=1)
            with torch.no_grad():
                conv.weight.copy_(torch.randn(conv.weight.shape, generator=gen)
                                  * (2.0 / np.sqrt(c_prev * 9)))
                conv.bias.zero_()
            layers += [conv, nn.Tanh()]
            c_prev = c
        net = nn.Sequential(*layers).eval()
        for p in net.parameters():
            p.requires_grad_(False)
        _encoder_cache[key] = net
    return _encoder_cache[key]


def encode_frames(frames: np.ndarray) -> np.ndarray:
    """[N, 3, H, W] images -> [N, FEATURE_DIM] pooled features."""
    net = feature_encoder(frames.shape[-2:])
    with torch.no_grad():
        x = torch.from_numpy(np.ascontiguousarray(frames, dtype=np.float32))
        feats = net(x * 2.0 - 1.0).mean(dim=(-1, -2))
    return feats.numpy().astype(np.float64)


def gaussian_stats(features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mu = features.mean(axis=0)
    if len(features) < 2:
        raise InputError("need at least 2 samples per set")
    cov = np.cov(features, rowvar=False)
    cov = np.atleast_2d(cov)
    if len(features) < 2 * features.shape[1]:
        cov = cov + SHRINKAGE * (np.trace(cov) / cov.shape[0]) * np.eye(cov.shape[0])
    return mu, cov


def frechet_gaussian(mu_a: np.ndarray, cov_a: np.ndarray, mu_b: np.ndarray,
                     cov_b: np.ndarray) -> float:
    diff = mu_a - mu_b
    covmean = scipy.linalg.sqrtm(cov_a @ cov_b)
    if np.iscomplexobj(covmean):
        covmean = covmean.real
    value = float(diff @ diff + np.trace(cov_a + cov_b - 2.0 * covmean))
    return max(value, 0.0)


def frechet_feature_distance(set_a: np.ndarray, set_b: np.ndarray,
                             encoder: str = "conv") -> float:
    """Symmetric premetric between two frame sets (or raw vectors).

    ``set_a``/``set_b``: [N, 3, H, W] frames with the default conv encoder,
    or [N, D] vectors with ``encoder="identity"``.
    """
    if len(set_a) < 2 or len(set_b) < 2:
        raise InputError("need at least 2 samples per set")
    if encoder == "identity":
        fa = np.asarray(set_a, dtype=np.float64)
        fb = np.asarray(set_b, dtype=np.float64)
    elif encoder == "conv":
        fa = encode_frames(np.asarray(set_a))
        fb = encode_frames(np.asarray(set_b))
    else:
        raise InputError(f"unknown encoder {encoder!r}")
    mu_a, cov_a = gaussian_stats(fa)
    mu_b, cov_b = gaussian_stats(fb)
    return frechet_gaussian(mu_a, cov_a, mu_b, cov_b)
