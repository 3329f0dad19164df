"""The denoising score-matching objective (epsilon prediction)."""

from __future__ import annotations

from typing import Callable

import torch

from .sampling import NumericError
from .schedule import NoiseSchedule, diffuse


def denoising_loss(model: Callable[[torch.Tensor, torch.Tensor], torch.Tensor],
                   clip_latents: torch.Tensor, schedule: NoiseSchedule,
                   rng: torch.Generator) -> torch.Tensor:
    """MSE between true noise and the model's prediction.

    ``clip_latents`` is [B, ...]; one diffusion step is drawn uniformly per
    batch element, the noise target is the drawn epsilon itself.
    """
    b = clip_latents.shape[0]
    tau = torch.randint(0, schedule.n_steps, (b,), generator=rng)
    eps = torch.randn(clip_latents.shape, generator=rng, dtype=clip_latents.dtype)
    z_tau = diffuse(clip_latents, eps, schedule, tau)
    eps_hat = model(z_tau, tau)
    if not torch.isfinite(eps_hat).all():
        flat = eps_hat.reshape(b, -1)
        bad = (~torch.isfinite(flat)).any(dim=1).nonzero()[0].item()
        raise NumericError(f"non-finite model output for batch index {bad}")
    return ((eps - eps_hat) ** 2).mean()
