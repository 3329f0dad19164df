"""Variance-preserving noise schedules and forward diffusion."""

from __future__ import annotations

from dataclasses import dataclass

import torch

ALPHA_BAR_MIN = 1e-4   # keeps alpha strictly positive at the last step


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step (alpha, sigma) pairs with alpha^2 + sigma^2 = 1."""

    alpha: torch.Tensor   # [n_steps]
    sigma: torch.Tensor   # [n_steps]
    kind: str

    @property
    def n_steps(self) -> int:
        return len(self.alpha)

    def check(self) -> None:
        vp = (self.alpha**2 + self.sigma**2 - 1.0).abs().max().item()
        if vp > 1e-6:
            raise ScheduleError(f"variance preservation violated by {vp}")
        if (self.alpha[1:] > self.alpha[:-1] + 1e-12).any():
            raise ScheduleError("alpha must be non-increasing")
        if self.alpha[0] < 0.999:
            raise ScheduleError(f"alpha_0 = {self.alpha[0]} < 0.999")


def make_schedule(n_steps: int, kind: str = "cosine") -> NoiseSchedule:
    if n_steps < 2:
        raise ScheduleError(f"n_steps must be >= 2, got {n_steps}")
    ts = torch.arange(1, n_steps + 1, dtype=torch.float64)
    if kind == "cosine":
        s = 0.008
        f = torch.cos((ts / n_steps + s) / (1 + s) * torch.pi / 2) ** 2
        f0 = torch.cos(torch.tensor(s / (1 + s), dtype=torch.float64) * torch.pi / 2) ** 2
        alpha_bar = (f / f0).clamp(ALPHA_BAR_MIN, 1.0)
        # the first step must stay almost noise-free even for tiny schedules
        alpha_bar[0] = alpha_bar[0].clamp(min=0.9981)
        alpha_bar = torch.cummin(alpha_bar, dim=0).values
    elif kind == "linear":
        betas = torch.linspace(1e-4, 0.02, n_steps, dtype=torch.float64)
        alpha_bar = torch.cumprod(1.0 - betas, dim=0).clamp(ALPHA_BAR_MIN, 1.0)
    else:
        raise ScheduleError(f"unknown schedule kind {kind!r}")
    alpha = alpha_bar.sqrt()
    sigma = (1.0 - alpha_bar).sqrt()
    sched = NoiseSchedule(alpha=alpha.to(torch.float32), sigma=sigma.to(torch.float32),
                          kind=kind)
    sched.check()
    return sched


def diffuse(z: torch.Tensor, eps: torch.Tensor, schedule: NoiseSchedule,
            tau: int | torch.Tensor) -> torch.Tensor:
    """Forward diffusion z_tau = alpha_tau * z + sigma_tau * eps."""
    if eps.shape != z.shape:
        raise ValueError(f"eps shape {tuple(eps.shape)} != z shape {tuple(z.shape)}")
    if torch.is_tensor(tau):
        a = schedule.alpha[tau].view(-1, *([1] * (z.dim() - 1)))
        s = schedule.sigma[tau].view(-1, *([1] * (z.dim() - 1)))
    else:
        a = schedule.alpha[tau]
        s = schedule.sigma[tau]
    return a * z + s * eps
