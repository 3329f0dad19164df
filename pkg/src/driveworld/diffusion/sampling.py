"""DDIM sampling with stochasticity eta and classifier-free guidance."""

from __future__ import annotations

from typing import Callable

import torch

from .schedule import NoiseSchedule


class NumericError(RuntimeError):
    pass


def cfg_combine(eps_uncond: torch.Tensor, eps_cond: torch.Tensor,
                scale: float) -> torch.Tensor:
    """eps_uncond + scale * (eps_cond - eps_uncond); scales 0 and 1 are exact."""
    if eps_uncond.shape != eps_cond.shape:
        raise ValueError("cfg_combine requires matching shapes")
    if scale == 0.0:
        return eps_uncond
    if scale == 1.0:
        return eps_cond
    return eps_uncond + scale * (eps_cond - eps_uncond)


def ddim_step(z_tau: torch.Tensor, eps_hat: torch.Tensor, schedule: NoiseSchedule,
              tau: int, tau_prev: int, eta: float,
              rng: torch.Generator | None = None) -> torch.Tensor:
    """One DDIM update from step ``tau`` down to ``tau_prev`` (< tau)."""
    if tau_prev >= tau:
        raise ValueError(f"tau_prev ({tau_prev}) must be < tau ({tau})")
    # coefficient math in float64: 1/alpha amplifies rounding near the end
    a_t = schedule.alpha[tau].double()
    s_t = schedule.sigma[tau].double()
    a_p = schedule.alpha[tau_prev].double()
    s_p = schedule.sigma[tau_prev].double()
    if a_t <= 0:
        raise NumericError("alpha_tau is zero; schedule should prevent this")
    z0_hat = (z_tau.double() - s_t * eps_hat.double()) / a_t
    # posterior scale: eta * sigma_prev/sigma_tau * sqrt(1 - alpha_tau^2/alpha_prev^2)
    ratio = (1.0 - (a_t / a_p) ** 2).clamp(min=0.0)
    sigma_tilde = eta * (s_p / s_t.clamp(min=1e-12)) * ratio.sqrt()
    sigma_tilde = torch.minimum(sigma_tilde, s_p)
    dir_coeff = (s_p**2 - sigma_tilde**2).clamp(min=0.0).sqrt()
    out = a_p * z0_hat + dir_coeff * eps_hat.double()
    if eta > 0:
        noise = torch.randn(z_tau.shape, generator=rng, device=z_tau.device).double()
        out = out + sigma_tilde * noise
    return out.to(z_tau.dtype)


def sub_schedule(n_train: int, n_sample: int) -> list[int]:
    """Uniformly spaced descending step indices ending at 0."""
    n_sample = min(n_sample, n_train)
    idx = torch.linspace(0, n_train - 1, n_sample).round().long()
    return sorted(set(idx.tolist()), reverse=True)


def sample(model: Callable[[torch.Tensor, torch.Tensor], torch.Tensor],
           model_uncond: Callable[[torch.Tensor, torch.Tensor], torch.Tensor] | None,
           shape: tuple[int, ...], schedule: NoiseSchedule, n_steps: int = 50,
           eta: float = 1.0, cfg_scale: float = 5.0, seed: int = 0) -> torch.Tensor:
    """Iterate DDIM over a uniformly spaced sub-schedule.

    ``model(z, tau)`` returns the conditioned eps prediction; ``model_uncond``
    the condition-dropped one.  With ``cfg_scale == 1`` the unconditional
    branch is never evaluated, which leaves the output bit-identical to
    conditioned-only sampling.
    """
    rng = torch.Generator().manual_seed(seed)
    z = torch.randn(shape, generator=rng)
    steps = sub_schedule(schedule.n_steps, n_steps)
    for tau, tau_prev in zip(steps[:-1], steps[1:]):
        tau_t = torch.full((shape[0],), tau, dtype=torch.long)
        eps_cond = model(z, tau_t)
        if cfg_scale == 1.0 or model_uncond is None:
            eps_hat = eps_cond
        else:
            eps_hat = cfg_combine(model_uncond(z, tau_t), eps_cond, cfg_scale)
        if not torch.isfinite(eps_hat).all():
            raise NumericError(f"non-finite model output at step {tau}")
        z = ddim_step(z, eps_hat, schedule, tau, tau_prev, eta, rng)
    return z
