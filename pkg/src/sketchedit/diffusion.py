"""Gaussian diffusion math: noise schedule, forward noising, reverse step.

Closed forms used throughout:

    forward:   z_t = sqrt(abar_t) * z_0 + sqrt(1 - abar_t) * eps
    inversion: z0_hat = (z_t - sqrt(1 - abar_t) * eps_hat) / sqrt(abar_t)
    reverse:   mu = (z_t - beta_t / sqrt(1 - abar_t) * eps_hat) / sqrt(alpha_t)
               sigma = sqrt(beta_t) for t > 1, sigma = 0 at t = 1

Time is 1-based: t ranges over {1..T}; t = 0 means clean data. All
functions are pure and never draw randomness internally; callers pass
eps/noise explicitly. Inputs may be numpy arrays or torch tensors, the
schedule coefficients are applied as python floats either way.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DEFAULT_T = 200
DEFAULT_BETA_START = 1e-4
# Chosen so the default schedule fully destroys the signal: abar_T ~ 0.028.
DEFAULT_BETA_END = 0.035


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step variances and their running products for T steps."""

    T: int
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray

    def to_config(self) -> dict:
        return {
            "T": int(self.T),
            "beta_start": float(self.betas[0]),
            "beta_end": float(self.betas[-1]),
            "kind": "linear",
        }

    @staticmethod
    def from_config(cfg: dict) -> "NoiseSchedule":
        if cfg.get("kind", "linear") != "linear":
            raise ValueError(f"unsupported schedule kind: {cfg.get('kind')!r}")
        return make_schedule(int(cfg["T"]), float(cfg["beta_start"]), float(cfg["beta_end"]))


@dataclass(frozen=True)
class PosteriorParams:
    """Mean and (scalar) standard deviation of one reverse-step Gaussian."""

    mu: object
    sigma: float


def make_schedule(
    T: int = DEFAULT_T,
    beta_start: float = DEFAULT_BETA_START,
    beta_end: float = DEFAULT_BETA_END,
) -> NoiseSchedule:
    """Linear variance schedule: betas interpolate beta_start..beta_end over T steps."""
    if T < 1:
        raise ValueError(f"step count must be >= 1, got {T}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError(
            f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})"
        )
    betas = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    alphas = 1.0 - betas
    alpha_bars = np.cumprod(alphas)
    return NoiseSchedule(T=T, betas=betas, alphas=alphas, alpha_bars=alpha_bars)


def _check_t(t: int, sched: NoiseSchedule) -> None:
    if not 1 <= t <= sched.T:
        raise ValueError(f"t={t} outside schedule range 1..{sched.T}")


def _check_same_shape(a, b, what: str) -> None:
    if tuple(a.shape) != tuple(b.shape):
        raise ValueError(f"{what}: shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")


def q_sample(z0, t: int, eps, sched: NoiseSchedule):
    """Noise clean data to level t: sqrt(abar_t) z0 + sqrt(1-abar_t) eps."""
    _check_t(t, sched)
    _check_same_shape(z0, eps, "q_sample")
    abar = float(sched.alpha_bars[t - 1])
    return math.sqrt(abar) * z0 + math.sqrt(1.0 - abar) * eps


def predict_z0(z_t, eps_hat, t: int, sched: NoiseSchedule):
    """Invert q_sample given a noise estimate: the one-step clean-data estimate."""
    _check_t(t, sched)
    abar = float(sched.alpha_bars[t - 1])
    return (z_t - math.sqrt(1.0 - abar) * eps_hat) / math.sqrt(abar)


def posterior_params(z_t, eps_hat, t: int, sched: NoiseSchedule) -> PosteriorParams:
    """Reverse-step Gaussian parameters from the predicted noise.

    The variance is fixed to beta_t rather than learned; the final step
    (t = 1) is deterministic so sampling terminates without residual noise.
    """
    _check_t(t, sched)
    alpha = float(sched.alphas[t - 1])
    beta = float(sched.betas[t - 1])
    abar = float(sched.alpha_bars[t - 1])
    mu = (z_t - (beta / math.sqrt(1.0 - abar)) * eps_hat) / math.sqrt(alpha)
    sigma = math.sqrt(beta) if t > 1 else 0.0
    return PosteriorParams(mu=mu, sigma=sigma)


def p_sample(params: PosteriorParams, noise):
    """Draw z_{t-1} = mu + sigma * noise from reverse-step parameters."""
    _check_same_shape(params.mu, noise, "p_sample")
    return params.mu + params.sigma * noise
