"""Noise schedules, forward diffusion, the reverse-process sampler and training step."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .dsp import AudioSignal, downsample

LOSS_FLOOR = 1e-9

PAPER_INFER_BETAS = (1e-6, 2e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 9e-1)


class ScheduleWarning(UserWarning):
    pass


@dataclass(frozen=True)
class NoiseSchedule:
    """β_1..β_T with derived tables.

    ``betas``, ``alphas`` and ``sigmas`` are indexed by t-1; ``alpha_bars`` has
    T+1 entries with ``alpha_bars[0] == 1`` so that ``alpha_bars[t]`` is ᾱ_t.
    """

    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray
    sigmas: np.ndarray
    name: str = "manual"

    @classmethod
    def from_betas(cls, betas, name="manual"):
        betas = np.asarray(betas, dtype=np.float64).reshape(-1)
        if betas.size == 0:
            raise ValueError("schedule needs at least one beta")
        if not ((betas > 0) & (betas < 1)).all():
            raise ValueError("every beta must lie strictly inside (0, 1)")
        alphas = 1.0 - betas
        alpha_bars = np.concatenate([[1.0], np.cumprod(alphas)])
        # σ_t² = (1-ᾱ_{t-1}) / (1-ᾱ_t) · β_t
        sigmas = np.sqrt((1.0 - alpha_bars[:-1]) / (1.0 - alpha_bars[1:]) * betas)
        for arr in (betas, alphas, alpha_bars, sigmas):
            arr.setflags(write=False)
        return cls(betas, alphas, alpha_bars, sigmas, name)

    @property
    def T(self):
        return self.betas.size

    def sqrt_alpha_bar(self, t):
        return math.sqrt(self.alpha_bars[t])

    @property
    def final_noise_level(self):
        return self.sqrt_alpha_bar(self.T)

    @property
    def passes_half_rule(self):
        return self.final_noise_level < 0.5

    def validate(self):
        """Recompute derived tables from betas and compare."""
        fresh = NoiseSchedule.from_betas(self.betas, self.name)
        for field_name in ("alphas", "alpha_bars", "sigmas"):
            if not np.array_equal(getattr(self, field_name), getattr(fresh, field_name)):
                raise ValueError(f"schedule table {field_name} is inconsistent with betas")
        if not (np.diff(self.alpha_bars) < 0).all():
            raise ValueError("alpha_bar must be strictly decreasing")
        return self


def linear_schedule(beta_min, beta_max, steps, name=None):
    if not (0 < beta_min <= beta_max < 1):
        raise ValueError(f"need 0 < beta_min <= beta_max < 1, got {beta_min}, {beta_max}")
    if steps < 1:
        raise ValueError("schedule length must be >= 1")
    if steps == 1:
        betas = np.array([beta_min], dtype=np.float64)
    else:
        betas = beta_min + (beta_max - beta_min) * np.arange(steps) / (steps - 1)
    return NoiseSchedule.from_betas(betas, name or f"linear({beta_min:g},{beta_max:g},{steps})")


def manual_schedule(betas, name="manual"):
    return NoiseSchedule.from_betas(list(betas), name)


PRESETS = {
    "paper-train-1000": lambda: linear_schedule(1e-6, 0.006, 1000, name="paper-train-1000"),
    "paper-infer-8": lambda: manual_schedule(PAPER_INFER_BETAS, name="paper-infer-8"),
}


def schedule_preset(name):
    try:
        return PRESETS[name]()
    except KeyError:
        raise ValueError(f"unknown schedule preset {name!r}; choose from {sorted(PRESETS)}") from None


def check_training_schedule(schedule):
    """Warn when the final noise level is not below 0.5."""
    if not schedule.passes_half_rule:
        warnings.warn(
            f"schedule {schedule.name!r}: sqrt(alpha_bar_T) = {schedule.final_noise_level:.4f} "
            "is not below 0.5; samples may stay noisy",
            ScheduleWarning, stacklevel=2)
    return schedule


@dataclass(frozen=True)
class NoiseLevel:
    sqrt_alpha_bar: float

    def __post_init__(self):
        if not (0.0 < self.sqrt_alpha_bar <= 1.0):
            raise ValueError(f"noise level must lie in (0, 1], got {self.sqrt_alpha_bar}")


def _level_value(level):
    return NoiseLevel(float(level)).sqrt_alpha_bar if not isinstance(level, NoiseLevel) \
        else level.sqrt_alpha_bar


def _samples(x):
    if isinstance(x, AudioSignal):
        return x.samples
    if isinstance(x, T.Tensor):
        return x.data
    return np.asarray(x, dtype=np.float64)


def diffuse(y0, level, eps):
    """Closed-form q(y_t | y_0): sqrt(ᾱ)·y0 + sqrt(1-ᾱ)·eps."""
    s = _level_value(level)
    y = _samples(y0)
    e = _samples(eps)
    if y.shape != e.shape:
        raise ValueError(f"diffuse: signal length {y.shape} != noise length {e.shape}")
    return T.Tensor(s * y + math.sqrt(max(1.0 - s * s, 0.0)) * e)


def sample_noise_level(schedule, rng):
    """t ~ U{1..T}, then sqrt(ᾱ) ~ U(sqrt(ᾱ_t), sqrt(ᾱ_{t-1}))."""
    t = rng.integers(1, schedule.T + 1)
    lo = schedule.sqrt_alpha_bar(t)
    hi = schedule.sqrt_alpha_bar(t - 1)
    return NoiseLevel(rng.uniform(lo, hi))


def reverse_step(y_t, eps_hat, t, schedule, z=None):
    """y_{t-1} = (y_t - (1-α_t)/sqrt(1-ᾱ_t)·eps_hat) / sqrt(α_t) + σ_t·z."""
    if not 1 <= t <= schedule.T:
        raise IndexError(f"t={t} outside 1..{schedule.T}")
    y = _samples(y_t)
    e = _samples(eps_hat)
    if y.shape != e.shape:
        raise ValueError("reverse_step: y_t and eps_hat lengths differ")
    alpha = schedule.alphas[t - 1]
    coef = (1.0 - alpha) / math.sqrt(1.0 - schedule.alpha_bars[t])
    out = (y - coef * e) / math.sqrt(alpha)
    if z is not None:
        zz = _samples(z)
        if zz.shape != y.shape:
            raise ValueError("reverse_step: z length differs")
        if t == 1:
            if np.any(zz != 0):
                raise ValueError("z must be zero at t = 1")
        else:
            out = out + schedule.sigmas[t - 1] * zz
    return out


def sample(model, y_d, schedule, r, rng):
    """Run the reverse process from y_T ~ N(0, I) down to y_0."""
    if len(y_d.samples) == 0:
        raise ValueError("empty conditioning signal")
    if r != model.config.upscale_ratio:
        raise ValueError(f"model was built for r={model.config.upscale_ratio}, got r={r}")
    schedule.validate()
    n = r * len(y_d.samples)
    y = rng.normal(n)
    with T.no_grad():
        for t in range(schedule.T, 0, -1):
            eps_hat = model.forward(y, y_d, schedule.sqrt_alpha_bar(t)).data
            z = rng.normal(n) if t > 1 else None
            y = reverse_step(y, eps_hat, t, schedule, z)
    return AudioSignal(y, y_d.sample_rate * r)


def loss(eps, eps_hat):
    """log(max(mean|eps - eps_hat|, 1e-9)) as a differentiable scalar."""
    eps = T.tensor(_samples(eps)) if not isinstance(eps, T.Tensor) else eps
    if eps.shape != eps_hat.shape:
        raise ValueError(f"loss: shapes {eps.shape} and {eps_hat.shape} differ")
    return T.log(T.mean(T.abs(eps - eps_hat)), floor=LOSS_FLOOR)


def step_objective(model, y0, r, schedule, rng):
    """Lines 3-7 of the training loop up to the loss (no parameter update).

    Random draws happen in a fixed order: t, the continuous level, then eps.
    """
    y_d = downsample(y0, r)
    level = sample_noise_level(schedule, rng)
    eps = rng.normal(len(y0.samples))
    y_noisy = diffuse(y0, level, eps)
    eps_hat = model.forward(y_noisy, y_d, level)
    return loss(eps, eps_hat)


def train_step(model, y0, r, schedule, opt_state, rng):
    """One Adam step on the log-L1 objective; returns the loss value."""
    objective = step_objective(model, y0, r, schedule, rng)
    params = model.parameters()
    grads = T.grad(objective, params)
    T.adam_step(params, grads, opt_state)
    return objective.item()
