"""Conditional diffusion model for audio super-resolution, on a small numpy autodiff core."""
from .diffusion import (NoiseLevel, NoiseSchedule, diffuse, linear_schedule, loss,
                        manual_schedule, reverse_step, sample, sample_noise_level,
                        schedule_preset, train_step)
from .dsp import AudioSignal
from .model import ModelConfig, NuWaveNetwork, desk_config, paper_config
from .tensor import AdamState, Rng, Tensor

__version__ = "0.1.0"
