"""Sketch + text + mask local image editing with a small latent diffusion model.

A self-contained editing stack: a space-to-depth latent codec, a DDPM
noise schedule, a controlled U-Net denoiser with a zero-convolution
condition branch, self-supervised mask-augmented training with a pixel
reconstruction term, blended-latent sampling with exact keep-region
preservation, evaluation metrics, and a CLI plus HTTP service.
"""

import torch as _torch

# Bit-reproducibility across hosts beats marginal threading gains at this scale.
_torch.set_num_threads(1)

from .checkpoint import Checkpoint, load, save
from .conditioning import Vocabulary, extract_sketch
from .diffusion import NoiseSchedule, make_schedule
from .masks import MaskConfig, bezier_mask
from .model import ModelConfig
from .sampling import EditRequest, Pipeline, blended_sample
from .training import TrainConfig, fit

__version__ = "0.1.0"

__all__ = [
    "Checkpoint",
    "EditRequest",
    "MaskConfig",
    "ModelConfig",
    "NoiseSchedule",
    "Pipeline",
    "TrainConfig",
    "Vocabulary",
    "bezier_mask",
    "blended_sample",
    "extract_sketch",
    "fit",
    "load",
    "make_schedule",
    "save",
    "__version__",
]
