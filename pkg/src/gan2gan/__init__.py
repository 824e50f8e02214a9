"""Blind image denoising via generated noisy-image pairs.

Pipeline: extract pure-noise patches from single noisy images, train a
W-GAN that synthesizes independent noisy realizations of the same scene,
train a denoiser on those synthetic pairs with a Noise2Noise loss, and
optionally refine by regenerating pairs with the trained denoiser.
"""

from .errors import (
    ConfigurationError,
    DataError,
    Gan2GanError,
    NumericalError,
    UsageError,
)

__all__ = [
    "ConfigurationError",
    "DataError",
    "Gan2GanError",
    "NumericalError",
    "UsageError",
]

__version__ = "0.1.0"
