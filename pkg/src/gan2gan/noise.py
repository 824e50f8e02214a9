"""Synthetic corruption processes.

All noise magnitudes are stored on the 0-255 scale and divided by 255 at
sampling time, since images live in [0, 1].  Sampling is deterministic given
the seed: the stream is a Philox 64-bit counter-based generator and Gaussians
are drawn from it via Box-Muller, so a stream can be reproduced from the
(seed, draw-index) pair alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, UsageError

ETA_DEFAULT = 1.0 / math.sqrt(2.0)


@dataclass
class GaussianNoise:
    sigma_255: float
    seed: int = 0

    def __post_init__(self):
        if self.sigma_255 <= 0:
            raise ConfigurationError("sigma must be positive")


@dataclass
class MixtureANoise:
    """70% N(0, 0.01), 20% N(0, 1) (variances, 0-255 scale), 10% U[-s, s]."""

    s_255: float
    seed: int = 0

    def __post_init__(self):
        if self.s_255 <= 0:
            raise ConfigurationError("s must be positive")


@dataclass
class MixtureBNoise:
    """70% N(0, 15^2), 20% N(0, 25^2) (std devs, 0-255 scale), 10% U[-s, s]."""

    s_255: float
    seed: int = 0

    def __post_init__(self):
        if self.s_255 <= 0:
            raise ConfigurationError("s must be positive")


@dataclass
class CorrelatedNoise:
    """Spatially correlated Gaussian noise.

    Each pixel mixes an i.i.d. Gaussian field M with the normalized sum of M
    over its k x k neighborhood (pixel itself excluded):

        N = eta * M + sqrt(1 - eta^2) * S / sqrt(|NB|)

    The sqrt(1 - eta^2) weight keeps the marginal exactly N(0, sigma^2) for
    any eta; eta = 1/sqrt(2) is the reference setting.  k is even, so the
    window spans offsets [-k/2, k/2 - 1] along each axis; at image borders the
    window is cropped and |NB| is the actual neighbor count.
    """

    sigma_255: float
    k: int = 16
    eta: float = ETA_DEFAULT
    seed: int = 0

    def __post_init__(self):
        if self.sigma_255 <= 0:
            raise ConfigurationError("sigma must be positive")
        if self.k < 2 or self.k % 2:
            raise ConfigurationError("k must be even and >= 2")
        if not 0.0 <= self.eta <= 1.0:
            raise ConfigurationError("eta must lie in [0, 1]")


NoiseModel = GaussianNoise | MixtureANoise | MixtureBNoise | CorrelatedNoise


def _rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.uint64(seed)))


def _box_muller(rng, shape) -> np.ndarray:
    n = int(np.prod(shape))
    half = (n + 1) // 2
    u1 = rng.random(half)
    u2 = rng.random(half)
    r = np.sqrt(-2.0 * np.log1p(-u1))
    z = np.concatenate([r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)])
    return z[:n].reshape(shape)


def _windowed_sum(field: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Sum over the [-k/2, k/2-1] x [-k/2, k/2-1] window (center included)
    for every pixel, plus the per-pixel in-bounds cell count."""
    h, w = field.shape
    lo = k // 2
    hi = k // 2 - 1
    cs = np.zeros((h + 1, w + 1))
    cs[1:, 1:] = field.cumsum(axis=0).cumsum(axis=1)
    rows = np.arange(h)
    cols = np.arange(w)
    r0 = np.clip(rows - lo, 0, h)
    r1 = np.clip(rows + hi + 1, 0, h)
    c0 = np.clip(cols - lo, 0, w)
    c1 = np.clip(cols + hi + 1, 0, w)
    s = (cs[r1[:, None], c1[None, :]] - cs[r0[:, None], c1[None, :]]
         - cs[r1[:, None], c0[None, :]] + cs[r0[:, None], c0[None, :]])
    counts = (r1 - r0)[:, None] * (c1 - c0)[None, :]
    return s, counts.astype(np.float64)


def _sample_plane(model: NoiseModel, shape: tuple[int, int], rng) -> np.ndarray:
    if isinstance(model, GaussianNoise):
        return model.sigma_255 / 255.0 * _box_muller(rng, shape)
    if isinstance(model, MixtureANoise) or isinstance(model, MixtureBNoise):
        sel = rng.random(shape)
        z = _box_muller(rng, shape)
        u = rng.random(shape)
        if isinstance(model, MixtureANoise):
            sig_lo, sig_hi = math.sqrt(0.01), math.sqrt(1.0)
        else:
            sig_lo, sig_hi = 15.0, 25.0
        uniform = model.s_255 * (2.0 * u - 1.0)
        out = np.where(sel < 0.7, sig_lo * z,
                       np.where(sel < 0.9, sig_hi * z, uniform))
        return out / 255.0
    if isinstance(model, CorrelatedNoise):
        m = model.sigma_255 / 255.0 * _box_muller(rng, shape)
        total, counts = _windowed_sum(m, model.k)
        nb = np.maximum(counts - 1.0, 1.0)  # empty neighborhoods contribute 0
        neigh = (total - m) / np.sqrt(nb)
        return model.eta * m + math.sqrt(1.0 - model.eta ** 2) * neigh
    raise UsageError(f"unknown noise model {type(model).__name__}")


def sample(model: NoiseModel, shape, seed: int | None = None) -> np.ndarray:
    """Draw a zero-mean noise field of the given shape, (H, W) or (H, W, C).

    Channels are independent.  Deterministic given (model, shape, seed);
    seed defaults to model.seed.
    """
    rng = _rng(model.seed if seed is None else seed)
    shape = tuple(int(d) for d in shape)
    if len(shape) == 2:
        return _sample_plane(model, shape, rng)
    if len(shape) == 3:
        h, w, c = shape
        return np.stack([_sample_plane(model, (h, w), rng) for _ in range(c)], axis=2)
    raise UsageError(f"unsupported noise field shape {shape}")


def corrupt(clean: np.ndarray, model: NoiseModel, seed: int | None = None) -> np.ndarray:
    """Additive corruption: clean + noise, not clipped (noise stays zero-mean).

    Uses only the shape of ``clean`` and the seed, never its pixel values.
    """
    clean = np.asarray(clean, dtype=np.float64)
    return clean + sample(model, clean.shape, seed)


def default_lambda(model: NoiseModel) -> float:
    """Extraction-rule lambda defaults per noise type."""
    if isinstance(model, GaussianNoise):
        return 0.03
    if isinstance(model, (MixtureANoise, MixtureBNoise)):
        return 0.1
    return 0.15


def parse_noise_spec(spec: str) -> NoiseModel:
    """Parse the CLI noise grammar.

    "gauss:SIGMA" | "mixA:S" | "mixB:S" | "corr:SIGMA[:k=K][:eta=E]"
    with magnitudes on the 0-255 scale.
    """
    parts = spec.strip().split(":")
    kind = parts[0]
    try:
        if kind == "gauss" and len(parts) == 2:
            return GaussianNoise(float(parts[1]))
        if kind == "mixA" and len(parts) == 2:
            return MixtureANoise(float(parts[1]))
        if kind == "mixB" and len(parts) == 2:
            return MixtureBNoise(float(parts[1]))
        if kind == "corr" and len(parts) >= 2:
            kwargs = {}
            for extra in parts[2:]:
                key, _, value = extra.partition("=")
                if key == "k":
                    kwargs["k"] = int(value)
                elif key == "eta":
                    kwargs["eta"] = float(value)
                else:
                    raise ValueError(key)
            return CorrelatedNoise(float(parts[1]), **kwargs)
    except (ValueError, ConfigurationError) as exc:
        raise UsageError(
            f"bad noise spec {spec!r}: {exc}; grammar is gauss:SIGMA | mixA:S "
            f"| mixB:S | corr:SIGMA[:k=K][:eta=E]"
        ) from exc
    raise UsageError(
        f"unknown noise spec {spec!r}; grammar is gauss:SIGMA | mixA:S | "
        f"mixB:S | corr:SIGMA[:k=K][:eta=E]"
    )


def noise_tag(model: NoiseModel) -> str:
    if isinstance(model, GaussianNoise):
        return f"gauss:{model.sigma_255:g}"
    if isinstance(model, MixtureANoise):
        return f"mixA:{model.s_255:g}"
    if isinstance(model, MixtureBNoise):
        return f"mixB:{model.s_255:g}"
    return f"corr:{model.sigma_255:g}:k={model.k}"
