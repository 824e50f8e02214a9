"""Builtin analytic toy images.

Piecewise-smooth grayscale scenes (linear gradients, disks, low-frequency
sinusoid mixtures, piecewise-constant mosaics) so the pipeline runs with no
external datasets, plus high-frequency textures (checkerboards, gratings)
used as a negative corpus for the extraction rules.
"""

from __future__ import annotations

import numpy as np


def _rng(seed):
    return np.random.Generator(np.random.Philox(key=np.uint64(seed)))


def _gradient(size, rng):
    yy, xx = np.mgrid[0:size, 0:size] / max(size - 1, 1)
    theta = rng.uniform(0, 2 * np.pi)
    ramp = np.cos(theta) * xx + np.sin(theta) * yy
    lo, hi = sorted(rng.uniform(0.15, 0.85, size=2))
    if hi - lo < 0.1:
        hi = min(lo + 0.1, 0.9)
    ramp = (ramp - ramp.min()) / max(float(np.ptp(ramp)), 1e-12)
    return lo + (hi - lo) * ramp


def _disks(size, rng):
    img = np.full((size, size), rng.uniform(0.3, 0.7))
    yy, xx = np.mgrid[0:size, 0:size]
    for _ in range(int(rng.integers(2, 5))):
        cy, cx = rng.uniform(0, size, size=2)
        r = rng.uniform(size * 0.1, size * 0.35)
        val = rng.uniform(0.1, 0.9)
        img[(yy - cy) ** 2 + (xx - cx) ** 2 <= r * r] = val
    return img


def _sinusoids(size, rng):
    yy, xx = np.mgrid[0:size, 0:size] / size
    img = np.zeros((size, size))
    for _ in range(3):
        fx, fy = rng.uniform(0.5, 2.0, size=2)  # low frequency: smooth content
        phase = rng.uniform(0, 2 * np.pi)
        img += rng.uniform(0.05, 0.15) * np.sin(2 * np.pi * (fx * xx + fy * yy) + phase)
    return 0.5 + img


def _mosaic(size, rng):
    img = np.full((size, size), rng.uniform(0.2, 0.8))
    for _ in range(int(rng.integers(3, 7))):
        y0, x0 = rng.integers(0, size, size=2)
        h = int(rng.integers(size // 4, size))
        w = int(rng.integers(size // 4, size))
        img[y0 : y0 + h, x0 : x0 + w] = rng.uniform(0.1, 0.9)
    return img


_KINDS = (_gradient, _disks, _sinusoids, _mosaic)


def make_toy_images(count: int, size: int = 64, seed: int = 0) -> list[np.ndarray]:
    """Deterministic piecewise-smooth grayscale images (H, W) in [0, 1]."""
    rng = _rng(seed)
    return [np.clip(_KINDS[i % len(_KINDS)](size, rng), 0.0, 1.0)
            for i in range(count)]


def make_textured_images(count: int, size: int = 64, seed: int = 0) -> list[np.ndarray]:
    """High-frequency repeating patterns: checkerboards and gratings."""
    rng = _rng(seed)
    out = []
    yy, xx = np.mgrid[0:size, 0:size]
    for i in range(count):
        if i % 2 == 0:
            period = int(rng.integers(1, 3))
            img = 0.5 + 0.4 * (((yy // period) + (xx // period)) % 2 * 2.0 - 1.0)
        else:
            period = int(rng.integers(1, 3))
            img = 0.5 + 0.4 * ((xx // period) % 2 * 2.0 - 1.0)
        out.append(np.clip(img, 0.0, 1.0))
    return out
