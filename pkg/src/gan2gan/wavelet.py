"""Smooth noisy patch extraction.

Single-level orthonormal Haar DWT, two smoothness rules (sub-band variance
balance and the sub-patch mean/variance homogeneity rule), and sliding-window
extraction of mean-subtracted pure-noise patches.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DataError

log = logging.getLogger(__name__)


@dataclass
class ImagePatch:
    pixels: np.ndarray  # (H, W, C) floats in [0, 1]
    source_id: str = ""
    offset: tuple[int, int] = (0, 0)


@dataclass
class WaveletSubbands:
    ll: np.ndarray
    lh: np.ndarray  # horizontal detail
    hl: np.ndarray  # vertical detail
    hh: np.ndarray  # diagonal detail


@dataclass
class NoisePatch:
    values: np.ndarray  # (H, W, C), zero mean per channel
    source_id: str = ""
    offset: tuple[int, int] = (0, 0)


@dataclass
class DwtRule:
    lam: float = 0.03

    def __post_init__(self):
        if not 0.0 < self.lam < 1.0:
            raise ConfigurationError("lambda must lie in (0, 1)")


@dataclass
class GcbdRule:
    mu: float = 0.1
    gamma: float = 0.1
    subpatch_size: int = 32

    def __post_init__(self):
        if not (0.0 < self.mu < 1.0 and 0.0 < self.gamma < 1.0):
            raise ConfigurationError("mu and gamma must lie in (0, 1)")


@dataclass
class ExtractionConfig:
    patch_size: int = 96
    stride: int | None = None  # defaults to patch_size // 2
    rule: DwtRule | GcbdRule = field(default_factory=DwtRule)
    max_patches: int | None = None

    def __post_init__(self):
        if self.patch_size % 2:
            raise ConfigurationError("patch_size must be even for the DWT")
        if isinstance(self.rule, GcbdRule) and self.rule.subpatch_size >= self.patch_size:
            raise ConfigurationError("subpatch_size must be smaller than patch_size")

    @property
    def effective_stride(self) -> int:
        return self.stride if self.stride is not None else self.patch_size // 2


def _as_hwc(pixels) -> np.ndarray:
    a = np.asarray(pixels, dtype=np.float64)
    if a.ndim == 2:
        a = a[:, :, None]
    if a.ndim != 3:
        raise DataError(f"expected (H, W[, C]) pixels, got shape {a.shape}")
    return a


def dwt2(pixels) -> WaveletSubbands:
    """Single-level orthonormal Haar decomposition of an even-sized patch."""
    x = _as_hwc(pixels)
    h, w, _ = x.shape
    if h % 2 or w % 2:
        raise DataError(f"DWT requires even dimensions, got {h}x{w}")
    a = x[0::2, 0::2]
    b = x[0::2, 1::2]
    c = x[1::2, 0::2]
    d = x[1::2, 1::2]
    ll = (a + b + c + d) / 2.0
    lh = (a - b + c - d) / 2.0
    hl = (a + b - c - d) / 2.0
    hh = (a - b - c + d) / 2.0
    return WaveletSubbands(ll, lh, hl, hh)


def idwt2(s: WaveletSubbands) -> np.ndarray:
    ll, lh, hl, hh = s.ll, s.lh, s.hl, s.hh
    if not (ll.shape == lh.shape == hl.shape == hh.shape):
        raise DataError("sub-band shapes are inconsistent")
    h2, w2, c = ll.shape
    x = np.empty((2 * h2, 2 * w2, c))
    x[0::2, 0::2] = (ll + lh + hl + hh) / 2.0
    x[0::2, 1::2] = (ll - lh + hl - hh) / 2.0
    x[1::2, 0::2] = (ll + lh - hl - hh) / 2.0
    x[1::2, 1::2] = (ll - lh - hl + hh) / 2.0
    return x


def is_smooth_dwt(pixels, lam: float) -> tuple[bool, float]:
    """Sub-band energy balance test.

    The patch is centered per channel (its mean subtracted) and decomposed;
    each sub-band contributes its mean squared coefficient.  A patch is
    smooth when, per channel, the mean absolute deviation of the four
    sub-band energies from their average stays below ``lam`` times that
    average.  Energies are used rather than coefficient variances so that
    regular structure aligned with the transform grid (e.g. a period-2
    checkerboard, whose diagonal coefficients are constant but large) is
    still detected.  For white noise the two statistics coincide, since
    detail coefficients of a centered noise patch are zero-mean.

    Returns the decision and the worst per-channel ratio as score.  An
    all-constant patch (zero sub-band energy) counts as smooth, score 0.
    Multi-channel patches must satisfy the rule on every channel.
    """
    if not 0.0 < lam < 1.0:
        raise ConfigurationError("lambda must lie in (0, 1)")
    x = _as_hwc(pixels)
    s = dwt2(x - x.mean(axis=(0, 1), keepdims=True))
    score = 0.0
    smooth = True
    nch = s.ll.shape[2]
    for ch in range(nch):
        energies = np.array([np.mean(band[:, :, ch] ** 2)
                             for band in (s.ll, s.lh, s.hl, s.hh)])
        avg = energies.mean()
        if avg == 0.0:
            continue
        ratio = np.abs(energies - avg).mean() / avg
        score = max(score, ratio)
        smooth = smooth and ratio <= lam
    return smooth, score


def is_smooth_gcbd(pixels, mu: float, gamma: float, subpatch_size: int) -> bool:
    """Sub-patch mean/variance homogeneity test over a non-overlapping tiling."""
    x = _as_hwc(pixels)
    h, w, nch = x.shape
    if h % subpatch_size or w % subpatch_size:
        raise DataError(
            f"subpatch_size {subpatch_size} does not tile a {h}x{w} patch"
        )
    for ch in range(nch):
        plane = x[:, :, ch]
        p_mean = plane.mean()
        p_var = plane.var()
        for i in range(0, h, subpatch_size):
            for j in range(0, w, subpatch_size):
                q = plane[i : i + subpatch_size, j : j + subpatch_size]
                # tiny absolute slack keeps degenerate constant patches,
                # whose float variance is O(1e-17) rather than exactly 0,
                # from failing the relative test
                if abs(q.mean() - p_mean) > mu * p_mean + 1e-12:
                    return False
                if abs(q.var() - p_var) > gamma * p_var + 1e-12:
                    return False
    return True


def _passes(rule, pixels) -> bool:
    if isinstance(rule, DwtRule):
        return is_smooth_dwt(pixels, rule.lam)[0]
    return is_smooth_gcbd(pixels, rule.mu, rule.gamma, rule.subpatch_size)


def extract_noise_patches(images, cfg: ExtractionConfig) -> list[NoisePatch]:
    """Slide a window over each image, keep patches passing the smoothness
    rule, and subtract the per-channel mean to obtain pure-noise patches.

    ``images`` is an iterable of ImagePatch (or (pixels, source_id) pairs).
    Order is deterministic: row-major per image, images in input order.
    """
    ps = cfg.patch_size
    stride = cfg.effective_stride
    out: list[NoisePatch] = []
    for idx, item in enumerate(images):
        if isinstance(item, ImagePatch):
            pixels, source_id = item.pixels, item.source_id
        elif isinstance(item, tuple):
            pixels, source_id = item
        else:
            pixels, source_id = item, f"image{idx}"
        pixels = _as_hwc(pixels)
        h, w, _ = pixels.shape
        for i in range(0, h - ps + 1, stride):
            for j in range(0, w - ps + 1, stride):
                if cfg.max_patches is not None and len(out) >= cfg.max_patches:
                    return out
                patch = pixels[i : i + ps, j : j + ps]
                if _passes(cfg.rule, patch):
                    values = patch - patch.mean(axis=(0, 1), keepdims=True)
                    out.append(NoisePatch(values, source_id, (i, j)))
    if not out:
        log.warning("extract_noise_patches: no smooth patches found")
    return out
