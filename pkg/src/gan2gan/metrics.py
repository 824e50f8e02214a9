"""Image quality metrics (PSNR, SSIM) and noise-field statistics."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import correlate1d

from .errors import DataError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2

# ITU-R BT.601 luma weights for color -> grayscale conversion
_LUMA = np.array([0.299, 0.587, 0.114])


def psnr(x_hat: np.ndarray, x: np.ndarray) -> float:
    """PSNR in dB on the [0, 1] range (inputs clipped first); inf if equal."""
    x_hat = np.asarray(x_hat, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if x_hat.shape != x.shape:
        raise DataError(f"shape mismatch: {x_hat.shape} vs {x.shape}")
    mse = float(np.mean((np.clip(x_hat, 0, 1) - np.clip(x, 0, 1)) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def _to_gray(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3:
        if img.shape[2] == 1:
            return img[:, :, 0]
        if img.shape[2] == 3:
            return img @ _LUMA
        raise DataError(f"unsupported channel count {img.shape[2]}")
    if img.ndim == 2:
        return img
    raise DataError(f"expected 2D or 3D image, got shape {img.shape}")


def _gaussian_kernel():
    radius = SSIM_WINDOW // 2
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / SSIM_SIGMA) ** 2)
    return k / k.sum()


def _filter(img, kernel):
    out = correlate1d(img, kernel, axis=0, mode="nearest")
    return correlate1d(out, kernel, axis=1, mode="nearest")


def ssim(x_hat: np.ndarray, x: np.ndarray) -> float:
    """Structural similarity with the standard constants: 11x11 Gaussian
    window (sigma 1.5), C1=0.01^2, C2=0.03^2 on the [0, 1] range, averaged
    over valid window positions.  Color images are converted to luma first."""
    a = _to_gray(x_hat)
    b = _to_gray(x)
    if a.shape != b.shape:
        raise DataError(f"shape mismatch: {a.shape} vs {b.shape}")
    if min(a.shape) < SSIM_WINDOW:
        raise DataError(
            f"image {a.shape} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"
        )
    a = np.clip(a, 0, 1)
    b = np.clip(b, 0, 1)
    kernel = _gaussian_kernel()
    mu_a = _filter(a, kernel)
    mu_b = _filter(b, kernel)
    var_a = _filter(a * a, kernel) - mu_a ** 2
    var_b = _filter(b * b, kernel) - mu_b ** 2
    cov = _filter(a * b, kernel) - mu_a * mu_b
    s = ((2 * mu_a * mu_b + SSIM_C1) * (2 * cov + SSIM_C2)) / (
        (mu_a ** 2 + mu_b ** 2 + SSIM_C1) * (var_a + var_b + SSIM_C2)
    )
    pad = SSIM_WINDOW // 2
    return float(s[pad:-pad, pad:-pad].mean())


@dataclass
class NoiseStats:
    mean: float
    std: float
    lag1_corr_h: float
    lag1_corr_v: float
    degenerate: bool = False  # constant input: correlations reported as 0


def noise_stats(samples: np.ndarray) -> NoiseStats:
    """Unbiased mean/std plus lag-1 spatial correlations of a noise field.

    Accepts a 2D field (or 3D with channels, correlations computed within
    each plane and averaged).  A 1D array yields the horizontal lag only.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.size < 2:
        raise DataError("need at least 2 samples")
    mean = float(x.mean())
    std = float(x.std(ddof=1))
    if std == 0.0:
        return NoiseStats(mean, 0.0, 0.0, 0.0, degenerate=True)
    if x.ndim == 1:
        return NoiseStats(mean, std, _corr(x[:-1], x[1:]), 0.0)
    planes = [x] if x.ndim == 2 else [x[:, :, c] for c in range(x.shape[2])]
    ch = [_corr(p[:, :-1].ravel(), p[:, 1:].ravel()) for p in planes]
    cv = [_corr(p[:-1, :].ravel(), p[1:, :].ravel()) for p in planes]
    return NoiseStats(mean, std, float(np.mean(ch)), float(np.mean(cv)))


def _corr(a, b) -> float:
    a = a - a.mean()
    b = b - b.mean()
    denom = math.sqrt(float(a @ a) * float(b @ b))
    if denom == 0.0:
        return 0.0
    return float(a @ b) / denom


@dataclass
class EvalReport:
    per_image: list[tuple[str, float, float]]  # (image_id, psnr_db, ssim)
    config_fingerprint: str = ""
    aggregate: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.aggregate and self.per_image:
            psnrs = [p for _, p, _ in self.per_image]
            ssims = [s for _, _, s in self.per_image]
            self.aggregate = {
                "mean_psnr_db": float(np.mean(psnrs)),
                "mean_ssim": float(np.mean(ssims)),
            }

    def to_json(self) -> str:
        def enc(v):
            return "inf" if v == math.inf else v

        payload = {
            "per_image": [
                {"image_id": i, "psnr_db": enc(p), "ssim": s}
                for i, p, s in self.per_image
            ],
            "aggregate": {k: enc(v) for k, v in self.aggregate.items()},
            "config_fingerprint": self.config_fingerprint,
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    def to_table(self) -> str:
        lines = [f"{'image':<24} {'psnr_db':>10} {'ssim':>8}"]
        for i, p, s in self.per_image:
            ptxt = "inf" if p == math.inf else f"{p:.4f}"
            lines.append(f"{i:<24} {ptxt:>10} {s:>8.4f}")
        agg = self.aggregate
        mp = agg.get("mean_psnr_db", math.nan)
        mtxt = "inf" if mp == math.inf else f"{mp:.4f}"
        lines.append(f"{'mean':<24} {mtxt:>10} {agg.get('mean_ssim', math.nan):>8.4f}")
        return "\n".join(lines)


def config_fingerprint(config: dict) -> str:
    """Stable hash of a canonicalized (path-free) run configuration."""
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]
