"""Noise2Noise-style denoiser training on synthesized pairs, plus the
iterative refinement loop that regenerates pairs with the latest denoiser."""

from __future__ import annotations

import copy
import csv
from dataclasses import dataclass

import numpy as np

from .architectures import dncnn_spec
from .checkpoint import load_tensors, save_tensors
from .errors import DataError, NumericalError
from .nn import Network
from .optim import Adam, HalveEvery
from .wgan import WganBundle, WganConfig, _draw_batch, generate_pair


@dataclass
class G2GConfig:
    epochs: int = 100
    batch: int = 4
    lr: float = 0.001
    lr_halve_every: int = 20
    patch_size: int = 120
    iterations: int = 1  # refinement rounds
    fresh_pairs_per_minibatch: bool = True
    depth: int = 17
    width: int = 64
    image_channels: int = 1
    steps_per_epoch: int | None = None

    @classmethod
    def paper(cls, image_channels: int = 1) -> "G2GConfig":
        return cls(image_channels=image_channels)

    @classmethod
    def desk(cls, image_channels: int = 1) -> "G2GConfig":
        return cls(
            epochs=20,
            batch=8,
            patch_size=16,
            depth=7,
            width=16,
            image_channels=image_channels,
            steps_per_epoch=60,
            lr=0.002,
            lr_halve_every=8,
        )


class DenoiserModel:
    """DnCNN-style denoiser: the chain predicts the noise field and the
    output is input minus prediction."""

    def __init__(self, cfg: G2GConfig, seed: int = 0, network: Network | None = None,
                 trained_noise_tag: str = ""):
        self.cfg = cfg
        if network is None:
            rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
            network = Network(dncnn_spec(cfg.image_channels, cfg.depth, cfg.width),
                              rng)
        self.network = network
        self.trained_noise_tag = trained_noise_tag

    def copy(self) -> "DenoiserModel":
        return copy.deepcopy(self)

    def forward_batch(self, batch: np.ndarray, train: bool = False) -> np.ndarray:
        return self.network.forward(batch, train=train)

    def save(self, path):
        tensors = {f"denoiser/{name}": arr
                   for name, arr in self.network.params.state_tensors().items()}
        save_tensors(path, tensors)

    def load(self, path):
        tensors = load_tensors(path)
        sub = {name[len("denoiser/") :]: arr for name, arr in tensors.items()
               if name.startswith("denoiser/")}
        self.network.params.load_state(sub)


def denoise(model: DenoiserModel, image: np.ndarray) -> np.ndarray:
    """Denoise a single (H, W[, C]) image of any size (fully convolutional).
    The output is not clipped; clip to [0, 1] only when saving for display."""
    img = np.asarray(image, dtype=np.float64)
    squeeze_c = img.ndim == 2
    if squeeze_c:
        img = img[:, :, None]
    batch = img.transpose(2, 0, 1)[None]
    out = model.forward_batch(batch, train=False)[0].transpose(1, 2, 0)
    return out[:, :, 0] if squeeze_c else out


def n2n_loss(model: DenoiserModel, pair_batch, train: bool = False) -> float:
    """Mean squared error between the target realization and the prediction
    on the other realization; gradients flow only through the prediction."""
    z1, z2 = pair_batch
    z1 = np.asarray(z1, dtype=np.float64)
    z2 = np.asarray(z2, dtype=np.float64)
    if z1.shape != z2.shape:
        raise DataError(f"pair shape mismatch: {z1.shape} vs {z2.shape}")
    pred = model.forward_batch(z2, train=train)
    return float(np.mean((z1 - pred) ** 2))


def _images_to_pool(noisy_images, channels: int) -> np.ndarray:
    """Stack (H, W[, C]) images into an (N, C, H, W) pool (all same size)."""
    arrs = []
    for img in noisy_images:
        a = np.asarray(img, dtype=np.float64)
        if a.ndim == 2:
            a = a[:, :, None]
        if a.shape[2] != channels:
            raise DataError(f"expected {channels} channels, got {a.shape[2]}")
        arrs.append(a.transpose(2, 0, 1))
    if not arrs:
        raise DataError("no training images")
    return np.stack(arrs)


def _train_loop(model: DenoiserModel, pool: np.ndarray, base_fn,
                bundle: WganBundle, cfg: G2GConfig, seed: int, trace_rows):
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    opt = Adam(model.network.params, cfg.lr, schedule=HalveEvery(cfg.lr_halve_every))
    steps_per_epoch = cfg.steps_per_epoch
    if steps_per_epoch is None:
        steps_per_epoch = max(1, pool.shape[0] // cfg.batch)

    fixed_pairs = None
    for epoch in range(cfg.epochs):
        opt.set_epoch(epoch)
        for step in range(steps_per_epoch):
            if cfg.fresh_pairs_per_minibatch or fixed_pairs is None:
                crops = _draw_batch(pool, cfg.batch, cfg.patch_size, rng)
                z1, z2 = generate_pair(crops, base_fn, bundle.g1, bundle.config, rng)
                if not cfg.fresh_pairs_per_minibatch:
                    fixed_pairs = (z1, z2)
            else:
                z1, z2 = fixed_pairs
            pred = model.forward_batch(z2, train=True)
            resid = pred - z1
            loss = float(np.mean(resid ** 2))
            if not np.isfinite(loss):
                raise NumericalError(
                    f"non-finite Noise2Noise loss at epoch {epoch}, step {step}"
                )
            model.network.backward(2.0 * resid / resid.size)
            opt.step()
            trace_rows.append((epoch, step, loss, opt.lr))
    return model


def train_g2g(noisy_images, bundle: WganBundle, cfg: G2GConfig, seed: int,
              init: DenoiserModel | None = None, trace_path=None) -> DenoiserModel:
    """Train a denoiser on pairs synthesized from the frozen W-GAN bundle:
    base estimate from g2, plus independent g1 noise draws.  Only generated
    pairs are used, never the observed noisy images themselves."""
    pool = _images_to_pool(noisy_images, cfg.image_channels)
    model = init if init is not None else DenoiserModel(cfg, seed=seed + 1)

    def base_fn(batch):
        return bundle.g2.forward(batch, train=False)

    trace_rows = []
    _train_loop(model, pool, base_fn, bundle, cfg, seed, trace_rows)
    _write_trace(trace_path, trace_rows)
    return model


def iterate_g2g(noisy_images, bundle: WganBundle, model: DenoiserModel,
                cfg: G2GConfig, seed: int, trace_path=None) -> DenoiserModel:
    """Refinement: regenerate pairs with the current denoiser as the base
    estimator and fine-tune, warm-starting from the current weights.  The
    base network is frozen at the start of each round; iterations=0 returns
    the model unchanged."""
    if cfg.iterations == 0:
        return model
    pool = _images_to_pool(noisy_images, cfg.image_channels)
    trace_rows = []
    for round_idx in range(cfg.iterations):
        frozen = model.copy()

        def base_fn(batch, _frozen=frozen):
            return _frozen.forward_batch(batch, train=False)

        _train_loop(model, pool, base_fn, bundle, cfg,
                    seed + 1000 * (round_idx + 1), trace_rows)
    _write_trace(trace_path, trace_rows)
    return model


def _write_trace(trace_path, rows):
    if trace_path is None:
        return
    with open(trace_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "step", "n2n_loss", "lr"])
        writer.writerows(rows)
