"""Three-generator / two-critic Wasserstein GAN.

g1 turns latent vectors into noise patches, g2 estimates the clean image
behind a noisy patch (sigmoid output), g3 re-noises g2's estimate (cycle
regularizer).  Critic c1 scores noise patches, c2 scores noisy images.
Critics maximize the weighted sum of the two Wasserstein gaps with weights
(1, 1, 0); generators minimize the (5, 1, 10)-weighted sum that also
includes the L1 cycle term.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .architectures import critic_spec, dncnn_spec, noise_generator_spec
from .checkpoint import load_tensors, save_tensors
from .errors import DataError, NumericalError
from .nn import Network, ParamStore
from .optim import Adam, LinearDecay, RMSProp, clip_weights


@dataclass
class WganConfig:
    # min-max weights (alpha, beta, gamma_cyc)
    gen_weights: tuple[float, float, float] = (5.0, 1.0, 10.0)
    critic_weights: tuple[float, float, float] = (1.0, 1.0, 0.0)
    clip: float = 0.02
    critic_iters: int = 5
    critic_warmup_steps: int = 0  # critic-only updates before training
    epochs: int = 30
    batch: int = 64
    latent_dim: int = 128
    gen_lr: float = 0.0004
    critic_lr: float = 0.00005
    lr_decay_start: int = 10  # generator lr decays linearly to zero from here
    train_size: int = 64  # patches are cropped to this size with flips
    image_channels: int = 1
    gen_base_width: int = 64
    critic_base_width: int = 128
    g2_depth: int = 17
    g3_depth: int = 15
    dncnn_width: int = 64
    steps_per_epoch: int | None = None  # defaults to len(data) // batch

    @classmethod
    def paper(cls, image_channels: int = 1) -> "WganConfig":
        return cls(image_channels=image_channels)

    @classmethod
    def desk(cls, image_channels: int = 1) -> "WganConfig":
        """Shrunk preset: 16x16 patches, 4x fewer channels, short schedule;
        every structural element (5 networks, 3 losses, clipping, critic
        iterations) is kept."""
        return cls(
            epochs=10,
            batch=16,
            # at least one latent dimension per output pixel (16x16), so the
            # generator can span spatially white noise fields
            latent_dim=256,
            train_size=16,
            image_channels=image_channels,
            gen_base_width=32,
            critic_base_width=32,
            g2_depth=5,
            g3_depth=5,
            dncnn_width=16,
            gen_lr=0.001,
            critic_lr=0.002,
            critic_warmup_steps=50,
            lr_decay_start=3,
            steps_per_epoch=60,
        )


@dataclass
class WganBundle:
    g1: Network  # latent -> noise patch (tanh)
    g2: Network  # noisy image -> clean estimate (sigmoid)
    g3: Network  # clean estimate -> re-noised image (sigmoid)
    c1: Network  # noise critic
    c2: Network  # image critic
    config: WganConfig

    def generators(self):
        return (self.g1, self.g2, self.g3)

    def critics(self):
        return (self.c1, self.c2)

    def save(self, path):
        tensors = {}
        for prefix, net in zip(("g1", "g2", "g3", "c1", "c2"),
                               (self.g1, self.g2, self.g3, self.c1, self.c2)):
            for name, arr in net.params.state_tensors().items():
                tensors[f"{prefix}/{name}"] = arr
        save_tensors(path, tensors)

    def load(self, path):
        tensors = load_tensors(path)
        for prefix, net in zip(("g1", "g2", "g3", "c1", "c2"),
                               (self.g1, self.g2, self.g3, self.c1, self.c2)):
            sub = {name[len(prefix) + 1 :]: arr for name, arr in tensors.items()
                   if name.startswith(prefix + "/")}
            net.params.load_state(sub)


def build_bundle(cfg: WganConfig, seed: int) -> WganBundle:
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    g1 = Network(noise_generator_spec(cfg.train_size, cfg.image_channels,
                                      cfg.latent_dim, cfg.gen_base_width), rng)
    g2 = Network(dncnn_spec(cfg.image_channels, cfg.g2_depth, cfg.dncnn_width,
                            sigmoid_output=True), rng)
    g3 = Network(dncnn_spec(cfg.image_channels, cfg.g3_depth, cfg.dncnn_width,
                            sigmoid_output=True), rng)
    c1 = Network(critic_spec(cfg.train_size, cfg.image_channels,
                             cfg.critic_base_width), rng)
    c2 = Network(critic_spec(cfg.train_size, cfg.image_channels,
                             cfg.critic_base_width), rng)
    return WganBundle(g1, g2, g3, c1, c2, cfg)


# ---------------------------------------------------------------------------
# critic scoring and losses

def critic_scores(critic: Network, batch: np.ndarray, train: bool = True) -> np.ndarray:
    """Per-sample critic score: spatial mean of the final conv map."""
    maps = critic.forward(batch, train=train)
    return maps.mean(axis=(1, 2, 3))


def _score_upstream(batch_shape, map_shape, coeff: float) -> np.ndarray:
    """Upstream gradient for d(coeff * mean_batch(score)) / d(map)."""
    n = map_shape[0]
    per_elem = coeff / (n * map_shape[1] * map_shape[2] * map_shape[3])
    return np.full(map_shape, per_elem)


def _split_upstream(map_shape, batch: int, real_coeff: float,
                    fake_coeff: float) -> np.ndarray:
    """Upstream gradient for the critic maps of a concatenated (real, fake)
    batch: d(real_coeff * mean_real(score) + fake_coeff * mean_fake(score))."""
    per = batch * map_shape[1] * map_shape[2] * map_shape[3]
    up = np.empty(map_shape)
    up[:batch] = real_coeff / per
    up[batch:] = fake_coeff / per
    return up


def loss_noise(c1: Network, g1: Network, real_noise: np.ndarray,
               latent: np.ndarray, train: bool = False):
    """Wasserstein gap on noise patches.

    Returns (critic_value, generator_value): E[f(real)] - E[f(fake)] and the
    generator-side term -E[f(fake)].
    """
    fake = g1.forward(latent, train=train)
    s_real = critic_scores(c1, real_noise, train=train)
    s_fake = critic_scores(c1, fake, train=train)
    gap = float(s_real.mean() - s_fake.mean())
    return gap, float(-s_fake.mean())


def loss_image(c2: Network, g1: Network, g2: Network, noisy: np.ndarray,
               latent: np.ndarray, train: bool = False):
    """Wasserstein gap on noisy images; fake sample is g2(Z) + g1(r)."""
    fake = g2.forward(noisy, train=train) + g1.forward(latent, train=train)
    s_real = critic_scores(c2, noisy, train=train)
    s_fake = critic_scores(c2, fake, train=train)
    gap = float(s_real.mean() - s_fake.mean())
    return gap, float(-s_fake.mean())


def loss_cycle(g2: Network, g3: Network, noisy: np.ndarray,
               train: bool = False) -> float:
    """Mean absolute deviation between Z and g3(g2(Z))."""
    recon = g3.forward(g2.forward(noisy, train=train), train=train)
    return float(np.mean(np.abs(noisy - recon)))


# ---------------------------------------------------------------------------
# training

def _augmented_crop(data: np.ndarray, size: int, rng) -> np.ndarray:
    """Random crop to size x size plus random horizontal/vertical flips.
    data is (N, C, H, W); returns a same-N batch."""
    n, c, h, w = data.shape
    if h < size or w < size:
        raise DataError(f"patches {h}x{w} smaller than train size {size}")
    out = np.empty((n, c, size, size))
    for i in range(n):
        r = int(rng.integers(0, h - size + 1))
        col = int(rng.integers(0, w - size + 1))
        patch = data[i, :, r : r + size, col : col + size]
        if rng.random() < 0.5:
            patch = patch[:, :, ::-1]
        if rng.random() < 0.5:
            patch = patch[:, ::-1, :]
        out[i] = patch
    return out


def _draw_batch(pool: np.ndarray, batch: int, size: int, rng) -> np.ndarray:
    idx = rng.integers(0, pool.shape[0], size=batch)
    return _augmented_crop(pool[idx], size, rng)


def _check_finite(value: float, step: int, term: str):
    if not np.isfinite(value):
        raise NumericalError(f"non-finite loss at step {step}, term {term}: {value}")


def train_wgan(noisy_patches, noise_patches, cfg: WganConfig, seed: int,
               trace_path=None, step_callback=None) -> WganBundle:
    """Alternating W-GAN training: ``critic_iters`` RMSProp critic updates
    (with weight clipping) per Adam generator update.

    ``noisy_patches`` and ``noise_patches`` are arrays (N, C, H, W) with
    H, W >= cfg.train_size.  Deterministic given the seed.
    """
    noisy_patches = np.asarray(noisy_patches, dtype=np.float64)
    noise_patches = np.asarray(noise_patches, dtype=np.float64)
    if noisy_patches.size == 0 or noise_patches.size == 0:
        raise DataError("empty patch set for W-GAN training")

    bundle = build_bundle(cfg, seed)
    g1, g2, g3, c1, c2 = bundle.g1, bundle.g2, bundle.g3, bundle.c1, bundle.c2
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed) + 1))

    gen_params = ParamStore()
    for prefix, net in zip(("g1", "g2", "g3"), (g1, g2, g3)):
        for name, p in net.params.params.items():
            gen_params.params[f"{prefix}/{name}"] = p
    gen_opt = Adam(gen_params, cfg.gen_lr,
                   schedule=LinearDecay(cfg.lr_decay_start, cfg.epochs))
    c1_opt = RMSProp(c1.params, cfg.critic_lr)
    c2_opt = RMSProp(c2.params, cfg.critic_lr)

    a_c, b_c, _ = cfg.critic_weights
    a_g, b_g, g_g = cfg.gen_weights
    steps_per_epoch = cfg.steps_per_epoch
    if steps_per_epoch is None:
        steps_per_epoch = max(1, noisy_patches.shape[0] // cfg.batch)

    def critic_update(step):
        """One critic ascent step on a*L_n + b*L_Z, followed by clipping."""
        real_n = _draw_batch(noise_patches, cfg.batch, cfg.train_size, rng)
        real_z = _draw_batch(noisy_patches, cfg.batch, cfg.train_size, rng)
        latent = rng.standard_normal((cfg.batch, cfg.latent_dim, 1, 1))
        latent2 = rng.standard_normal((cfg.batch, cfg.latent_dim, 1, 1))

        c1.params.zero_grad()
        c2.params.zero_grad()
        # L_n gap
        fake_n = g1.forward(latent, train=True)
        maps_n = c1.forward(np.concatenate([real_n, fake_n]), train=True)
        ln_c = float(maps_n[: cfg.batch].mean() - maps_n[cfg.batch :].mean())
        # ascent == descend on the negated gap
        c1.backward(_split_upstream(maps_n.shape, cfg.batch, -a_c, a_c))
        g1.drop_caches()
        # L_Z gap
        base = g2.forward(real_z, train=True)
        fake_z = base + g1.forward(latent2, train=True)
        maps_z = c2.forward(np.concatenate([real_z, fake_z]), train=True)
        lz_c = float(maps_z[: cfg.batch].mean() - maps_z[cfg.batch :].mean())
        c2.backward(_split_upstream(maps_z.shape, cfg.batch, -b_c, b_c))
        g1.drop_caches()
        g2.drop_caches()

        _check_finite(ln_c, step, "L_n critic")
        _check_finite(lz_c, step, "L_Z critic")
        g1.params.zero_grad()
        g2.params.zero_grad()
        c1_opt.step()
        c2_opt.step()
        clip_weights(c1.params, cfg.clip)
        clip_weights(c2.params, cfg.clip)
        return ln_c, lz_c

    trace_rows = []
    # critic head start so the earliest generator updates already descend a
    # meaningful Wasserstein estimate
    for _ in range(cfg.critic_warmup_steps):
        critic_update(0)
    step = 0
    for epoch in range(cfg.epochs):
        gen_opt.set_epoch(epoch)
        for _ in range(steps_per_epoch):
            # ---- critic phase: maximize a*L_n + b*L_Z ----
            ln_c = lz_c = 0.0
            for _ in range(cfg.critic_iters):
                ln_c, lz_c = critic_update(step)

            # ---- generator phase: minimize a*L_n + b*L_Z + g*L_cyc ----
            real_z = _draw_batch(noisy_patches, cfg.batch, cfg.train_size, rng)
            latent = rng.standard_normal((cfg.batch, cfg.latent_dim, 1, 1))
            latent2 = rng.standard_normal((cfg.batch, cfg.latent_dim, 1, 1))

            for net in (g1, g2, g3, c1, c2):
                net.params.zero_grad()

            # term 1: -a_g * E[f1(g1(r))]; the critic again sees a mixed
            # real/fake batch, with gradient flowing only through the fakes
            real_n = _draw_batch(noise_patches, cfg.batch, cfg.train_size, rng)
            fake_n = g1.forward(latent, train=True)
            maps_n = c1.forward(np.concatenate([real_n, fake_n]), train=True)
            ln_g = float(-maps_n[cfg.batch :].mean())
            d_both = c1.backward(_split_upstream(maps_n.shape, cfg.batch, 0.0, -a_g))
            g1.backward(d_both[cfg.batch :])

            # term 2: -b_g * E[f2(g2(Z) + g1(r'))]
            base = g2.forward(real_z, train=True)
            fake_z = base + g1.forward(latent2, train=True)
            maps_z = c2.forward(np.concatenate([real_z, fake_z]), train=True)
            lz_g = float(-maps_z[cfg.batch :].mean())
            d_fake_z = c2.backward(
                _split_upstream(maps_z.shape, cfg.batch, 0.0, -b_g))[cfg.batch :]

            # term 3: g_g * E|Z - g3(g2(Z))|  (reuses a fresh g2 forward)
            est = g2.forward(real_z, train=True)
            recon = g3.forward(est, train=True)
            resid = real_z - recon
            l_cyc = float(np.mean(np.abs(resid)))
            d_recon = -np.sign(resid) * (g_g / resid.size)
            d_est = g3.backward(d_recon)
            g2.backward(d_est)      # pops the cycle-phase g2 cache
            g2.backward(d_fake_z)   # pops the term-2 g2 cache
            g1.backward(d_fake_z)

            _check_finite(ln_g, step, "L_n generator")
            _check_finite(lz_g, step, "L_Z generator")
            _check_finite(l_cyc, step, "L_cyc")

            # critic parameters receive no update in this phase
            c1.params.zero_grad()
            c2.params.zero_grad()
            gen_opt.step()

            trace_rows.append((step, ln_c, lz_c, ln_g, lz_g, l_cyc))
            if step_callback is not None:
                step_callback(bundle, step)
            step += 1

    if trace_path is not None:
        with open(trace_path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["step", "L_n_critic", "L_Z_critic",
                             "L_n_gen", "L_Z_gen", "L_cyc"])
            writer.writerows(trace_rows)
    return bundle


# ---------------------------------------------------------------------------
# pair synthesis

def sample_generator_noise(g1: Network, cfg: WganConfig, shape, rng) -> np.ndarray:
    """Draw a noise field of shape (N, C, H, W) from g1, tiling its fixed
    output size with independent latent draws when the field is larger."""
    n, c, h, w = shape
    s = cfg.train_size
    th = -(-h // s)
    tw = -(-w // s)
    latent = rng.standard_normal((n * th * tw, cfg.latent_dim, 1, 1))
    tiles = g1.forward(latent, train=False)
    tiles = tiles.reshape(n, th, tw, c, s, s).transpose(0, 3, 1, 4, 2, 5)
    field = tiles.reshape(n, c, th * s, tw * s)
    return field[:, :, :h, :w]


def generate_pair(noisy: np.ndarray, denoise_fn, g1: Network, cfg: WganConfig,
                  rng) -> tuple[np.ndarray, np.ndarray]:
    """Synthesize a pair of noisy realizations sharing one base estimate.

    ``denoise_fn`` maps an (N, C, H, W) batch to its clean estimate (either
    the bundle's g2 in eval mode or a trained denoiser); the two outputs add
    independent g1 noise draws to the same base.
    """
    noisy = np.asarray(noisy, dtype=np.float64)
    squeeze = noisy.ndim == 3
    if squeeze:
        noisy = noisy[None]
    base = denoise_fn(noisy)
    n1 = sample_generator_noise(g1, cfg, noisy.shape, rng)
    n2 = sample_generator_noise(g1, cfg, noisy.shape, rng)
    z1, z2 = base + n1, base + n2
    if squeeze:
        return z1[0], z2[0]
    return z1, z2
