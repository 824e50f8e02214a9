"""Minimal dense-tensor network engine.

All tensors are float64 numpy arrays in NCHW order.  Networks are fixed
sequential layer chains (optionally with a DnCNN-style residual skip and a
sigmoid squashed output); every layer has an analytic backward pass that is
checked against central finite differences in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, UsageError

ACTIVATION_KINDS = ("ReLU", "LeakyReLU", "Tanh", "Sigmoid")
PARAM_KINDS = ("Conv", "DeConv", "BatchNorm")


@dataclass
class LayerSpec:
    kind: str
    in_channels: int = 0
    out_channels: int = 0
    kernel_size: int = 0
    stride: int = 1
    padding: int = 0
    alpha: float = 0.2  # LeakyReLU slope only
    init_scale: float = 1.0  # multiplier on the He-init weight scale

    def __post_init__(self):
        if self.kind not in ACTIVATION_KINDS + PARAM_KINDS:
            raise ConfigurationError(f"unknown layer kind {self.kind!r}")
        if self.kind in ("Conv", "DeConv"):
            if self.kernel_size < 1 or self.stride < 1 or self.padding < 0:
                raise ConfigurationError(
                    f"{self.kind}: kernel_size>=1, stride>=1, padding>=0 required"
                )


def conv_out_size(size: int, k: int, s: int, p: int) -> int:
    return (size + 2 * p - k) // s + 1


def deconv_out_size(size: int, k: int, s: int, p: int) -> int:
    return (size - 1) * s - 2 * p + k


class Param:
    """A learnable tensor paired with a same-shape gradient slot."""

    __slots__ = ("data", "grad")

    def __init__(self, data: np.ndarray):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = np.zeros_like(self.data)


class ParamStore:
    """Named parameters (with gradients) plus non-learnable buffers."""

    def __init__(self):
        self.params: dict[str, Param] = {}
        self.buffers: dict[str, np.ndarray] = {}

    def add_param(self, name: str, data: np.ndarray) -> Param:
        if name in self.params:
            raise ConfigurationError(f"duplicate parameter name {name!r}")
        p = Param(data)
        self.params[name] = p
        return p

    def add_buffer(self, name: str, data: np.ndarray) -> np.ndarray:
        arr = np.asarray(data, dtype=np.float64)
        self.buffers[name] = arr
        return arr

    def zero_grad(self):
        for p in self.params.values():
            p.grad.fill(0.0)

    def state_tensors(self) -> dict[str, np.ndarray]:
        """All persistent tensors (parameters and buffers) by name."""
        out = {name: p.data for name, p in self.params.items()}
        out.update(self.buffers)
        return out

    def load_state(self, tensors: dict[str, np.ndarray]):
        for name, p in self.params.items():
            if name not in tensors:
                raise UsageError(f"checkpoint missing tensor {name!r}")
            if tensors[name].shape != p.data.shape:
                raise UsageError(f"checkpoint shape mismatch for {name!r}")
            p.data[...] = tensors[name]
        for name in self.buffers:
            if name not in tensors:
                raise UsageError(f"checkpoint missing buffer {name!r}")
            self.buffers[name][...] = tensors[name]

    def max_abs(self) -> float:
        if not self.params:
            return 0.0
        return max(float(np.max(np.abs(p.data))) for p in self.params.values())


@dataclass
class NetworkSpec:
    """A fixed layer chain, optionally residual (output = input - chain(input))
    with an optional final sigmoid and/or per-sample spatial mean removal."""

    layers: list[LayerSpec]
    residual: bool = False
    sigmoid_output: bool = False
    zero_mean_output: bool = False  # subtract the per-channel spatial mean
    # affine pre-activation for the output sigmoid: y = sigmoid(gain*(u - center));
    # gain 4 / center 0.5 makes the head approximate the identity on [0,1]
    sigmoid_gain: float = 1.0
    sigmoid_center: float = 0.0

    def validate(self):
        prev = None
        for i, layer in enumerate(self.layers):
            if layer.kind in PARAM_KINDS:
                if prev is not None and layer.in_channels != prev:
                    raise ConfigurationError(
                        f"layer {i} ({layer.kind}): expects {layer.in_channels} "
                        f"input channels but previous layer produces {prev}"
                    )
                if layer.kind == "BatchNorm":
                    prev = layer.in_channels
                else:
                    prev = layer.out_channels

    def in_channels(self) -> int:
        for layer in self.layers:
            if layer.kind in PARAM_KINDS:
                return layer.in_channels
        raise ConfigurationError("network has no parametric layer")

    def trace_shape(self, size: int) -> list[int]:
        """Spatial size after each layer, for shape-law assertions."""
        sizes = []
        for layer in self.layers:
            if layer.kind == "Conv":
                size = conv_out_size(size, layer.kernel_size, layer.stride, layer.padding)
            elif layer.kind == "DeConv":
                size = deconv_out_size(size, layer.kernel_size, layer.stride, layer.padding)
            sizes.append(size)
        return sizes


# ---------------------------------------------------------------------------
# convolution helpers (im2col / col2im)

def _im2col(x, k, s, p):
    n, c, h, w = x.shape
    ho = conv_out_size(h, k, s, p)
    wo = conv_out_size(w, k, s, p)
    if ho < 1 or wo < 1:
        raise ConfigurationError(
            f"conv produces empty output for input {h}x{w}, k={k}, s={s}, p={p}"
        )
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))
    win = win[:, :, ::s, ::s]  # (N, C, Ho, Wo, k, k)
    return win, ho, wo


def _col2im(dwin, xshape, k, s, p, ho, wo):
    n, c, h, w = xshape
    dxp = np.zeros((n, c, h + 2 * p, w + 2 * p))
    for a in range(k):
        for b in range(k):
            dxp[:, :, a : a + s * ho : s, b : b + s * wo : s] += dwin[:, :, :, :, a, b]
    if p:
        return dxp[:, :, p : p + h, p : p + w]
    return dxp


BN_EPS = 1e-5
BN_MOMENTUM = 0.1


class Network:
    """Instantiates a NetworkSpec with parameters and runs forward/backward.

    Forward calls in train mode push a cache; backward pops the most recent
    cache (LIFO), so several forwards may be in flight before their backwards.
    """

    def __init__(self, spec: NetworkSpec, rng: np.random.Generator | None = None,
                 params: ParamStore | None = None):
        spec.validate()
        self.spec = spec
        if params is not None:
            self.params = params
        else:
            if rng is None:
                rng = np.random.default_rng(0)
            self.params = ParamStore()
            self._init_params(rng)
        self._caches: list[dict] = []

    def _init_params(self, rng):
        for i, layer in enumerate(self.spec.layers):
            pre = f"layer{i}"
            if layer.kind == "Conv":
                fan_in = layer.in_channels * layer.kernel_size ** 2
                w = rng.standard_normal(
                    (layer.out_channels, layer.in_channels,
                     layer.kernel_size, layer.kernel_size)
                ) * (np.sqrt(2.0 / fan_in) * layer.init_scale)
                self.params.add_param(f"{pre}/weight", w)
                self.params.add_param(f"{pre}/bias", np.zeros(layer.out_channels))
            elif layer.kind == "DeConv":
                fan_in = layer.in_channels * layer.kernel_size ** 2
                w = rng.standard_normal(
                    (layer.in_channels, layer.out_channels,
                     layer.kernel_size, layer.kernel_size)
                ) * (np.sqrt(2.0 / fan_in) * layer.init_scale)
                self.params.add_param(f"{pre}/weight", w)
                self.params.add_param(f"{pre}/bias", np.zeros(layer.out_channels))
            elif layer.kind == "BatchNorm":
                c = layer.in_channels
                self.params.add_param(f"{pre}/scale", np.ones(c))
                self.params.add_param(f"{pre}/shift", np.zeros(c))
                self.params.add_buffer(f"{pre}/running_mean", np.zeros(c))
                self.params.add_buffer(f"{pre}/running_var", np.ones(c))

    # -- layer forwards ----------------------------------------------------

    def _layer_forward(self, i, layer, x, train):
        pre = f"layer{i}"
        if layer.kind == "Conv":
            if x.shape[1] != layer.in_channels:
                raise ConfigurationError(
                    f"layer {i} (Conv): got {x.shape[1]} channels, "
                    f"expected {layer.in_channels}"
                )
            w = self.params.params[f"{pre}/weight"].data
            b = self.params.params[f"{pre}/bias"].data
            k, s, p = layer.kernel_size, layer.stride, layer.padding
            win, ho, wo = _im2col(x, k, s, p)
            n = x.shape[0]
            cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, -1)
            y = cols @ w.reshape(layer.out_channels, -1).T + b
            y = y.reshape(n, ho, wo, layer.out_channels).transpose(0, 3, 1, 2)
            return y, {"x_shape": x.shape, "cols": cols, "ho": ho, "wo": wo}
        if layer.kind == "DeConv":
            if x.shape[1] != layer.in_channels:
                raise ConfigurationError(
                    f"layer {i} (DeConv): got {x.shape[1]} channels, "
                    f"expected {layer.in_channels}"
                )
            w = self.params.params[f"{pre}/weight"].data
            b = self.params.params[f"{pre}/bias"].data
            k, s, p = layer.kernel_size, layer.stride, layer.padding
            n, c, h, wd = x.shape
            ho = deconv_out_size(h, k, s, p)
            wo = deconv_out_size(wd, k, s, p)
            if ho < 1 or wo < 1:
                raise ConfigurationError(
                    f"layer {i} (DeConv) produces empty output for {h}x{wd}"
                )
            xm = x.transpose(0, 2, 3, 1).reshape(n * h * wd, c)
            contrib = (xm @ w.reshape(c, -1)).reshape(n, h, wd, layer.out_channels, k, k)
            contrib = contrib.transpose(0, 3, 1, 2, 4, 5)  # (N, Cout, H, W, k, k)
            full = np.zeros((n, layer.out_channels, (h - 1) * s + k, (wd - 1) * s + k))
            for a in range(k):
                for bb in range(k):
                    full[:, :, a : a + s * h : s, bb : bb + s * wd : s] += \
                        contrib[:, :, :, :, a, bb]
            y = full[:, :, p : p + ho, p : p + wo] + b[None, :, None, None]
            return y, {"x": x, "x_shape": x.shape, "ho": ho, "wo": wo}
        if layer.kind == "BatchNorm":
            g = self.params.params[f"{pre}/scale"].data
            beta = self.params.params[f"{pre}/shift"].data
            rm = self.params.buffers[f"{pre}/running_mean"]
            rv = self.params.buffers[f"{pre}/running_var"]
            if train:
                mean = x.mean(axis=(0, 2, 3))
                var = x.var(axis=(0, 2, 3))
                rm[...] = (1 - BN_MOMENTUM) * rm + BN_MOMENTUM * mean
                rv[...] = (1 - BN_MOMENTUM) * rv + BN_MOMENTUM * var
            else:
                mean, var = rm, rv
            inv_std = 1.0 / np.sqrt(var + BN_EPS)
            xhat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
            y = g[None, :, None, None] * xhat + beta[None, :, None, None]
            return y, {"xhat": xhat, "inv_std": inv_std, "train": train}
        if layer.kind == "ReLU":
            mask = x > 0
            return x * mask, {"mask": mask}
        if layer.kind == "LeakyReLU":
            mask = x > 0
            return np.where(mask, x, layer.alpha * x), {"mask": mask}
        if layer.kind == "Tanh":
            y = np.tanh(x)
            return y, {"y": y}
        if layer.kind == "Sigmoid":
            y = _sigmoid(x)
            return y, {"y": y}
        raise ConfigurationError(f"unknown layer kind {layer.kind!r}")

    def _layer_backward(self, i, layer, dy, cache):
        pre = f"layer{i}"
        if layer.kind == "Conv":
            w = self.params.params[f"{pre}/weight"]
            b = self.params.params[f"{pre}/bias"]
            k, s, p = layer.kernel_size, layer.stride, layer.padding
            n, c, h, wd = cache["x_shape"]
            ho, wo = cache["ho"], cache["wo"]
            dym = dy.transpose(0, 2, 3, 1).reshape(n * ho * wo, layer.out_channels)
            w.grad += (dym.T @ cache["cols"]).reshape(w.data.shape)
            b.grad += dym.sum(axis=0)
            dcols = dym @ w.data.reshape(layer.out_channels, -1)
            dwin = dcols.reshape(n, ho, wo, c, k, k).transpose(0, 3, 1, 2, 4, 5)
            return _col2im(dwin, cache["x_shape"], k, s, p, ho, wo)
        if layer.kind == "DeConv":
            w = self.params.params[f"{pre}/weight"]
            b = self.params.params[f"{pre}/bias"]
            k, s, p = layer.kernel_size, layer.stride, layer.padding
            n, c, h, wd = cache["x_shape"]
            x = cache["x"]
            b.grad += dy.sum(axis=(0, 2, 3))
            dfull = np.pad(dy, ((0, 0), (0, 0), (p, p), (p, p))) if p else dy
            # gather the scattered windows back: dcontrib[..., a, b]
            dcontrib = np.empty((n, layer.out_channels, h, wd, k, k))
            for a in range(k):
                for bb in range(k):
                    dcontrib[:, :, :, :, a, bb] = \
                        dfull[:, :, a : a + s * h : s, bb : bb + s * wd : s]
            dcm = dcontrib.transpose(0, 2, 3, 1, 4, 5).reshape(n * h * wd, -1)
            xm = x.transpose(0, 2, 3, 1).reshape(n * h * wd, c)
            w.grad += (xm.T @ dcm).reshape(w.data.shape)
            dx = (dcm @ w.data.reshape(c, -1).T).reshape(n, h, wd, c)
            return dx.transpose(0, 3, 1, 2)
        if layer.kind == "BatchNorm":
            g = self.params.params[f"{pre}/scale"]
            beta = self.params.params[f"{pre}/shift"]
            xhat, inv_std = cache["xhat"], cache["inv_std"]
            g.grad += (dy * xhat).sum(axis=(0, 2, 3))
            beta.grad += dy.sum(axis=(0, 2, 3))
            gs = g.data[None, :, None, None] * inv_std[None, :, None, None]
            if cache["train"]:
                dy_mean = dy.mean(axis=(0, 2, 3))[None, :, None, None]
                dyx_mean = (dy * xhat).mean(axis=(0, 2, 3))[None, :, None, None]
                return gs * (dy - dy_mean - xhat * dyx_mean)
            return gs * dy
        if layer.kind == "ReLU":
            return dy * cache["mask"]
        if layer.kind == "LeakyReLU":
            return np.where(cache["mask"], dy, layer.alpha * dy)
        if layer.kind == "Tanh":
            return dy * (1.0 - cache["y"] ** 2)
        if layer.kind == "Sigmoid":
            return dy * cache["y"] * (1.0 - cache["y"])
        raise ConfigurationError(f"unknown layer kind {layer.kind!r}")

    # -- network-level API -------------------------------------------------

    def forward(self, x: np.ndarray, train: bool = True) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        x_in = x
        caches = []
        for i, layer in enumerate(self.spec.layers):
            x, cache = self._layer_forward(i, layer, x, train)
            caches.append(cache)
        if self.spec.residual:
            if x.shape != x_in.shape:
                raise ConfigurationError(
                    "residual network: chain output shape differs from input"
                )
            x = x_in - x
        out_cache = None
        if self.spec.sigmoid_output:
            x = _sigmoid(self.spec.sigmoid_gain * (x - self.spec.sigmoid_center))
            out_cache = x
        if self.spec.zero_mean_output:
            x = x - x.mean(axis=(2, 3), keepdims=True)
        if train:
            self._caches.append({"layers": caches, "out": out_cache})
        return x

    def backward(self, dy: np.ndarray) -> np.ndarray:
        """Accumulate parameter gradients; return gradient w.r.t. the input."""
        if not self._caches:
            raise UsageError("backward called without a prior train-mode forward")
        cache = self._caches.pop()
        dy = np.asarray(dy, dtype=np.float64)
        if self.spec.zero_mean_output:
            dy = dy - dy.mean(axis=(2, 3), keepdims=True)
        if self.spec.sigmoid_output:
            y = cache["out"]
            dy = dy * y * (1.0 - y) * self.spec.sigmoid_gain
        d_chain = -dy if self.spec.residual else dy
        for i in range(len(self.spec.layers) - 1, -1, -1):
            d_chain = self._layer_backward(i, self.spec.layers[i], d_chain,
                                           cache["layers"][i])
        if self.spec.residual:
            return dy + d_chain
        return d_chain

    def drop_caches(self):
        self._caches.clear()


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out
