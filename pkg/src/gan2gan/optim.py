"""Adam and RMSProp optimizers with the learning-rate schedules used by the
pipeline, plus critic weight clipping."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .nn import ParamStore


@dataclass
class Constant:
    def factor(self, epoch: int) -> float:
        return 1.0


@dataclass
class HalveEvery:
    every: int

    def factor(self, epoch: int) -> float:
        return 0.5 ** (epoch // self.every)


@dataclass
class LinearDecay:
    """Linear decay to zero between start_epoch and end_epoch."""

    start_epoch: int
    end_epoch: int

    def factor(self, epoch: int) -> float:
        if epoch < self.start_epoch:
            return 1.0
        if epoch >= self.end_epoch:
            return 0.0
        span = self.end_epoch - self.start_epoch
        return (self.end_epoch - epoch) / span


class Optimizer:
    def __init__(self, params: ParamStore, lr: float, schedule=None):
        if lr <= 0:
            raise ConfigurationError("learning rate must be positive")
        self.params = params
        self.base_lr = lr
        self.schedule = schedule if schedule is not None else Constant()
        self.epoch = 0

    def set_epoch(self, epoch: int):
        self.epoch = epoch

    @property
    def lr(self) -> float:
        return self.base_lr * self.schedule.factor(self.epoch)


class Adam(Optimizer):
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8, schedule=None):
        super().__init__(params, lr, schedule)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {name: np.zeros_like(p.data) for name, p in params.params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in params.params.items()}

    def step(self):
        self.t += 1
        lr = self.lr
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for name, p in self.params.params.items():
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1 - b1) * p.grad
            v *= b2
            v += (1 - b2) * p.grad ** 2
            p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
        self.params.zero_grad()


class RMSProp(Optimizer):
    def __init__(self, params, lr, decay=0.99, eps=1e-8, schedule=None):
        super().__init__(params, lr, schedule)
        self.decay, self.eps = decay, eps
        self.sq = {name: np.zeros_like(p.data) for name, p in params.params.items()}

    def step(self):
        lr = self.lr
        rho = self.decay
        for name, p in self.params.params.items():
            sq = self.sq[name]
            sq *= rho
            sq += (1 - rho) * p.grad ** 2
            p.data -= lr * p.grad / (np.sqrt(sq) + self.eps)
        self.params.zero_grad()


def clip_weights(params: ParamStore, c: float):
    """Clamp every learnable parameter into [-c, c] (W-GAN critic clipping)."""
    if c <= 0:
        raise ConfigurationError("clip value must be positive")
    for p in params.params.values():
        np.clip(p.data, -c, c, out=p.data)
