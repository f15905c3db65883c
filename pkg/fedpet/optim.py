#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# optim.py

"""
First-order optimizers over named parameter arrays.

Optimizers never mutate parameters: ``step`` takes ``{name: array}``
dictionaries of parameters and gradients and returns new arrays. State
(momentum buffers, Adam moments) is keyed by parameter name.
"""

import logging
from dataclasses import asdict, dataclass

import numpy as np

from . import jsonify, validate
from .registry import Registry

log = logging.getLogger(__name__)


class OptimizerRegistry(Registry):
    """Storage for optimizers.

    Users can define custom optimizers:

    Examples:
        >>> @optimizers.register('sign')  # doctest: +SKIP
        ... class SignSGD(SGD):
        ...     def step(self, params, grads):
        ...         return {k: params[k] - self.lr * np.sign(grads[k]) for k in params}
    """

    desc = "optimizers"


optimizers = OptimizerRegistry()


class Optimizer:
    """Base class. Subclasses implement ``step``."""

    def __init__(self, lr):
        self.lr = lr
        self.state = {}
        self.t = 0

    def reset(self):
        self.state = {}
        self.t = 0
        log.debug("Reset %s state", type(self).__name__)

    def step(self, params, grads):
        raise NotImplementedError

    def _check(self, params, grads):
        if set(params) != set(grads):
            raise ValueError(
                "Parameters and gradients name different tensors: {} vs {}".format(
                    sorted(params), sorted(grads)
                )
            )


@optimizers.register("sgd")
class SGD(Optimizer):
    """Stochastic gradient descent with optional heavy-ball momentum.

    Example:
        >>> opt = SGD(lr=0.1)
        >>> opt.step({'w': np.array([1.0])}, {'w': np.array([2.0])})['w']
        array([0.8])
    """

    def __init__(self, lr, momentum=0.0):
        super().__init__(lr)
        self.momentum = momentum

    def step(self, params, grads):
        self._check(params, grads)
        self.t += 1
        out = {}
        for name in sorted(params):
            g = grads[name]
            if self.momentum:
                buf = self.state.get(name)
                buf = g if buf is None else self.momentum * buf + g
                self.state[name] = buf
                g = buf
            out[name] = params[name] - self.lr * g
        return out


@optimizers.register("adam")
class Adam(Optimizer):
    """Adam with bias-corrected moments."""

    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        super().__init__(lr)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps

    def step(self, params, grads):
        self._check(params, grads)
        self.t += 1
        c1 = 1 - self.beta1 ** self.t
        c2 = 1 - self.beta2 ** self.t
        out = {}
        for name in sorted(params):
            g = grads[name]
            m, v = self.state.get(name, (0.0, 0.0))
            m = self.beta1 * m + (1 - self.beta1) * g
            v = self.beta2 * v + (1 - self.beta2) * g * g
            self.state[name] = (m, v)
            out[name] = params[name] - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return out


@dataclass(frozen=True)
class OptimizerConfig:
    """Which optimizer a client builds, and its hyperparameters.

    SGD reads ``lr`` and ``momentum``; Adam reads ``lr``, ``beta1``,
    ``beta2`` and ``eps``.
    """

    name: str = "adam"
    lr: float = 1e-3
    momentum: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        validate.optimizer_config(self)

    @classmethod
    def sgd(cls, lr, momentum=0.0):
        return cls(name="sgd", lr=lr, momentum=momentum)

    @classmethod
    def adam(cls, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        return cls(name="adam", lr=lr, beta1=beta1, beta2=beta2, eps=eps)

    def build(self):
        """Return a fresh optimizer instance."""
        if self.name == "sgd":
            return optimizers["sgd"](self.lr, momentum=self.momentum)
        return optimizers[self.name](
            self.lr, beta1=self.beta1, beta2=self.beta2, eps=self.eps
        )

    def with_lr(self, lr):
        return OptimizerConfig(**dict(asdict(self), lr=lr))

    def to_json(self):
        return asdict(self)

    @classmethod
    def from_json(cls, dct):
        return jsonify.build_dataclass(cls, dct)
