"""First-order optimizers over ModelParams.

Optimizers are stateful objects but never mutate the params they receive;
``step`` returns a new ModelParams.
"""

from __future__ import annotations

from typing import List, Optional

import numpy as np

from fusionkd.models.model_params import Layer, ModelParams
from fusionkd.objects.errors import ConfigError

OPTIMIZER_KINDS = ("sgd", "adam")


def _with_weight_decay(params: ModelParams, grads: ModelParams, weight_decay: float) -> ModelParams:
    if weight_decay == 0.0:
        return grads
    # L2 on weights only; biases are left undecayed.
    return ModelParams(
        tuple(
            Layer(g.weight + weight_decay * p.weight, g.bias, g.activation)
            for p, g in zip(params.layers, grads.layers)
        )
    )


class Optimizer:
    def __init__(self, lr: float, weight_decay: float = 0.0) -> None:
        if lr < 0.0:
            raise ConfigError(f"Learning rate must be non-negative, got {lr}")
        if weight_decay < 0.0:
            raise ConfigError(f"weight_decay must be non-negative, got {weight_decay}")
        self.lr = float(lr)
        self.weight_decay = float(weight_decay)

    def step(self, params: ModelParams, grads: ModelParams) -> ModelParams:
        raise NotImplementedError


class SGD(Optimizer):
    """Plain or heavy-ball SGD."""

    def __init__(self, lr: float, momentum: float = 0.0, weight_decay: float = 0.0) -> None:
        super().__init__(lr, weight_decay)
        if not 0.0 <= momentum < 1.0:
            raise ConfigError(f"momentum must lie in [0, 1), got {momentum}")
        self.momentum = float(momentum)
        self._velocity: Optional[ModelParams] = None

    def step(self, params: ModelParams, grads: ModelParams) -> ModelParams:
        grads = _with_weight_decay(params, grads, self.weight_decay)
        if self.momentum == 0.0:
            return params.zip_map(grads, lambda p, g: p - self.lr * g)
        if self._velocity is None:
            self._velocity = grads
        else:
            self._velocity = self._velocity.zip_map(grads, lambda v, g: self.momentum * v + g)
        return params.zip_map(self._velocity, lambda p, v: p - self.lr * v)


class Adam(Optimizer):
    def __init__(
        self,
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        weight_decay: float = 0.0,
    ) -> None:
        super().__init__(lr, weight_decay)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self._m: Optional[ModelParams] = None
        self._v: Optional[ModelParams] = None
        self._t = 0

    def step(self, params: ModelParams, grads: ModelParams) -> ModelParams:
        grads = _with_weight_decay(params, grads, self.weight_decay)
        if self._m is None or self._v is None:
            self._m = grads.zeros_like()
            self._v = grads.zeros_like()
        self._t += 1
        b1, b2 = self.beta1, self.beta2
        self._m = self._m.zip_map(grads, lambda m, g: b1 * m + (1.0 - b1) * g)
        self._v = self._v.zip_map(grads, lambda v, g: b2 * v + (1.0 - b2) * g * g)
        c1 = 1.0 - b1 ** self._t
        c2 = 1.0 - b2 ** self._t

        new_layers: List[Layer] = []
        for p, m, v in zip(params.layers, self._m.layers, self._v.layers):
            new_layers.append(
                Layer(
                    p.weight - self.lr * (m.weight / c1) / (np.sqrt(v.weight / c2) + self.eps),
                    p.bias - self.lr * (m.bias / c1) / (np.sqrt(v.bias / c2) + self.eps),
                    p.activation,
                )
            )
        return ModelParams(tuple(new_layers))


def build_optimizer(
    kind: str,
    lr: float,
    *,
    momentum: float = 0.0,
    weight_decay: float = 0.0,
) -> Optimizer:
    kind = kind.strip().lower()
    if kind == "sgd":
        return SGD(lr, momentum=momentum, weight_decay=weight_decay)
    if kind == "adam":
        return Adam(lr, weight_decay=weight_decay)
    raise ConfigError(f"Unknown optimizer: {kind}")
