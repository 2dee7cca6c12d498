from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SgdConfig:
    lr_base: float
    lr_heads: float
    momentum: float = 0.9
    weight_decay: float = 5e-4
    max_grad_norm: float = 0.0  # 0 disables clipping

    def __post_init__(self) -> None:
        if not (self.lr_base > 0 and self.lr_heads > 0):
            raise ValueError("learning rates must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if not (np.isfinite(self.max_grad_norm) and self.max_grad_norm >= 0):
            raise ValueError("max_grad_norm must be finite and non-negative")

    def lr(self, group: str) -> float:
        if group == "base":
            return self.lr_base
        if group == "head":
            return self.lr_heads
        raise ValueError(f"unknown parameter group {group!r}")


class Sgd:
    """Momentum SGD: v <- m*v + g + wd*p ; p <- p - lr*v (in place).

    With ``max_grad_norm`` set, the gradients of one step() call are
    rescaled jointly so their L2 norm does not exceed it.
    """

    def __init__(self, cfg: SgdConfig):
        self.cfg = cfg
        self.velocity: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
             group: str) -> None:
        lr = self.cfg.lr(group)
        for name, p in params.items():
            g = grads[name]
            if g.shape != p.shape:
                raise ValueError(f"gradient shape mismatch for {name}")
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"diverged: non-finite gradient for {name}")
        scale = 1.0
        if self.cfg.max_grad_norm > 0:
            norm = np.sqrt(sum(float(np.sum(grads[n] ** 2)) for n in params))
            if norm > self.cfg.max_grad_norm:
                scale = self.cfg.max_grad_norm / norm
        for name, p in params.items():
            g = grads[name] * scale if scale != 1.0 else grads[name]
            v = self.velocity.get(name)
            step = g + self.cfg.weight_decay * p
            v = step if v is None else self.cfg.momentum * v + step
            self.velocity[name] = v
            p -= lr * v


def sgd_step(params, grads, cfg: SgdConfig, group: str, state: Sgd | None = None) -> Sgd:
    opt = state if state is not None else Sgd(cfg)
    opt.step(params, grads, group)
    return opt
