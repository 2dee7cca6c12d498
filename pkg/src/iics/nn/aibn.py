"""Adaptive instance-batch normalization on [N, C, L] tensors.

Per channel, mean and variance are a convex mix of batch statistics (over
N and L) and per-instance statistics (over L)::

    y = gamma * (x - (a*mu_bn + (1-a)*mu_in)) / sqrt(a*var_bn + (1-a)*var_in + eps) + beta

with ``a = clip(alpha, 0, 1)``. The stored alpha is never constrained; the
clamp only applies in the forward pass and its gradient is zero outside
[0, 1].
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SHARING_MODES = ("channel", "block", "layer")


@dataclass
class AibnState:
    channels: int
    sharing: str = "block"
    alpha_init: float = 0.5
    learn_alpha: bool = True
    eps: float = 1e-5
    momentum: float = 0.1
    alpha: np.ndarray = field(default=None)
    gamma: np.ndarray = field(default=None)
    beta: np.ndarray = field(default=None)
    running_mean: np.ndarray = field(default=None)
    running_var: np.ndarray = field(default=None)

    def __post_init__(self) -> None:
        if self.sharing not in SHARING_MODES:
            raise ValueError(f"sharing must be one of {SHARING_MODES}")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        n_alpha = self.channels if self.sharing == "channel" else 1
        if self.alpha is None:
            self.alpha = np.full(n_alpha, float(self.alpha_init))
        if self.gamma is None:
            self.gamma = np.ones(self.channels)
        if self.beta is None:
            self.beta = np.zeros(self.channels)
        if self.running_mean is None:
            self.running_mean = np.zeros(self.channels)
        if self.running_var is None:
            self.running_var = np.ones(self.channels)
        self.alpha = np.asarray(self.alpha, dtype=np.float64).reshape(n_alpha)

    def channel_alpha(self) -> np.ndarray:
        """Clamped mixture weight expanded to one value per channel."""
        a = np.clip(self.alpha, 0.0, 1.0)
        return np.broadcast_to(a, (self.channels,)).copy()


def aibn_forward(x: np.ndarray, state: AibnState, mode: str = "train"):
    """Returns (y, cache). Train mode updates the running statistics."""
    if x.ndim != 3 or x.shape[1] != state.channels:
        raise ValueError(f"expected [N, {state.channels}, L] input, got {x.shape}")
    N, _, L = x.shape
    if mode == "train":
        if N < 2:
            raise ValueError("batch too small for BN statistics")
        mu_bn = x.mean(axis=(0, 2))
        var_bn = x.var(axis=(0, 2))
        m = state.momentum
        state.running_mean = (1 - m) * state.running_mean + m * mu_bn
        state.running_var = (1 - m) * state.running_var + m * var_bn
    elif mode == "eval":
        mu_bn = state.running_mean
        var_bn = state.running_var
    else:
        raise ValueError(f"unknown mode {mode!r}")

    mu_in = x.mean(axis=2)
    var_in = x.var(axis=2)
    a = state.channel_alpha()
    mean = a * mu_bn + (1 - a) * mu_in                 # [N, C]
    var = a * var_bn + (1 - a) * var_in + state.eps    # [N, C]
    inv_std = 1.0 / np.sqrt(var)
    xhat = (x - mean[:, :, None]) * inv_std[:, :, None]
    y = state.gamma[None, :, None] * xhat + state.beta[None, :, None]
    cache = dict(
        x=x, xhat=xhat, mean=mean, inv_std=inv_std, a=a,
        mu_bn=mu_bn, var_bn=var_bn, mu_in=mu_in, var_in=var_in, mode=mode,
    )
    return y, cache


def aibn_backward(dy: np.ndarray, cache: dict, state: AibnState):
    """Exact gradients of the forward expression.

    Returns (dx, dgamma, dbeta, dalpha); dalpha has the shape of the stored
    alpha (summed over every channel in a sharing group).
    """
    if cache["mode"] != "train":
        raise ValueError("backward requires a train-mode forward cache")
    x = cache["x"]
    if dy.shape != x.shape:
        raise ValueError(f"gradient shape {dy.shape} does not match input {x.shape}")
    N, C, L = x.shape
    xhat, inv_std, a = cache["xhat"], cache["inv_std"], cache["a"]
    mean = cache["mean"]

    dgamma = np.sum(dy * xhat, axis=(0, 2))
    dbeta = np.sum(dy, axis=(0, 2))
    dxhat = dy * state.gamma[None, :, None]

    centered = x - mean[:, :, None]
    dmean = -np.sum(dxhat, axis=2) * inv_std                          # [N, C]
    dvar = -0.5 * np.sum(dxhat * centered, axis=2) * inv_std ** 3     # [N, C]

    dmu_bn = a * dmean.sum(axis=0)                                   # [C]
    dvar_bn = a * dvar.sum(axis=0)
    dmu_in = (1 - a) * dmean                                         # [N, C]
    dvar_in = (1 - a) * dvar

    dx = dxhat * inv_std[:, :, None]
    dx += dmu_bn[None, :, None] / (N * L)
    dx += dvar_bn[None, :, None] * 2.0 * (x - cache["mu_bn"][None, :, None]) / (N * L)
    dx += dmu_in[:, :, None] / L
    dx += dvar_in[:, :, None] * 2.0 * (x - cache["mu_in"][:, :, None]) / L

    da = np.sum(
        dmean * (cache["mu_bn"][None, :] - cache["mu_in"])
        + dvar * (cache["var_bn"][None, :] - cache["var_in"]),
        axis=0,
    )
    if state.alpha.size == 1:
        da = da.sum(keepdims=True)
    inside = (state.alpha >= 0.0) & (state.alpha <= 1.0)
    dalpha = np.where(inside, da, 0.0)
    if not state.learn_alpha:
        dalpha = np.zeros_like(state.alpha)
    return dx, dgamma, dbeta, dalpha

