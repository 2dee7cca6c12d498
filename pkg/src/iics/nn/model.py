"""Channel-mixing encoder with an AIBN layer and a standardizing neck.

encode: mix -> AIBN -> ReLU -> flatten -> projection [-> ReLU] -> neck.

The optional ReLU after the projection makes the pooled features
non-negative, like globally pooled CNN activations; ``pooled`` returns them
for similarity computations while the neck output feeds the losses. In
embedding mode (imported feature vectors) only the neck is applied and the
imported vectors are the pooled features.
"""
from __future__ import annotations

import numpy as np

from .aibn import AibnState, aibn_backward, aibn_forward

BASE_PARAMS = ("mix", "aibn.alpha", "aibn.gamma", "aibn.beta", "proj.w", "proj.b")
HEAD_PARAMS = ("neck.scale",)


class EncoderModel:
    def __init__(
        self,
        in_channels: int,
        length: int,
        mix_channels: int = 16,
        dim: int = 32,
        sharing: str = "block",
        alpha_init: float = 0.5,
        learn_alpha: bool = True,
        raw_input: bool = False,
        rng: np.random.Generator | None = None,
        neck_eps: float = 1e-5,
        neck_momentum: float = 0.1,
        pool_relu: bool = True,
    ):
        self.in_channels = in_channels
        self.length = length
        self.raw_input = raw_input
        self.pool_relu = pool_relu and not raw_input
        if raw_input:
            mix_channels = 0
            dim = in_channels * length
        if dim < 2:
            raise ValueError("embedding dimension must be >= 2")
        self.mix_channels = mix_channels
        self.dim = dim
        self.neck_eps = neck_eps
        self.neck_momentum = neck_momentum
        self.neck_running_mean = np.zeros(dim)
        self.neck_running_var = np.ones(dim)
        self.params: dict[str, np.ndarray] = {"neck.scale": np.ones(dim)}
        self.aibn: AibnState | None = None
        if not raw_input:
            if rng is None:
                raise ValueError("rng required to initialise encoder weights")
            flat = mix_channels * length
            self.aibn = AibnState(mix_channels, sharing=sharing, alpha_init=alpha_init,
                                  learn_alpha=learn_alpha)
            self.params["mix"] = rng.normal(0.0, np.sqrt(1.0 / in_channels),
                                            size=(mix_channels, in_channels))
            self.params["proj.w"] = rng.normal(0.0, np.sqrt(2.0 / flat), size=(dim, flat))
            self.params["proj.b"] = np.zeros(dim)
            self._link_aibn()

    def _link_aibn(self) -> None:
        self.params["aibn.alpha"] = self.aibn.alpha
        self.params["aibn.gamma"] = self.aibn.gamma
        self.params["aibn.beta"] = self.aibn.beta

    def param_groups(self) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray]]:
        base = {k: v for k, v in self.params.items() if k in BASE_PARAMS}
        if self.aibn is not None and not self.aibn.learn_alpha:
            base.pop("aibn.alpha")
        head = {k: v for k, v in self.params.items() if k in HEAD_PARAMS}
        return base, head

    def alpha_values(self) -> list[float]:
        return [] if self.aibn is None else [float(a) for a in self.aibn.alpha]

    def _check(self, x: np.ndarray) -> None:
        if x.ndim != 3 or x.shape[1:] != (self.in_channels, self.length):
            raise ValueError(
                f"expected signals [N, {self.in_channels}, {self.length}], got {x.shape}"
            )

    def forward(self, x: np.ndarray, mode: str = "train"):
        x = np.asarray(x, dtype=np.float64)
        self._check(x)
        N = x.shape[0]
        cache: dict = {"mode": mode, "x_shape": x.shape}
        if self.raw_input:
            z = x.reshape(N, -1)
        else:
            h = np.einsum("oc,ncl->nol", self.params["mix"], x)
            a, cache["aibn"] = aibn_forward(h, self.aibn, mode)
            r = np.maximum(a, 0.0)
            flat = r.reshape(N, -1)
            z = flat @ self.params["proj.w"].T + self.params["proj.b"]
            cache.update(x=x, a=a, flat=flat, z=z)
            if self.pool_relu:
                z = np.maximum(z, 0.0)
        cache["pooled"] = z
        if mode == "train":
            if N < 2:
                raise ValueError("batch too small for BN statistics")
            mu = z.mean(axis=0)
            var = z.var(axis=0)
            m = self.neck_momentum
            self.neck_running_mean = (1 - m) * self.neck_running_mean + m * mu
            self.neck_running_var = (1 - m) * self.neck_running_var + m * var
        elif mode == "eval":
            mu, var = self.neck_running_mean, self.neck_running_var
        else:
            raise ValueError(f"unknown mode {mode!r}")
        inv = 1.0 / np.sqrt(var + self.neck_eps)
        zhat = (z - mu) * inv
        f = self.params["neck.scale"] * zhat
        cache.update(zhat=zhat, inv=inv)
        return f, cache

    def backward(self, df: np.ndarray, cache: dict) -> dict[str, np.ndarray]:
        if cache["mode"] != "train":
            raise ValueError("backward requires a train-mode forward cache")
        zhat, inv = cache["zhat"], cache["inv"]
        if df.shape != zhat.shape:
            raise ValueError("gradient shape mismatch")
        N = df.shape[0]
        grads = {"neck.scale": np.sum(df * zhat, axis=0)}
        dzhat = df * self.params["neck.scale"]
        dz = inv / N * (N * dzhat - dzhat.sum(axis=0) - zhat * np.sum(dzhat * zhat, axis=0))
        if self.raw_input:
            grads["x"] = dz.reshape(cache["x_shape"])
            return grads
        if self.pool_relu:
            dz = dz * (cache["z"] > 0)
        grads["proj.w"] = dz.T @ cache["flat"]
        grads["proj.b"] = dz.sum(axis=0)
        dflat = dz @ self.params["proj.w"]
        da = dflat.reshape(cache["a"].shape) * (cache["a"] > 0)
        dh, dgamma, dbeta, dalpha = aibn_backward(da, cache["aibn"], self.aibn)
        grads["aibn.gamma"] = dgamma
        grads["aibn.beta"] = dbeta
        grads["aibn.alpha"] = dalpha
        grads["mix"] = np.einsum("nol,ncl->oc", dh, cache["x"])
        grads["x"] = np.einsum("oc,nol->ncl", self.params["mix"], dh)
        return grads

    def encode(self, x: np.ndarray, mode: str = "eval", chunk: int = 4096) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if mode != "eval" or len(x) <= chunk:
            return self.forward(x, mode)[0]
        return np.concatenate(
            [self.forward(x[i:i + chunk], mode)[0] for i in range(0, len(x), chunk)]
        )

    def pooled(self, x: np.ndarray, chunk: int = 4096) -> np.ndarray:
        """Eval-mode features ahead of the neck."""
        x = np.asarray(x, dtype=np.float64)
        return np.concatenate(
            [self.forward(x[i:i + chunk], "eval")[1]["pooled"] for i in range(0, len(x), chunk)]
        )

    def copy(self) -> "EncoderModel":
        clone = object.__new__(EncoderModel)
        clone.__dict__.update(self.__dict__)
        clone.params = {k: v.copy() for k, v in self.params.items()}
        clone.neck_running_mean = self.neck_running_mean.copy()
        clone.neck_running_var = self.neck_running_var.copy()
        if self.aibn is not None:
            a = self.aibn
            clone.aibn = AibnState(
                a.channels, a.sharing, a.alpha_init, a.learn_alpha, a.eps, a.momentum,
                clone.params["aibn.alpha"], clone.params["aibn.gamma"],
                clone.params["aibn.beta"], a.running_mean.copy(), a.running_var.copy(),
            )
            clone._link_aibn()
        return clone
