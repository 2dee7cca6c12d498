"""Finite-difference checks for every differentiable operation.

Each check builds a random instance, contracts the operation's output with
a fixed random tensor to get a scalar loss, and compares the analytic
gradients against central differences.
"""
from __future__ import annotations

import numpy as np

from .aibn import AibnState, aibn_backward, aibn_forward
from .gradcheck import GradCheckReport, grad_check
from .losses import ClassifierHead, batch_hard_triplet, softmax_ce
from .model import EncoderModel

CHECK_NAMES = ("aibn", "encode", "softmax_ce", "batch_hard_triplet", "neck")


def check_aibn(rng, n_probes=20, h=1e-5, tol=1e-4) -> GradCheckReport:
    x = rng.normal(size=(4, 3, 5))
    state = AibnState(3, sharing="channel")
    state.alpha[:] = rng.uniform(0.2, 0.8, size=3)
    state.gamma[:] = rng.uniform(0.5, 1.5, size=3)
    state.beta[:] = rng.normal(size=3)
    R = rng.normal(size=x.shape)
    params = {"x": x, "gamma": state.gamma, "beta": state.beta, "alpha": state.alpha}

    def loss():
        return float(np.sum(aibn_forward(x, state, "train")[0] * R))

    _, cache = aibn_forward(x, state, "train")
    dx, dg, db, da = aibn_backward(R, cache, state)
    analytic = {"x": dx, "gamma": dg, "beta": db, "alpha": da}
    return grad_check(loss, params, analytic, n_probes, h, tol, rng, "aibn")


def check_encode(rng, n_probes=20, h=1e-5, tol=1e-4) -> GradCheckReport:
    """Composite: encoder (train mode) into a classifier head with CE."""
    model = EncoderModel(3, 6, mix_channels=4, dim=5, rng=rng)
    model.aibn.alpha[:] = 0.4
    x = rng.normal(size=(6, 3, 6))
    head = ClassifierHead.init(3, 5, rng, std=0.5)
    labels = np.array([0, 1, 2, 0, 1, 2])
    params = dict(model.params)
    params["x"] = x

    def loss():
        f, _ = model.forward(x, "train")
        return softmax_ce(head, f, labels)[0]

    f, cache = model.forward(x, "train")
    _, g = softmax_ce(head, f, labels)
    analytic = model.backward(g["f"], cache)
    return grad_check(loss, params, analytic, n_probes, h, tol, rng, "encode")


def check_softmax_ce(rng, n_probes=20, h=1e-5, tol=1e-4) -> GradCheckReport:
    head = ClassifierHead.init(4, 6, rng, std=1.0)
    head.bias[:] = rng.normal(size=4)
    f = rng.normal(size=(5, 6))
    labels = rng.integers(0, 4, size=5)
    params = {"w": head.weights, "b": head.bias, "f": f}

    def loss():
        return softmax_ce(head, f, labels)[0]

    _, g = softmax_ce(head, f, labels)
    return grad_check(loss, params, g, n_probes, h, tol, rng, "softmax_ce")


def check_batch_hard_triplet(rng, n_probes=20, h=1e-5, tol=1e-4) -> GradCheckReport:
    labels = np.repeat(np.arange(4), 3)
    emb = rng.normal(size=(12, 5))
    # margin large enough that every anchor's hinge is active
    margin = 10.0

    def loss():
        return batch_hard_triplet(emb, labels, margin)[0]

    _, g = batch_hard_triplet(emb, labels, margin)
    return grad_check(loss, {"emb": emb}, {"emb": g}, n_probes, h, tol, rng,
                      "batch_hard_triplet")


def check_neck(rng, n_probes=20, h=1e-5, tol=1e-4) -> GradCheckReport:
    model = EncoderModel(1, 6, raw_input=True)
    model.params["neck.scale"][:] = rng.uniform(0.5, 1.5, size=6)
    x = rng.normal(size=(5, 1, 6))
    R = rng.normal(size=(5, 6))
    params = {"x": x, "neck.scale": model.params["neck.scale"]}

    def loss():
        return float(np.sum(model.forward(x, "train")[0] * R))

    _, cache = model.forward(x, "train")
    analytic = model.backward(R, cache)
    return grad_check(loss, params, analytic, n_probes, h, tol, rng, "neck")


CHECKS = {
    "aibn": check_aibn,
    "encode": check_encode,
    "softmax_ce": check_softmax_ce,
    "batch_hard_triplet": check_batch_hard_triplet,
    "neck": check_neck,
}


def run_all(seed: int = 0, n_probes: int = 20, h: float = 1e-5,
            tol: float = 1e-4) -> list[GradCheckReport]:
    rng = np.random.default_rng(seed)
    return [CHECKS[name](rng, n_probes, h, tol) for name in CHECK_NAMES]
