"""Central finite-difference verification of analytic gradients."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

REL_FLOOR = 1e-6


@dataclass
class GradCheckReport:
    name: str
    max_rel_error: float
    tol: float
    probes: list[tuple[str, int, float, float]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(self.max_rel_error <= self.tol)

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.name}: max rel err {self.max_rel_error:.2e} "
                f"over {len(self.probes)} probes (tol {self.tol:.0e})")


def relative_error(analytic: float, numeric: float) -> float:
    """|a - n| / max(|a|, |n|, REL_FLOOR); the floor keeps vanishing
    gradients from amplifying round-off."""
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), REL_FLOOR)


def grad_check(
    loss_fn: Callable[[], float],
    params: dict[str, np.ndarray],
    analytic: dict[str, np.ndarray],
    n_probes: int = 20,
    h: float = 1e-5,
    tol: float = 1e-4,
    rng: np.random.Generator | None = None,
    name: str = "grad_check",
) -> GradCheckReport:
    """Probe ``n_probes`` random scalar entries across ``params``.

    ``loss_fn`` must read the arrays in ``params`` (they are perturbed in
    place and restored). ``analytic`` holds the gradients to verify.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    names = [k for k in params if params[k].size]
    report = GradCheckReport(name, 0.0, tol)
    for _ in range(n_probes):
        k = names[int(rng.integers(len(names)))]
        idx = int(rng.integers(params[k].size))
        p = params[k].reshape(-1)
        old = p[idx]
        p[idx] = old + h
        up = loss_fn()
        p[idx] = old - h
        down = loss_fn()
        p[idx] = old
        numeric = (up - down) / (2 * h)
        a = float(analytic[k].reshape(-1)[idx])
        err = relative_error(a, numeric)
        report.probes.append((k, idx, a, numeric))
        report.max_rel_error = max(report.max_rel_error, err)
    return report
