"""Stepsize limits and the error-bound series used to check runs against theory.

Iteration ``k`` in every series means "after ``k`` gradient steps", matching the
rows of a :class:`~neardgd.accounting.RunTrace`; index 0 is the initial point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .objectives import GroundTruth, LocalObjectiveSet, aggregate_constants
from .schedules import ConsensusSchedule
from .topology import ConsensusMatrix

__all__ = [
    "TheoryBounds",
    "DgdtBounds",
    "max_stepsize",
    "theory_bounds",
    "dgdt_bounds",
]

# slack for alpha exactly at its limit
_ALPHA_RTOL = 1e-12


def _c2_c4(objectives: LocalObjectiveSet) -> tuple[float, float, float]:
    L, L_bar, mu_bar = aggregate_constants(objectives)
    c2 = 2.0 * mu_bar * L_bar / (mu_bar + L_bar)
    c4 = 2.0 / (mu_bar + L_bar)
    return L, c2, c4


def max_stepsize(method: str, objectives: LocalObjectiveSet, W: ConsensusMatrix, t: int = 1) -> float:
    """Largest theory-safe constant stepsize.

    ``dgd``/``dgd_t`` use ``min{(1 + lambda_n(W^t))/L, c4}`` with ``lambda_n(W^t)``
    taken from the eigenvalues of ``W`` raised to ``t``; ``near_dgd`` uses
    ``min{1/L, c4}``.
    """
    L, _, c4 = _c2_c4(objectives)
    if method in ("dgd", "dgd_t"):
        t = 1 if method == "dgd" else t
        return min((1.0 + W.lambda_min_power(t)) / L, c4)
    if method == "near_dgd":
        return min(1.0 / L, c4)
    raise ValueError(f"unknown method {method!r}")


def _check_alpha(alpha: float, limit: float, c2: float, what: str) -> None:
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    if alpha > limit * (1 + _ALPHA_RTOL):
        raise ValueError(f"alpha={alpha} exceeds the {what} limit {limit}; bounds would be vacuous")
    if alpha * c2 >= 1.0:
        raise ValueError(f"alpha*c2={alpha * c2} >= 1; delta is undefined")


@dataclass(frozen=True)
class TheoryBounds:
    """Constants for the alternating (consensus then gradient) method.

    ``bound_series`` evaluates the per-step recursion
    ``e_k^2 <= c1^2 e_{k-1}^2 + c3^2 beta^(2 t(k))`` for the configured schedule.
    """

    alpha: float
    L: float
    beta: float
    c1: float
    c2: float
    c3: float
    c4: float
    delta: float
    D: float
    nu: float
    gamma: float
    e0: float
    schedule: ConsensusSchedule

    def fixed_series(self, k_max: int, t: int | None = None) -> np.ndarray:
        """Closed-form fixed-``t`` bound ``c1^k e0 + (L D beta^t / c2) sqrt(2(2 - alpha c2))``."""
        t = self.schedule.t if t is None else t
        k = np.arange(k_max + 1)
        tail = self.L * self.D * self.beta**t / self.c2 * math.sqrt(2 * (2 - self.alpha * self.c2))
        return self.c1**k * self.e0 + tail

    def bound_series(self, k_max: int) -> np.ndarray:
        out = np.empty(k_max + 1)
        out[0] = e2 = self.e0**2
        c1sq, c3sq = self.c1**2, self.c3**2
        for k in range(1, k_max + 1):
            e2 = c1sq * e2 + c3sq * self.beta ** (2 * self.schedule(k))
            out[k] = e2
        return np.sqrt(out)

    @property
    def C(self) -> float:
        return max(self.e0, 2 * self.c3 / math.sqrt(self.alpha * self.c2))

    @property
    def rho(self) -> float:
        return max(self.beta, math.sqrt(1 - self.alpha * self.c2 / 4))

    def rlinear_series(self, k_max: int) -> np.ndarray:
        """``C rho^k``; valid for the linear schedule."""
        return self.C * self.rho ** np.arange(k_max + 1)


def theory_bounds(
    objectives: LocalObjectiveSet,
    W: ConsensusMatrix,
    alpha: float,
    schedule: ConsensusSchedule,
    truth: GroundTruth,
    y0: np.ndarray | None = None,
) -> TheoryBounds:
    """Constants for the alternating method started from the stacked point ``y0``
    (zeros by default).

    ``alpha`` must be strictly below ``1/L`` and at most ``c4``.
    """
    L, c2, c4 = _c2_c4(objectives)
    limit = min(1.0 / L, c4)
    _check_alpha(alpha, limit, c2, "min{1/L, c4}")
    if alpha * L >= 1.0:
        raise ValueError(f"alpha={alpha} must be strictly below 1/L={1.0 / L}")
    n, p = objectives.n, objectives.p
    y0 = np.zeros((n, p)) if y0 is None else np.asarray(y0, dtype=float).reshape(n, p)
    gamma = float(np.min(objectives.mu * objectives.L / (objectives.mu + objectives.L)))
    nu = 2 * alpha * gamma
    u_star = objectives.local_minimizers()
    D = float(np.linalg.norm(y0 - u_star) + (nu + 4) / nu * np.linalg.norm(u_star))
    delta = c2 / (2 * (1 - alpha * c2))
    c1 = math.sqrt(1 - alpha * c2 + alpha * delta - alpha**2 * delta * c2)
    c3 = math.sqrt(alpha * (alpha + 1 / delta)) * D * L
    e0 = float(np.linalg.norm(y0.mean(axis=0) - truth.x_star))
    return TheoryBounds(
        alpha=alpha, L=L, beta=W.beta, c1=c1, c2=c2, c3=c3, c4=c4, delta=delta,
        D=D, nu=nu, gamma=gamma, e0=e0, schedule=schedule,
    )


@dataclass(frozen=True)
class DgdtBounds:
    """Constants for ``t`` consensus rounds per step with the gradient at the
    pre-consensus point, started from zero."""

    alpha: float
    t: int
    beta: float
    c1: float
    c2: float
    c3: float
    D: float
    e0: float

    @property
    def neighborhood(self) -> float:
        return self.c3 / (math.sqrt(1 - self.c1**2) * (1 - self.beta**self.t))

    def bound_series(self, k_max: int) -> np.ndarray:
        return self.c1 ** np.arange(k_max + 1) * self.e0 + self.neighborhood


def dgdt_bounds(
    objectives: LocalObjectiveSet,
    W: ConsensusMatrix,
    alpha: float,
    t: int,
    truth: GroundTruth,
) -> DgdtBounds:
    """Bound on ``||x_bar_k - x*||`` for zero-initialized DGD^t.

    ``D`` bounds the stacked gradient norm via ``sqrt(2 L sum_i (f_i(0) - f_i*))``
    with the per-agent minima ``f_i*``.
    """
    L, c2, _ = _c2_c4(objectives)
    _check_alpha(alpha, max_stepsize("dgd_t", objectives, W, t), c2, "DGD^t")
    p = objectives.p
    f0 = np.array([objectives.value(i, np.zeros(p)) for i in range(objectives.n)])
    gap = float(np.sum(f0 - objectives.local_minima()))
    D = math.sqrt(2 * L * max(gap, 0.0))
    delta = c2 / (2 * (1 - alpha * c2))
    c1 = math.sqrt(1 - alpha * c2 + alpha * delta - alpha**2 * delta * c2)
    c3 = math.sqrt(alpha**3 * (alpha + 1 / delta)) * L * D
    e0 = float(np.linalg.norm(truth.x_star))
    return DgdtBounds(alpha=alpha, t=t, beta=W.beta, c1=c1, c2=c2, c3=c3, D=D, e0=e0)
