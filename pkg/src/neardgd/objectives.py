"""Local objective families, their curvature constants and reference optima."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg
from scipy.special import expit
from scipy.stats import ortho_group

__all__ = [
    "LocalObjectiveSet",
    "QuadraticProblem",
    "LogisticProblem",
    "GroundTruth",
    "ConvergenceError",
    "generate_quadratic",
    "quadratic_optimum",
    "build_logistic",
    "centralized_solve",
    "aggregate_constants",
    "save_problem",
    "load_problem",
]


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class GroundTruth:
    x_star: np.ndarray
    f_star: float
    tolerance: float
    iterations: int = 0

    @property
    def norm_sq(self) -> float:
        return float(self.x_star @ self.x_star)


class LocalObjectiveSet:
    """``n`` smooth strongly convex functions ``f_i: R^p -> R``.

    Subclasses provide ``value``/``grad`` for one agent and the per-agent
    constants ``L`` (gradient Lipschitz) and ``mu`` (strong convexity).
    """

    n: int
    p: int
    L: np.ndarray
    mu: np.ndarray

    def value(self, i: int, x: np.ndarray) -> float:
        raise NotImplementedError

    def grad(self, i: int, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def gradients(self, X: np.ndarray) -> np.ndarray:
        """Stacked local gradients, row ``i`` evaluated at ``X[i]``."""
        return np.stack([self.grad(i, X[i]) for i in range(self.n)])

    def total_value(self, x: np.ndarray) -> float:
        return float(sum(self.value(i, x) for i in range(self.n)))

    def total_grad(self, x: np.ndarray) -> np.ndarray:
        g = self.grad(0, x)
        for i in range(1, self.n):
            g = g + self.grad(i, x)
        return g

    def agent(self, i: int) -> "LocalObjectiveSet":
        return _SingleAgent(self, i)

    def local_minimizers(self) -> np.ndarray:
        """Per-agent minimizers ``u_i*`` stacked as ``(n, p)``."""
        cached = getattr(self, "_u_star", None)
        if cached is None:
            cached = self._local_minimizers()
            object.__setattr__(self, "_u_star", cached)
        return cached

    def _local_minimizers(self) -> np.ndarray:
        rows = []
        for i in range(self.n):
            single = self.agent(i)
            tol = 1e-12 * (1.0 + np.linalg.norm(single.total_grad(np.zeros(self.p))))
            rows.append(centralized_solve(single, tol).x_star)
        return np.stack(rows)

    def local_minima(self) -> np.ndarray:
        u = self.local_minimizers()
        return np.array([self.value(i, u[i]) for i in range(self.n)])

    def describe(self) -> str:
        return type(self).__name__


class _SingleAgent(LocalObjectiveSet):
    def __init__(self, parent: LocalObjectiveSet, i: int):
        self.parent, self.i = parent, i
        self.n, self.p = 1, parent.p
        self.L = parent.L[i : i + 1]
        self.mu = parent.mu[i : i + 1]

    def value(self, i, x):
        return self.parent.value(self.i, x)

    def grad(self, i, x):
        return self.parent.grad(self.i, x)


@dataclass(eq=False)
class QuadraticProblem(LocalObjectiveSet):
    """``f_i(x) = 1/2 x^T A_i x + b_i^T x`` with symmetric positive definite ``A_i``."""

    A: np.ndarray
    b: np.ndarray
    kappa: float = float("nan")
    seed: int | None = None
    L: np.ndarray = field(init=False, repr=False)
    mu: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        if self.A.ndim != 3 or self.A.shape[1] != self.A.shape[2]:
            raise ValueError(f"A must have shape (n, p, p), got {self.A.shape}")
        self.n, self.p = self.A.shape[0], self.A.shape[1]
        if self.b.shape != (self.n, self.p):
            raise ValueError(f"b must have shape ({self.n}, {self.p}), got {self.b.shape}")
        if not np.allclose(self.A, self.A.transpose(0, 2, 1), rtol=0, atol=1e-12 * np.abs(self.A).max()):
            raise ValueError("every A_i must be symmetric")
        eig = np.linalg.eigvalsh(self.A)
        if (eig[:, 0] <= 0).any():
            raise ValueError("every A_i must be positive definite")
        self.L = eig[:, -1].copy()
        self.mu = eig[:, 0].copy()

    def value(self, i, x):
        return float(0.5 * x @ (self.A[i] @ x) + self.b[i] @ x)

    def grad(self, i, x):
        return self.A[i] @ x + self.b[i]

    def hessian_sum(self) -> np.ndarray:
        return self.A.sum(axis=0)

    def condition_number(self) -> float:
        eig = np.linalg.eigvalsh(self.hessian_sum())
        return float(eig[-1] / eig[0])

    def _local_minimizers(self):
        return np.stack([-np.linalg.solve(self.A[i], self.b[i]) for i in range(self.n)])

    def describe(self):
        return f"quadratic(n={self.n},p={self.p},kappa={self.kappa!r},seed={self.seed})"


def generate_quadratic(n: int, p: int, kappa: float, seed: int) -> QuadraticProblem:
    """Random quadratic whose summed Hessian has condition number ``kappa``.

    Each ``A_i = Q_i D_i Q_i^T`` with a seeded Haar-orthogonal ``Q_i`` and
    log-uniform ``D_i`` on ``[1, kappa]``. The sum ``S`` is then corrected by a
    shared congruence ``A_i <- M A_i M`` that maps the spectrum of ``S``
    log-affinely onto ``[lambda_max/kappa, lambda_max]``; congruence keeps each
    ``A_i`` symmetric positive definite. ``b`` is standard normal, rescaled so
    ``||x*|| >= 1``.
    """
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    if p < 2:
        raise ValueError(f"a condition number needs p >= 2, got p={p}")
    if not kappa >= 1:
        raise ValueError(f"kappa must be >= 1, got {kappa}")
    rng = np.random.default_rng(seed)
    A = np.empty((n, p, p))
    for i in range(n):
        Q = ortho_group.rvs(p, random_state=rng)
        d = np.exp(rng.uniform(0.0, np.log(kappa), size=p))
        A[i] = (Q * d) @ Q.T
    A = 0.5 * (A + A.transpose(0, 2, 1))

    lam, V = np.linalg.eigh(A.sum(axis=0))
    lo, hi = lam[0], lam[-1]
    spread = np.log(hi / lo)
    if spread > 0:
        target = np.exp(np.log(hi) - (np.log(hi) - np.log(lam)) * np.log(kappa) / spread)
    else:
        target = np.full_like(lam, hi)
    M = (V * np.sqrt(target / lam)) @ V.T
    M = 0.5 * (M + M.T)
    A = np.einsum("ab,ibc,cd->iad", M, A, M)
    A = 0.5 * (A + A.transpose(0, 2, 1))

    b = rng.standard_normal((n, p))
    x_star = np.linalg.solve(A.sum(axis=0), -b.sum(axis=0))
    norm = np.linalg.norm(x_star)
    if norm < 1.0:
        b *= (1.0 + 1e-9) / norm
    return QuadraticProblem(A=A, b=b, kappa=float(kappa), seed=seed)


def quadratic_optimum(problem: QuadraticProblem) -> GroundTruth:
    """Exact minimizer of ``sum_i f_i`` by a dense symmetric solve."""
    S = problem.hessian_sum()
    rhs = -problem.b.sum(axis=0)
    if np.linalg.eigvalsh(S)[0] <= 0:
        raise linalg.LinAlgError("summed Hessian is not positive definite")
    x = linalg.solve(S, rhs, assume_a="pos")
    residual = float(np.linalg.norm(S @ x - rhs))
    return GroundTruth(x_star=x, f_star=problem.total_value(x), tolerance=residual)


@dataclass(eq=False)
class LogisticProblem(LocalObjectiveSet):
    """Regularized logistic loss split across agents.

    ``f_i(x) = c_i sum_s log(1 + exp(-b_s a_s^T x)) + c_i ||x||^2`` with
    ``c_i = 1/(n * n_i)``.
    """

    A: list[np.ndarray]
    b: list[np.ndarray]
    L: np.ndarray = field(init=False, repr=False)
    mu: np.ndarray = field(init=False, repr=False)
    scale: np.ndarray = field(init=False, repr=False)
    label: str = "logistic"

    def __post_init__(self):
        self.A = [np.ascontiguousarray(a, dtype=float) for a in self.A]
        self.b = [np.asarray(y, dtype=float) for y in self.b]
        self.n = len(self.A)
        if self.n == 0:
            raise ValueError("no shards")
        self.p = self.A[0].shape[1]
        for i, (a, y) in enumerate(zip(self.A, self.b)):
            if a.ndim != 2 or a.shape[1] != self.p:
                raise ValueError(f"shard {i} has shape {a.shape}, expected (n_i, {self.p})")
            if a.shape[0] == 0:
                raise ValueError(f"shard {i} is empty")
            if y.shape != (a.shape[0],):
                raise ValueError(f"shard {i} has {y.shape} labels for {a.shape[0]} rows")
            if not np.isin(y, (-1.0, 1.0)).all():
                raise ValueError(f"shard {i} has labels outside {{-1, +1}}")
        self.sizes = np.array([a.shape[0] for a in self.A])
        self.scale = 1.0 / (self.n * self.sizes)
        spec = np.array([np.linalg.norm(a, 2) ** 2 if a.any() else 0.0 for a in self.A])
        self.L = spec * self.scale / 4.0 + 2.0 * self.scale
        self.mu = 2.0 * self.scale

    def value(self, i, x):
        z = self.b[i] * (self.A[i] @ x)
        return float(self.scale[i] * (np.logaddexp(0.0, -z).sum() + x @ x))

    def grad(self, i, x):
        z = self.b[i] * (self.A[i] @ x)
        w = -self.b[i] * expit(-z)
        return self.scale[i] * (self.A[i].T @ w + 2.0 * x)

    def describe(self):
        return f"{self.label}(n={self.n},p={self.p},n_i={int(self.sizes.min())}..{int(self.sizes.max())})"


def build_logistic(shards, label: str = "logistic") -> LogisticProblem:
    """Build the logistic objective set from per-agent ``(A_i, b_i)`` pairs."""
    shards = list(shards)
    return LogisticProblem(A=[a for a, _ in shards], b=[y for _, y in shards], label=label)


def centralized_solve(objectives: LocalObjectiveSet, tol: float, max_iter: int = 2_000_000) -> GroundTruth:
    """Gradient descent on ``sum_i f_i`` with step ``2/(sum L_i + sum mu_i)``."""
    L_sum, mu_sum = float(np.sum(objectives.L)), float(np.sum(objectives.mu))
    if mu_sum <= 0:
        raise ValueError("sum of f_i is not strongly convex (sum mu_i = 0)")
    step = 2.0 / (L_sum + mu_sum)
    x = np.zeros(objectives.p)
    g = objectives.total_grad(x)
    for it in range(max_iter):
        gn = float(np.linalg.norm(g))
        if gn <= tol:
            return GroundTruth(x_star=x, f_star=objectives.total_value(x), tolerance=gn, iterations=it)
        x = x - step * g
        g = objectives.total_grad(x)
    raise ConvergenceError(
        f"gradient norm {np.linalg.norm(g):.3e} > {tol:.3e} after {max_iter} iterations"
    )


def aggregate_constants(objectives: LocalObjectiveSet) -> tuple[float, float, float]:
    """``(max L_i, mean L_i, mean mu_i)``."""
    L = np.asarray(objectives.L, dtype=float)
    mu = np.asarray(objectives.mu, dtype=float)
    return float(L.max()), float(L.mean()), float(mu.mean())


def _write_csv(path: Path, M: np.ndarray) -> None:
    M = np.atleast_2d(M)
    with open(path, "w") as fh:
        for row in M:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def _read_csv(path: Path) -> np.ndarray:
    with open(path) as fh:
        rows = [[float(v) for v in line.split(",")] for line in fh if line.strip()]
    return np.array(rows, dtype=float)


def save_problem(problem: LocalObjectiveSet, directory: str | os.PathLike) -> Path:
    """Write a problem as CSV matrices plus a ``manifest.txt`` of key=value lines."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    if isinstance(problem, QuadraticProblem):
        meta = {"family": "quadratic", "n": problem.n, "p": problem.p,
                "kappa": repr(problem.kappa), "seed": problem.seed}
        for i in range(problem.n):
            _write_csv(d / f"A_{i}.csv", problem.A[i])
        _write_csv(d / "b.csv", problem.b)
    elif isinstance(problem, LogisticProblem):
        meta = {"family": "logistic", "n": problem.n, "p": problem.p, "label": problem.label}
        for i in range(problem.n):
            _write_csv(d / f"A_{i}.csv", problem.A[i])
            _write_csv(d / f"b_{i}.csv", problem.b[i][None, :])
    else:
        raise TypeError(f"cannot serialize {type(problem).__name__}")
    with open(d / "manifest.txt", "w") as fh:
        for key, val in meta.items():
            fh.write(f"{key}={val}\n")
    return d


def load_problem(directory: str | os.PathLike) -> LocalObjectiveSet:
    d = Path(directory)
    meta = {}
    with open(d / "manifest.txt") as fh:
        for line in fh:
            if "=" in line:
                key, val = line.rstrip("\n").split("=", 1)
                meta[key] = val
    n, p = int(meta["n"]), int(meta["p"])
    if meta["family"] == "quadratic":
        A = np.stack([_read_csv(d / f"A_{i}.csv") for i in range(n)])
        b = _read_csv(d / "b.csv").reshape(n, p)
        seed = None if meta["seed"] == "None" else int(meta["seed"])
        return QuadraticProblem(A=A, b=b, kappa=float(meta["kappa"]), seed=seed)
    if meta["family"] == "logistic":
        shards = [(_read_csv(d / f"A_{i}.csv").reshape(-1, p), _read_csv(d / f"b_{i}.csv").ravel())
                  for i in range(n)]
        return build_logistic(shards, label=meta.get("label", "logistic"))
    raise ValueError(f"unknown problem family {meta['family']!r}")
