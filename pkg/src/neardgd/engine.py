"""Consensus and gradient operators, the four method recursions and the run loop.

All methods share the stacked layout of :mod:`neardgd.topology`: an iterate is
an ``(n, p)`` array whose row ``i`` belongs to agent ``i``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .accounting import RunTrace, TraceRecorder, consensus_error, relative_error
from .objectives import GroundTruth, LocalObjectiveSet
from .schedules import ConsensusSchedule
from .theory import max_stepsize, theory_bounds
from .topology import ConsensusMatrix, consensus_apply

__all__ = [
    "METHODS",
    "DIVERGENCE_THRESHOLD",
    "DivergenceError",
    "MethodConfig",
    "method_from_label",
    "consensus_operator",
    "gradient_operator",
    "dgd_step",
    "dgdt_step",
    "near_dgd_step",
    "resolve_alpha",
    "run",
    "max_stepsize",
    "theory_bounds",
]

METHODS = ("dgd", "dgd_t", "near_dgd")
DIVERGENCE_THRESHOLD = 1e12


class DivergenceError(FloatingPointError):
    """Raised when an iterate blows up; ``k`` is the offending iteration."""

    def __init__(self, k: int, message: str, trace: RunTrace | None = None):
        super().__init__(f"iteration {k}: {message}")
        self.k = k
        self.trace = trace


@dataclass(frozen=True)
class MethodConfig:
    """One method run.

    ``alpha=None`` means ``alpha_scale * max_stepsize``. ``init`` is a shared
    starting point for every agent (zeros when ``None``); only the alternating
    method accepts a nonzero start.
    """

    method: str
    schedule: ConsensusSchedule = field(default_factory=ConsensusSchedule)
    gradient_steps: int = 1
    alpha: float | None = None
    alpha_scale: float = 0.9
    max_iters: int = 1000
    init: tuple[float, ...] | None = None
    label: str = ""

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.alpha is not None and not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not self.alpha_scale > 0:
            raise ValueError(f"alpha_scale must be positive, got {self.alpha_scale}")
        if self.max_iters < 0:
            raise ValueError(f"max_iters must be >= 0, got {self.max_iters}")
        if self.gradient_steps < 1:
            raise ValueError(f"gradient_steps must be >= 1, got {self.gradient_steps}")
        if self.method != "near_dgd":
            if self.schedule.kind != "fixed":
                raise ValueError(f"{self.method} needs a fixed schedule, got {self.schedule}")
            if self.method == "dgd" and self.schedule.t != 1:
                raise ValueError("dgd uses exactly one consensus round; use dgd_t")
            if self.gradient_steps != 1:
                raise ValueError(f"{self.method} takes one gradient step per iteration")
            if self.init is not None and any(v != 0 for v in self.init):
                raise ValueError(f"{self.method} must start from zero")
        if not self.label:
            object.__setattr__(self, "label", default_label(self))

    @property
    def has_theory(self) -> bool:
        return self.gradient_steps == 1


def default_label(cfg: MethodConfig) -> str:
    s = cfg.schedule
    if cfg.method == "dgd":
        return "DGD"
    if cfg.method == "dgd_t":
        return f"DGD^{s.t}"
    c = {"fixed": "-", "linear": "k", "logarithmic": "log"}.get(s.kind, str(s.period))
    plus = "" if s.kind == "fixed" else "+"
    return f"NEAR-DGD{plus}({cfg.gradient_steps},{s.t if s.kind in ('fixed', 'doubling') else 1},{c})"


_NEAR_RE = re.compile(r"^NEAR-DGD(\+)?\((\d+),(\d+),([^)]+)\)$")


def method_from_label(label: str, **kw) -> MethodConfig:
    """Build a config from a display label.

    Accepted forms: ``DGD``, ``DGD^t``, ``NEAR-DGD``, ``NEAR-DGD^t`` and
    ``NEAR-DGD(a,b,c)`` (an optional ``+`` after ``DGD``) where ``a`` is the
    number of gradient substeps, ``b`` the initial round count and ``c`` one of
    ``-`` (fixed), ``k`` (linear), ``log`` or an integer doubling period.
    """
    key = re.sub(r"\s+", "", label)
    if key.upper() == "DGD":
        return MethodConfig("dgd", label=label, **kw)
    m = re.fullmatch(r"DGD\^?(\d+)", key, flags=re.I)
    if m:
        return MethodConfig("dgd_t", ConsensusSchedule("fixed", t=int(m.group(1))), label=label, **kw)
    m = re.fullmatch(r"NEAR-DGD(?:\^(\d+))?", key, flags=re.I)
    if m:
        t = int(m.group(1) or 1)
        return MethodConfig("near_dgd", ConsensusSchedule("fixed", t=t), label=label, **kw)
    m = _NEAR_RE.match(key.upper())
    if not m:
        raise ValueError(f"cannot parse method label {label!r}")
    plus, a, b, c = m.group(1), int(m.group(2)), int(m.group(3)), m.group(4).lower()
    if c == "-":
        sched = ConsensusSchedule("fixed", t=b)
    elif c == "k":
        if b != 1:
            raise ValueError(f"{label!r}: the linear schedule t(k)=k starts at 1, got b={b}")
        sched = ConsensusSchedule("linear")
    elif c == "log":
        if b != 1:
            raise ValueError(f"{label!r}: the logarithmic schedule starts at 1, got b={b}")
        sched = ConsensusSchedule("logarithmic")
    elif c.isdigit():
        sched = ConsensusSchedule("doubling", t=b, period=int(c))
    else:
        raise ValueError(f"{label!r}: unknown schedule code {c!r}")
    if bool(plus) != (sched.kind != "fixed"):
        raise ValueError(f"{label!r}: '+' marks exactly the growing schedules")
    return MethodConfig("near_dgd", sched, gradient_steps=a, label=label, **kw)


def consensus_operator(W: ConsensusMatrix, x: np.ndarray) -> np.ndarray:
    """One round of mixing."""
    return consensus_apply(W, x, 1)


def _gradients(objectives: LocalObjectiveSet, x: np.ndarray, k: int = -1) -> np.ndarray:
    G = objectives.gradients(x)
    if not np.isfinite(G).all():
        raise DivergenceError(k, "non-finite local gradient")
    return G


def gradient_operator(objectives: LocalObjectiveSet, alpha: float, x: np.ndarray) -> np.ndarray:
    """Blockwise ``x_i - alpha grad f_i(x_i)``."""
    return x - alpha * _gradients(objectives, x)


def dgd_step(W, objectives, alpha, x):
    return dgdt_step(W, 1, objectives, alpha, x)


def dgdt_step(W, t, objectives, alpha, x):
    """``Z^t x - alpha grad f(x)``; the gradient is taken before mixing."""
    return _dgdt(W, t, objectives, alpha, x)[0]


def near_dgd_step(W, t, objectives, alpha, a, y):
    """Return ``(x_k, y_{k+1})`` with ``x_k = Z^t y_k`` followed by ``a`` gradient steps."""
    x, y_next, _ = _near(W, t, objectives, alpha, a, y)
    return x, y_next


def _dgdt(W, t, objectives, alpha, x, k=-1):
    G = _gradients(objectives, x, k)
    return consensus_apply(W, x, t) - alpha * G, G.mean(axis=0)


def _near(W, t, objectives, alpha, a, y, k=-1):
    x = consensus_apply(W, y, t)
    z = x
    g_mean = np.zeros(x.shape[1])
    for _ in range(a):
        G = _gradients(objectives, z, k)
        g_mean += G.mean(axis=0)
        z = z - alpha * G
    return x, z, g_mean


def resolve_alpha(cfg: MethodConfig, objectives: LocalObjectiveSet, W: ConsensusMatrix) -> tuple[float, str]:
    if cfg.alpha is not None:
        return float(cfg.alpha), "explicit"
    t = cfg.schedule.t if cfg.method == "dgd_t" else 1
    bound = max_stepsize(cfg.method, objectives, W, t)
    return cfg.alpha_scale * bound, f"{cfg.alpha_scale!r}*max_stepsize"


def run(
    cfg: MethodConfig,
    W: ConsensusMatrix,
    objectives: LocalObjectiveSet,
    truth: GroundTruth,
    recorder: TraceRecorder | None = None,
    *,
    manifest: dict | None = None,
) -> RunTrace:
    """Execute ``cfg.max_iters`` iterations and return the recorded trace.

    Row ``k`` describes the state after ``k`` gradient steps: ``rel_err`` uses
    the block mean of the newest iterate and ``cons_err`` uses the blocks the
    last gradient was evaluated at (``x_k`` for the alternating method). With
    ``keep_means`` the recorder also stores the block mean before the first
    step and the mean gradient of every step.

    Raises :class:`DivergenceError` (carrying the partial trace) when the
    relative error exceeds ``DIVERGENCE_THRESHOLD`` or stops being finite.
    """
    if W.n != objectives.n:
        raise ValueError(f"W has {W.n} agents but the problem has {objectives.n}")
    recorder = recorder or TraceRecorder()
    alpha, rule = resolve_alpha(cfg, objectives, W)
    n, p = objectives.n, objectives.p
    if cfg.init is None:
        y = np.zeros((n, p))
    else:
        s0 = np.asarray(cfg.init, dtype=float)
        if s0.shape != (p,):
            raise ValueError(f"init must have length {p}, got {s0.shape}")
        y = np.tile(s0, (n, 1))
    x_star = truth.x_star
    info = {
        "label": cfg.label,
        "method": cfg.method,
        "schedule": str(cfg.schedule),
        "gradient_steps": cfg.gradient_steps,
        "alpha": repr(alpha),
        "alpha_rule": rule,
        "max_iters": cfg.max_iters,
        "init": "zeros" if cfg.init is None else " ".join(repr(float(v)) for v in cfg.init),
        "theory": "covered" if cfg.has_theory else "no convergence guarantee (a>1)",
        "problem": objectives.describe(),
        "topology": W.topology.describe() if W.topology is not None else f"custom(n={n})",
        "beta": repr(W.beta),
        "lambda_min": repr(W.lambda_min),
        "initial_rel_err": repr(relative_error(y.mean(axis=0), x_star)),
    }
    info.update(manifest or {})
    recorder.record_mean(y.mean(axis=0))

    comm = grads = evals = 0
    near = cfg.method == "near_dgd"
    a = cfg.gradient_steps
    for k in range(1, cfg.max_iters + 1):
        t = cfg.schedule(k)
        try:
            if near:
                local, y, g_mean = _near(W, t, objectives, alpha, a, y, k)
            else:
                local, g_mean = _dgdt(W, t, objectives, alpha, y, k)
                y = local
        except DivergenceError as exc:
            raise DivergenceError(k, str(exc), recorder.finish({**info, "status": f"diverged@{k}"})) from None
        comm += t
        grads += a
        evals += a * n
        mean = y.mean(axis=0)
        rel = relative_error(mean, x_star)
        if not np.isfinite(rel) or rel > DIVERGENCE_THRESHOLD:
            trace = recorder.finish({**info, "status": f"diverged@{k}"})
            raise DivergenceError(k, f"relative error {rel!r} beyond {DIVERGENCE_THRESHOLD:g}", trace)
        cons = consensus_error(local, x_star)
        recorder.record(k, t, comm, grads, evals, rel, cons, force=k == cfg.max_iters)
        recorder.record_mean(mean, g_mean)
    return recorder.finish({**info, "status": "ok"})
