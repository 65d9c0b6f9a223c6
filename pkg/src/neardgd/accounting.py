"""Communication/computation cost model, error metrics and run traces."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "CostModel",
    "RunTrace",
    "TraceRecorder",
    "cost_series",
    "relative_error",
    "consensus_error",
    "write_trace_csv",
    "read_trace_csv",
    "TRACE_COLUMNS",
]

TRACE_COLUMNS = ("k", "t_k", "comm_rounds", "grad_rounds", "rel_err", "cons_err", "cost")


def _num(x: float) -> str:
    x = float(x)
    return str(int(x)) if x.is_integer() else repr(x)


@dataclass(frozen=True)
class CostModel:
    """Cost = comm_rounds * c_c + grad_rounds * c_g."""

    c_c: float = 1.0
    c_g: float = 1.0

    def __post_init__(self):
        if self.c_c < 0 or self.c_g < 0:
            raise ValueError(f"costs must be nonnegative, got c_c={self.c_c}, c_g={self.c_g}")
        if self.c_c == 0 and self.c_g == 0:
            raise ValueError("c_c and c_g cannot both be zero")

    @classmethod
    def parse(cls, text: str) -> "CostModel":
        cc, sep, cg = text.strip().partition(":")
        if not sep:
            raise ValueError(f"cost model {text!r} must look like c_c:c_g")
        return cls(float(cc), float(cg))

    @property
    def column(self) -> str:
        return f"cost_cc{_num(self.c_c)}_cg{_num(self.c_g)}"

    def __str__(self):
        return f"{_num(self.c_c)}:{_num(self.c_g)}"


def relative_error(x_bar: np.ndarray, x_star: np.ndarray) -> float:
    """``||x_bar - x*||^2 / ||x*||^2``."""
    denom = float(x_star @ x_star)
    if denom == 0.0:
        raise ValueError("relative error undefined for x* = 0")
    d = x_bar - x_star
    return float(d @ d) / denom


def consensus_error(X: np.ndarray, x_star: np.ndarray) -> float:
    """Mean over agents of ``||x_i - x*||^2``, normalized by ``||x*||^2``."""
    denom = float(x_star @ x_star)
    if denom == 0.0:
        raise ValueError("consensus error undefined for x* = 0")
    D = X - x_star
    return float(np.einsum("ij,ij->", D, D)) / (X.shape[0] * denom)


@dataclass(eq=False)
class RunTrace:
    """Per-iteration counters and errors for one method run.

    Counters are cumulative integers; ``grad_rounds`` counts network-wide
    gradient rounds and ``grad_evals`` counts individual agent evaluations.
    """

    k: np.ndarray
    t_k: np.ndarray
    comm_rounds: np.ndarray
    grad_rounds: np.ndarray
    grad_evals: np.ndarray
    rel_err: np.ndarray
    cons_err: np.ndarray
    manifest: dict = field(default_factory=dict)
    means: np.ndarray | None = None
    mean_grads: np.ndarray | None = None
    columns: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.k)

    @property
    def label(self) -> str:
        return self.manifest.get("label", "")

    @property
    def diverged(self) -> bool:
        return self.manifest.get("status", "ok") != "ok"

    def plateau(self, fraction: float = 0.1) -> float:
        """Mean relative error over the final ``fraction`` of recorded rows."""
        if len(self) == 0:
            return float("nan")
        m = max(1, int(round(len(self) * fraction)))
        return float(np.mean(self.rel_err[-m:]))


class TraceRecorder:
    """Single-writer accumulator; ``finish`` freezes the rows into a RunTrace."""

    def __init__(self, stride: int = 1, keep_means: bool = False):
        if stride < 1:
            raise ValueError("stride must be >= 1")
        self.stride = stride
        self.keep_means = keep_means
        self._rows: list[tuple] = []
        self._means: list[np.ndarray] = []
        self._grads: list[np.ndarray] = []

    def record(self, k, t_k, comm, grads, evals, rel_err, cons_err, force=False):
        if force or k % self.stride == 0:
            if self._rows and self._rows[-1][0] == k:
                return
            self._rows.append((k, t_k, comm, grads, evals, rel_err, cons_err))

    def record_mean(self, mean: np.ndarray, mean_grad: np.ndarray | None = None):
        if self.keep_means:
            self._means.append(mean.copy())
            if mean_grad is not None:
                self._grads.append(mean_grad.copy())

    def finish(self, manifest: dict) -> RunTrace:
        rows = self._rows
        ints = lambda j: np.array([r[j] for r in rows], dtype=np.int64)
        floats = lambda j: np.array([r[j] for r in rows], dtype=float)
        manifest = dict(manifest)
        manifest.setdefault("stride", self.stride)
        return RunTrace(
            k=ints(0), t_k=ints(1), comm_rounds=ints(2), grad_rounds=ints(3),
            grad_evals=ints(4), rel_err=floats(5), cons_err=floats(6), manifest=manifest,
            means=np.array(self._means) if self.keep_means else None,
            mean_grads=np.array(self._grads) if self.keep_means else None,
        )


def cost_series(trace: RunTrace, model: CostModel) -> np.ndarray:
    """Cumulative cost per recorded row; integer counters are multiplied last."""
    return trace.comm_rounds * model.c_c + trace.grad_rounds * model.c_g


def write_trace_csv(
    trace: RunTrace,
    path: str | os.PathLike,
    cost_models: list[CostModel] | None = None,
    timestamp: str | None = None,
) -> Path:
    """Write a trace with ``#`` manifest lines, a header row and full-precision rows.

    ``cost`` uses the first cost model; every model also gets its own column.
    """
    models = list(cost_models or [CostModel()])
    costs = [cost_series(trace, m) for m in models]
    header = list(TRACE_COLUMNS) + ["grad_evals"] + [m.column for m in models]
    path = Path(path)
    with open(path, "w", newline="") as fh:
        manifest = dict(trace.manifest)
        manifest["cost_models"] = ",".join(str(m) for m in models)
        for key, val in manifest.items():
            fh.write(f"# {key}={val}\n")
        if timestamp is not None:
            fh.write(f"# timestamp={timestamp}\n")
        fh.write(",".join(header) + "\n")
        for r in range(len(trace)):
            cells = [
                str(trace.k[r]), str(trace.t_k[r]), str(trace.comm_rounds[r]),
                str(trace.grad_rounds[r]), repr(float(trace.rel_err[r])),
                repr(float(trace.cons_err[r])), repr(float(costs[0][r])),
                str(trace.grad_evals[r]),
            ]
            cells += [repr(float(c[r])) for c in costs]
            fh.write(",".join(cells) + "\n")
    return path


def read_trace_csv(path: str | os.PathLike) -> RunTrace:
    manifest, header, rows = {}, None, []
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition("=")
                manifest[key] = val
            elif header is None:
                header = line.split(",")
            elif line:
                rows.append(line.split(","))
    if header is None or tuple(header[: len(TRACE_COLUMNS)]) != TRACE_COLUMNS:
        raise ValueError(f"{path}: not a trace file (header {header})")
    cols = {name: [r[j] for r in rows] for j, name in enumerate(header)}
    as_int = lambda name: np.array([int(v) for v in cols.get(name, [])], dtype=np.int64)
    as_float = lambda name: np.array([float(v) for v in cols.get(name, [])], dtype=float)
    trace = RunTrace(
        k=as_int("k"), t_k=as_int("t_k"), comm_rounds=as_int("comm_rounds"),
        grad_rounds=as_int("grad_rounds"), grad_evals=as_int("grad_evals"),
        rel_err=as_float("rel_err"), cons_err=as_float("cons_err"), manifest=manifest,
        columns={name: as_float(name) for name in header if name.startswith("cost")},
    )
    return trace
