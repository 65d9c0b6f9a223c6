"""Config-driven experiment suites: problem construction, runs, summaries and plot data.

Config files are INI-style (``configparser``)::

    [experiment]
    max_iters = 5000
    output_dir = out/suite_a

    [problem]
    type = quadratic
    n = 10
    p = 10
    kappa = 100
    seed = 7

    [topology]
    kind = cyclic_k
    k = 4

    [costs]
    models = 1:10, 1:1, 10:1

    [methods]
    labels = DGD, DGD^2, DGD^5, DGD^10

Optional ``[method:LABEL]`` sections override ``alpha``, ``alpha_scale`` or
``init`` for one method.
"""

from __future__ import annotations

import configparser
import csv
import io
import os
import re
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .accounting import CostModel, RunTrace, TraceRecorder, cost_series, write_trace_csv
from .datasets import partition, read_sparse_file, synthetic_classification
from .engine import DivergenceError, MethodConfig, method_from_label, run
from .objectives import (
    GroundTruth,
    LocalObjectiveSet,
    build_logistic,
    centralized_solve,
    generate_quadratic,
    quadratic_optimum,
)
from .theory import max_stepsize
from .topology import ConsensusMatrix, build_topology, metropolis_weights

__all__ = [
    "ConfigError",
    "ProblemSpec",
    "TopologySpec",
    "ExperimentConfig",
    "ExperimentResult",
    "load_config",
    "parse_config",
    "build_problem",
    "run_experiment",
    "summarize",
    "write_summary_csv",
    "emit_plot_data",
    "THRESHOLDS",
    "PLOT_AXES",
    "OUTPUT_ENV",
]

THRESHOLDS = (1e-2, 1e-4, 1e-6, 1e-8)
PLOT_AXES = ("iterations", "cost", "grad_rounds", "comm_rounds")
OUTPUT_ENV = "NEARDGD_OUTPUT_DIR"
NOT_REACHED = "not reached"


class ConfigError(ValueError):
    """Invalid experiment configuration; ``problems`` lists every bad field."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass(frozen=True)
class ProblemSpec:
    type: str = "quadratic"
    n: int = 10
    p: int = 10
    kappa: float = 100.0
    seed: int = 7
    dataset: str = "synthetic"
    partition: str = "contiguous"
    equal_shards: bool = True
    unit_scale: bool = False

    def describe(self) -> str:
        if self.type == "quadratic":
            return f"quadratic(n={self.n},p={self.p},kappa={self.kappa!r},seed={self.seed})"
        return (
            f"logistic(dataset={self.dataset},n={self.n},p={self.p},partition={self.partition},"
            f"equal_shards={self.equal_shards},unit_scale={self.unit_scale},seed={self.seed})"
        )


@dataclass(frozen=True)
class TopologySpec:
    kind: str = "cyclic_k"
    k: int | None = 4

    def build(self, n: int) -> ConsensusMatrix:
        return metropolis_weights(build_topology(self.kind, n, self.k if self.kind == "cyclic_k" else None))


@dataclass(frozen=True)
class ExperimentConfig:
    problem: ProblemSpec
    topology: TopologySpec
    methods: tuple[MethodConfig, ...]
    cost_models: tuple[CostModel, ...] = (CostModel(1, 10), CostModel(1, 1), CostModel(10, 1))
    max_iters: int = 5000
    output_dir: str = "out"
    stride: int = 1
    shared_alpha: bool = False
    alpha_scale: float = 0.9
    name: str = "experiment"

    def __post_init__(self):
        problems = []
        if not self.methods:
            problems.append("methods: at least one method is required")
        labels = [m.label for m in self.methods]
        dupes = sorted({x for x in labels if labels.count(x) > 1})
        if dupes:
            problems.append(f"methods: duplicate labels {dupes}")
        if not self.cost_models:
            problems.append("costs: at least one cost model is required")
        if self.stride < 1:
            problems.append(f"experiment.stride: must be >= 1, got {self.stride}")
        if problems:
            raise ConfigError(problems)


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _split_list(text: str) -> list[str]:
    # labels contain commas inside parentheses, so split only at depth 0
    out, depth, cur = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch in ",\n" and depth == 0:
            out.append("".join(cur).strip())
            cur = []
        else:
            cur.append(ch)
    out.append("".join(cur).strip())
    return [s for s in out if s]


def parse_config(text: str, base_dir: str | os.PathLike = ".") -> ExperimentConfig:
    """Parse config text; relative dataset and output paths resolve against ``base_dir``."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"syntax: {exc}"]) from exc
    problems: list[str] = []
    base = Path(base_dir)

    def get(section, key, conv, default):
        if not cp.has_option(section, key):
            return default
        raw = cp.get(section, key)
        try:
            return conv(raw)
        except (TypeError, ValueError) as exc:
            problems.append(f"{section}.{key}: {exc}")
            return default

    for required in ("problem", "methods"):
        if not cp.has_section(required):
            problems.append(f"[{required}]: section missing")

    ptype = get("problem", "type", str.strip, "quadratic")
    if ptype not in ("quadratic", "logistic"):
        problems.append(f"problem.type: expected quadratic or logistic, got {ptype!r}")
    dataset = get("problem", "dataset", str.strip, "synthetic")
    if ptype == "logistic" and dataset != "synthetic":
        path = Path(dataset)
        if not path.is_absolute():
            path = Path(os.path.normpath(base / path))
        if not path.exists():
            problems.append(f"problem.dataset: file {str(path)!r} does not exist")
        dataset = str(path)
    mode = get("problem", "partition", str.strip, "contiguous")
    if mode not in ("contiguous", "shuffled"):
        problems.append(f"problem.partition: expected contiguous or shuffled, got {mode!r}")
    problem = ProblemSpec(
        type=ptype,
        n=get("problem", "n", int, 10),
        p=get("problem", "p", int, 10 if ptype == "quadratic" else 114),
        kappa=get("problem", "kappa", float, 100.0),
        seed=get("problem", "seed", int, 7 if ptype == "quadratic" else 0),
        dataset=dataset,
        partition=mode,
        equal_shards=get("problem", "equal_shards", _bool, True),
        unit_scale=get("problem", "unit_scale", _bool, False),
    )
    if problem.n < 2:
        problems.append(f"problem.n: need at least 2 agents, got {problem.n}")

    kind = get("topology", "kind", str.strip, "cyclic_k")
    topo = TopologySpec(kind=kind, k=get("topology", "k", int, 4 if kind == "cyclic_k" else None))
    try:
        if problem.n >= 2:
            topo.build(problem.n)
    except ValueError as exc:
        problems.append(f"topology: {exc}")

    models = []
    for item in _split_list(get("costs", "models", str, "1:10, 1:1, 10:1")):
        try:
            models.append(CostModel.parse(item))
        except ValueError as exc:
            problems.append(f"costs.models: {exc}")

    default_iters = 5000 if ptype == "quadratic" else 10000
    max_iters = get("experiment", "max_iters", int, default_iters)
    alpha_scale = get("experiment", "alpha_scale", float, 0.9)
    methods = []
    for label in _split_list(get("methods", "labels", str, "")):
        section = f"method:{label}"
        kw = dict(max_iters=max_iters, alpha_scale=get(section, "alpha_scale", float, alpha_scale))
        alpha = get(section, "alpha", float, None)
        if alpha is not None:
            kw["alpha"] = alpha
        init = get(section, "init", lambda s: tuple(float(v) for v in s.split()), None)
        if init is not None:
            kw["init"] = init
        try:
            methods.append(method_from_label(label, **kw))
        except ValueError as exc:
            problems.append(f"methods.labels: {exc}")

    out = Path(get("experiment", "output_dir", str.strip, "out"))
    if not out.is_absolute():
        out = Path(os.path.normpath(base / out))
    try:
        cfg = ExperimentConfig(
            problem=problem,
            topology=topo,
            methods=tuple(methods),
            cost_models=tuple(models),
            max_iters=max_iters,
            output_dir=str(out),
            stride=get("experiment", "stride", int, 1),
            shared_alpha=get("experiment", "shared_alpha", _bool, False),
            alpha_scale=alpha_scale,
            name=get("experiment", "name", str.strip, "experiment"),
        )
    except ConfigError as exc:
        problems.extend(exc.problems)
        cfg = None
    if problems:
        raise ConfigError(problems)
    return cfg


def load_config(path: str | os.PathLike) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError([f"cannot read {path}: {exc}"]) from exc
    return parse_config(text, base_dir=path.parent)


def build_problem(spec: ProblemSpec) -> tuple[LocalObjectiveSet, GroundTruth, dict]:
    """Objectives, reference optimum and manifest entries for a problem spec."""
    if spec.type == "quadratic":
        problem = generate_quadratic(spec.n, spec.p, spec.kappa, spec.seed)
        truth = quadratic_optimum(problem)
        meta = {"condition_number": repr(problem.condition_number())}
    else:
        if spec.dataset == "synthetic":
            data = synthetic_classification(seed=spec.seed)
        else:
            data = read_sparse_file(spec.dataset)
        A, b = data.to_dense(p=spec.p, unit_scale=spec.unit_scale)
        shards = partition(A, b, spec.n, seed=spec.seed, mode=spec.partition, equal=spec.equal_shards)
        problem = build_logistic(shards, label=os.path.basename(spec.dataset))
        tol = 1e-12 * (1.0 + float(np.linalg.norm(problem.total_grad(np.zeros(problem.p)))))
        truth = centralized_solve(problem, tol)
        meta = {
            "label_map": data.label_map,
            "rows_used": sum(len(s[1]) for s in shards),
            "shard_sizes": " ".join(str(len(s[1])) for s in shards),
            "truth_iterations": truth.iterations,
        }
    meta["problem_spec"] = spec.describe()
    meta["x_star_norm"] = repr(float(np.linalg.norm(truth.x_star)))
    meta["truth_tolerance"] = repr(float(truth.tolerance))
    return problem, truth, meta


@dataclass
class ExperimentResult:
    traces: dict[str, RunTrace]
    paths: dict[str, Path]
    summary_path: Path | None
    diverged: list[str] = field(default_factory=list)

    @property
    def all_diverged(self) -> bool:
        return bool(self.traces) and len(self.diverged) == len(self.traces)


def trace_filename(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9+\-]+", "_", label).strip("_") + ".csv"


def run_experiment(
    config: ExperimentConfig,
    output_dir: str | os.PathLike | None = None,
    timestamp: bool = True,
) -> ExperimentResult:
    """Run every method and write one trace CSV per method plus ``summary.csv``.

    A method that diverges keeps its partial trace and is marked in the
    summary; the others still run.
    """
    out = Path(output_dir or os.environ.get(OUTPUT_ENV) or config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    objectives, truth, meta = build_problem(config.problem)
    W = config.topology.build(config.problem.n)
    methods = list(config.methods)
    if config.shared_alpha:
        alpha = config.alpha_scale * min(
            max_stepsize(m.method, objectives, W, m.schedule.t if m.method == "dgd_t" else 1) for m in methods
        )
        methods = [m if m.alpha is not None else replace(m, alpha=alpha) for m in methods]
    stamp = datetime.now(timezone.utc).isoformat(timespec="seconds") if timestamp else None
    traces, paths, diverged = {}, {}, []
    for m in methods:
        manifest = {
            **meta,
            "experiment": config.name,
            "seed": config.problem.seed,
            "cost_models": ",".join(str(c) for c in config.cost_models),
        }
        if config.shared_alpha:
            manifest["alpha_shared"] = "min bound over methods"
        try:
            trace = run(m, W, objectives, truth, TraceRecorder(stride=config.stride), manifest=manifest)
        except DivergenceError as exc:
            trace = exc.trace
            diverged.append(m.label)
        traces[m.label] = trace
        path = out / trace_filename(m.label)
        write_trace_csv(trace, path, list(config.cost_models), timestamp=stamp)
        paths[m.label] = path
    summary_path = out / "summary.csv"
    write_summary_csv(summarize(traces.values(), config.cost_models), summary_path)
    return ExperimentResult(traces=traces, paths=paths, summary_path=summary_path, diverged=diverged)


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def summarize(traces, cost_models=None) -> list[dict]:
    """One row per trace: final and plateau error plus counts to each threshold.

    ``cost_models`` defaults to the models listed in each trace's manifest.
    """
    rows = []
    for trace in traces:
        models = list(cost_models) if cost_models else [
            CostModel.parse(s) for s in _split_list(trace.manifest.get("cost_models", "1:1"))
        ]
        row = {
            "label": trace.label,
            "status": trace.manifest.get("status", "ok"),
            "iterations": int(trace.k[-1]) if len(trace) else 0,
            "final_rel_err": float(trace.rel_err[-1]) if len(trace) else float("nan"),
            "plateau": trace.plateau(),
        }
        costs = {str(m): cost_series(trace, m) for m in models}
        for thr in THRESHOLDS:
            hit = np.flatnonzero(trace.rel_err <= thr)
            tag = f"{thr:.0e}"
            if hit.size:
                j = int(hit[0])
                row[f"iters@{tag}"] = int(trace.k[j])
                row[f"comm@{tag}"] = int(trace.comm_rounds[j])
                row[f"grad@{tag}"] = int(trace.grad_rounds[j])
                for name, series in costs.items():
                    row[f"cost[{name}]@{tag}"] = float(series[j])
            else:
                for key in ("iters", "comm", "grad"):
                    row[f"{key}@{tag}"] = NOT_REACHED
                for name in costs:
                    row[f"cost[{name}]@{tag}"] = NOT_REACHED
        rows.append(row)
    return rows


def write_summary_csv(rows: list[dict], path_or_stream) -> None:
    header = []
    for row in rows:
        header += [k for k in row if k not in header]
    own = isinstance(path_or_stream, (str, os.PathLike))
    fh = open(path_or_stream, "w", newline="") if own else path_or_stream
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header or ["label"])
        for row in rows:
            writer.writerow([_fmt(row.get(k, "")) for k in header])
    finally:
        if own:
            fh.close()


def _axis_values(trace: RunTrace, axis: str) -> np.ndarray:
    if axis == "iterations":
        return trace.k
    if axis == "grad_rounds":
        return trace.grad_rounds
    if axis == "comm_rounds":
        return trace.comm_rounds
    if axis == "cost":
        if "cost" in trace.columns:
            return trace.columns["cost"]
        models = _split_list(trace.manifest.get("cost_models", "1:1"))
        return cost_series(trace, CostModel.parse(models[0]))
    raise ValueError(f"unknown axis {axis!r}; expected one of {PLOT_AXES}")


def emit_plot_data(traces, axis: str, path_or_stream=None) -> str:
    """Long-format ``label,x,rel_err`` rows; returns the text and writes it if asked.

    The ``cost`` axis uses each trace's primary cost column.
    """
    if axis not in PLOT_AXES:
        raise ValueError(f"unknown axis {axis!r}; expected one of {PLOT_AXES}")
    traces = list(traces)
    problems = {t.manifest.get("problem_spec", t.manifest.get("problem", "")) for t in traces}
    if len(problems) > 1:
        raise ValueError(f"traces come from different problems: {sorted(problems)}")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["label", "x", "rel_err"])
    for trace in traces:
        for x, e in zip(_axis_values(trace, axis), trace.rel_err):
            writer.writerow([trace.label, _fmt(x.item() if hasattr(x, "item") else x), repr(float(e))])
    text = buf.getvalue()
    if isinstance(path_or_stream, (str, os.PathLike)):
        Path(path_or_stream).write_text(text)
    elif path_or_stream is not None:
        path_or_stream.write(text)
    return text
