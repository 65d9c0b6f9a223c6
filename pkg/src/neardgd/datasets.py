"""Sparse ``label idx:val`` text datasets and agent partitioning."""

from __future__ import annotations

import io
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, TextIO

import numpy as np

__all__ = [
    "DatasetError",
    "SparseDataset",
    "parse_sparse_text",
    "read_sparse_file",
    "write_sparse_text",
    "partition",
    "synthetic_classification",
    "write_shards_csv",
]


class DatasetError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SparseDataset:
    labels: np.ndarray  # int8 in {-1, +1}
    indices: list[np.ndarray]  # 1-based, strictly increasing per row
    values: list[np.ndarray]
    p: int
    label_map: str = "pm1"

    @property
    def rows(self) -> int:
        return len(self.labels)

    def to_dense(self, p: int | None = None, unit_scale: bool = False) -> tuple[np.ndarray, np.ndarray]:
        """Dense ``(rows, p)`` design matrix and float labels.

        A declared ``p`` larger than the raw maximum index zero-pads columns.
        """
        width = self.p if p is None else int(p)
        if width < self.p:
            raise DatasetError(f"declared p={width} is smaller than the largest feature index {self.p}")
        A = np.zeros((self.rows, width))
        for r, (idx, val) in enumerate(zip(self.indices, self.values)):
            A[r, idx - 1] = val
        if unit_scale:
            peak = np.abs(A).max(axis=0)
            peak[peak == 0] = 1.0
            A /= peak
        return A, self.labels.astype(float)


def _parse_label(tok: str, lineno: int) -> float:
    try:
        return float(tok)
    except ValueError:
        raise DatasetError(f"line {lineno}: label {tok!r} is not numeric") from None


def parse_sparse_text(stream: TextIO | str) -> SparseDataset:
    """Parse ``<label> <idx>:<val> ...`` lines.

    Labels ``{1, 2}`` become ``{+1, -1}``; labels already in ``{+1, -1}`` are
    kept. Mixing the two conventions is an error.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    raw_labels, indices, values = [], [], []
    p = 0
    for lineno, line in enumerate(stream, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        raw_labels.append(_parse_label(tokens[0], lineno))
        idx = np.empty(len(tokens) - 1, dtype=np.int64)
        val = np.empty(len(tokens) - 1)
        for j, tok in enumerate(tokens[1:]):
            key, sep, num = tok.partition(":")
            if not sep:
                raise DatasetError(f"line {lineno}: token {tok!r} is not idx:val")
            try:
                idx[j] = int(key)
                val[j] = float(num)
            except ValueError:
                raise DatasetError(f"line {lineno}: token {tok!r} is not numeric") from None
            if idx[j] < 1:
                raise DatasetError(f"line {lineno}: feature index {idx[j]} < 1")
            if j and idx[j] <= idx[j - 1]:
                raise DatasetError(f"line {lineno}: feature indices must be strictly increasing")
        if idx.size:
            p = max(p, int(idx[-1]))
        indices.append(idx)
        values.append(val)
    if not raw_labels:
        raise DatasetError("empty file: no samples")
    seen = set(raw_labels)
    if seen <= {1.0, 2.0}:
        labels = np.where(np.array(raw_labels) == 1.0, 1, -1).astype(np.int8)
        label_map = "1->+1,2->-1"
    elif seen <= {1.0, -1.0}:
        labels = np.array(raw_labels).astype(np.int8)
        label_map = "pm1"
    else:
        raise DatasetError(f"labels {sorted(seen)} are neither {{1,2}} nor {{+1,-1}}")
    return SparseDataset(labels=labels, indices=indices, values=values, p=p, label_map=label_map)


def read_sparse_file(path: str | os.PathLike) -> SparseDataset:
    try:
        with open(path) as fh:
            return parse_sparse_text(fh)
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from exc


def write_sparse_text(data: SparseDataset, stream: TextIO) -> None:
    for y, idx, val in zip(data.labels, data.indices, data.values):
        feats = " ".join(f"{i}:{v!r}" for i, v in zip(idx.tolist(), val.tolist()))
        stream.write(f"{int(y):+d} {feats}".rstrip() + "\n")


def partition(
    A: np.ndarray,
    b: np.ndarray,
    n: int,
    seed: int = 0,
    mode: str = "contiguous",
    equal: bool = False,
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Split rows across ``n`` agents.

    ``shuffled`` permutes rows with ``seed`` first. With ``equal=True`` every
    shard gets ``rows // n`` rows and the trailing remainder is dropped;
    otherwise shard sizes differ by at most one.
    """
    rows = A.shape[0]
    if rows < n:
        raise DatasetError(f"cannot split {rows} rows across {n} agents")
    if mode == "shuffled":
        order = np.random.default_rng(seed).permutation(rows)
    elif mode == "contiguous":
        order = np.arange(rows)
    else:
        raise ValueError(f"unknown partition mode {mode!r}")
    if equal:
        order = order[: n * (rows // n)]
    return [(A[part], b[part]) for part in np.array_split(order, n)]


def synthetic_classification(
    rows: int = 8124,
    seed: int = 0,
    groups: Iterable[int] = (6, 4, 10, 2, 9, 2, 2, 2, 12, 2, 5, 4, 4, 9, 9, 1, 4, 3, 5, 9, 6, 2),
) -> SparseDataset:
    """Linearly separable one-hot categorical data shaped like ``mushrooms``.

    Each row picks one level per attribute group (112 binary columns with the
    default groups). Labels come from a random hyperplane through the data
    median score; rows tied with the median sit on the hyperplane and are
    labelled ``+1``.
    """
    rng = np.random.default_rng(seed)
    groups = list(groups)
    offsets = np.concatenate([[0], np.cumsum(groups)])
    p = int(offsets[-1])
    picks = np.stack([rng.integers(0, g, size=rows) for g in groups], axis=1) + offsets[:-1]
    picks.sort(axis=1)
    w = rng.standard_normal(p)
    score = w[picks].sum(axis=1)
    score -= np.median(score)
    score[score == 0] = 1e-3
    labels = np.where(score > 0, 1, -1).astype(np.int8)
    indices = [row + 1 for row in picks]
    values = [np.ones(len(groups)) for _ in range(rows)]
    return SparseDataset(labels=labels, indices=indices, values=values, p=p, label_map="pm1")


def write_shards_csv(shards, directory: str | os.PathLike) -> list[Path]:
    """Audit dump: one CSV per agent, label first then dense features."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    out = []
    for i, (A, b) in enumerate(shards):
        path = d / f"shard_{i}.csv"
        with open(path, "w") as fh:
            for y, row in zip(b, A):
                fh.write(repr(float(y)) + "," + ",".join(repr(float(v)) for v in row) + "\n")
        out.append(path)
    return out
