"""Network graphs, Metropolis consensus matrices and their spectra.

Iterates are stored as ``(n, p)`` arrays: row ``i`` is agent ``i``'s block.
Mixing never forms the Kronecker product ``W (x) I_p``; each round computes
``x_i <- sum_j W_ij x_j`` with the neighbor sum taken in ascending index order,
so results do not depend on BLAS threading.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.sparse.csgraph import connected_components

__all__ = [
    "TOPOLOGY_KINDS",
    "NetworkTopology",
    "ConsensusMatrix",
    "build_topology",
    "metropolis_weights",
    "spectral_analysis",
    "consensus_apply",
    "write_matrix_csv",
]

TOPOLOGY_KINDS = ("cyclic_k", "path", "star", "complete")

ENTRY_TOL = 1e-12
SPECTRAL_TOL = 1e-10
UNIT_EIG_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class NetworkTopology:
    """Undirected connected graph on agents ``0..n-1``."""

    kind: str
    n: int
    adjacency: np.ndarray
    k: int | None = None

    def __post_init__(self):
        adj = np.asarray(self.adjacency, dtype=bool)
        if adj.shape != (self.n, self.n):
            raise ValueError(f"adjacency must be {self.n}x{self.n}, got {adj.shape}")
        if not np.array_equal(adj, adj.T):
            raise ValueError("adjacency must be symmetric")
        if adj.diagonal().any():
            raise ValueError("adjacency must not contain self-loops")
        adj.setflags(write=False)
        object.__setattr__(self, "adjacency", adj)
        if not self.is_connected():
            raise ValueError(f"{self.kind} topology on {self.n} agents is disconnected")

    def neighbors(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.adjacency[i])

    @property
    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)

    @property
    def num_edges(self) -> int:
        return int(self.adjacency.sum()) // 2

    def is_connected(self) -> bool:
        if self.n == 1:
            return True
        count, _ = connected_components(self.adjacency.astype(np.int8), directed=False)
        return count == 1

    def describe(self) -> str:
        if self.kind == "cyclic_k":
            return f"cyclic_k(n={self.n},k={self.k})"
        return f"{self.kind}(n={self.n})"


def build_topology(kind: str, n: int, k: int | None = None) -> NetworkTopology:
    """Build one of the supported graph families.

    ``cyclic_k`` places agents on a ring and links each one to its ``k/2``
    nearest neighbors on either side, so every degree equals ``k``; ``k`` must
    be even with ``2 <= k <= n - 1``.
    """
    if kind not in TOPOLOGY_KINDS:
        raise ValueError(f"unknown topology kind {kind!r}; expected one of {TOPOLOGY_KINDS}")
    if n < 2:
        raise ValueError(f"need at least 2 agents, got n={n}")
    adj = np.zeros((n, n), dtype=bool)
    if kind == "cyclic_k":
        if k is None:
            raise ValueError("cyclic_k requires k")
        if k < 1 or k >= n:
            raise ValueError(f"cyclic_k needs 1 <= k <= n-1, got k={k}, n={n}")
        if k % 2:
            raise ValueError(f"cyclic_k needs an even k (k/2 neighbors per side), got k={k}")
        for i in range(n):
            for d in range(1, k // 2 + 1):
                adj[i, (i + d) % n] = adj[(i + d) % n, i] = True
    elif kind == "path":
        for i in range(n - 1):
            adj[i, i + 1] = adj[i + 1, i] = True
    elif kind == "star":
        adj[0, 1:] = adj[1:, 0] = True
    else:
        adj[:] = True
        np.fill_diagonal(adj, False)
    return NetworkTopology(kind=kind, n=n, adjacency=adj, k=k if kind == "cyclic_k" else None)


def spectral_analysis(W: np.ndarray) -> tuple[float, float, np.ndarray]:
    """Return ``(beta, lambda_min, eigenvalues)`` of a symmetric mixing matrix.

    ``beta`` is the largest eigenvalue magnitude once the single unit
    eigenvalue is removed; eigenvalues come back in descending order.
    """
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {W.shape}")
    if not np.allclose(W, W.T, rtol=0.0, atol=ENTRY_TOL):
        raise ValueError("spectral_analysis requires a symmetric matrix")
    eig = np.linalg.eigvalsh(W)[::-1].copy()
    unit = np.abs(eig - 1.0) <= UNIT_EIG_TOL
    if unit.sum() != 1:
        raise ValueError(
            f"expected exactly one eigenvalue equal to 1, found {int(unit.sum())} "
            f"(eigenvalues {eig})"
        )
    rest = eig[~unit]
    beta = float(np.max(np.abs(rest))) if rest.size else 0.0
    return beta, float(eig[-1]), eig


@dataclass(frozen=True, eq=False)
class ConsensusMatrix:
    """Symmetric doubly-stochastic ``W`` with cached spectrum and CSR mixing data."""

    entries: np.ndarray
    topology: NetworkTopology | None = None
    beta: float = field(init=False)
    lambda_min: float = field(init=False)
    eigenvalues: np.ndarray = field(init=False, repr=False)
    _indptr: np.ndarray = field(init=False, repr=False)
    _indices: np.ndarray = field(init=False, repr=False)
    _weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        W = np.array(self.entries, dtype=float)
        W.setflags(write=False)
        object.__setattr__(self, "entries", W)
        self.check()
        beta, lam_min, eig = spectral_analysis(W)
        if not beta < 1.0:
            raise ValueError(f"beta={beta} is not < 1; network is not mixing")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "lambda_min", lam_min)
        object.__setattr__(self, "eigenvalues", eig)
        n = W.shape[0]
        indptr = np.zeros(n + 1, dtype=np.int64)
        indices, weights = [], []
        for i in range(n):
            cols = np.flatnonzero(W[i])  # ascending, includes i
            indices.extend(cols)
            weights.extend(W[i, cols])
            indptr[i + 1] = len(indices)
        object.__setattr__(self, "_indptr", indptr)
        object.__setattr__(self, "_indices", np.asarray(indices, dtype=np.int64))
        object.__setattr__(self, "_weights", np.asarray(weights, dtype=float))

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def check(self) -> None:
        W = self.entries
        n = W.shape[0]
        if W.shape != (n, n):
            raise ValueError(f"W must be square, got {W.shape}")
        if np.max(np.abs(W - W.T)) > ENTRY_TOL:
            raise ValueError("W is not symmetric")
        if (W < 0).any():
            raise ValueError("W has negative entries")
        if np.max(np.abs(W.sum(axis=1) - 1.0)) > ENTRY_TOL:
            raise ValueError("W rows do not sum to 1")
        if np.max(np.abs(W.sum(axis=0) - 1.0)) > ENTRY_TOL:
            raise ValueError("W columns do not sum to 1")
        if (W.diagonal() <= 0).any():
            raise ValueError("W needs a positive diagonal")
        if self.topology is not None:
            off = W > 0
            np.fill_diagonal(off, False)
            if not np.array_equal(off, self.topology.adjacency):
                raise ValueError("sparsity pattern of W differs from the topology")

    def lambda_min_power(self, t: int) -> float:
        """Smallest eigenvalue of ``W**t`` from the cached spectrum."""
        return float(np.min(self.eigenvalues**t))

    def beta_power(self, t: int) -> float:
        return self.beta**t


def metropolis_weights(topology: NetworkTopology) -> ConsensusMatrix:
    """``W_ij = 1/(1 + max(d_i, d_j))`` on edges, diagonal takes the rest."""
    n = topology.n
    deg = topology.degrees
    W = np.zeros((n, n))
    for i in range(n):
        for j in topology.neighbors(i):
            W[i, j] = 1.0 / (1.0 + max(deg[i], deg[j]))
    for i in range(n):
        W[i, i] = 1.0 - W[i].sum()
        assert W[i, i] > 0, f"non-positive Metropolis diagonal at agent {i}"
    return ConsensusMatrix(W, topology)


@njit(cache=True)
def _mix_once(cur, out, indptr, indices, weights):
    n, p = cur.shape
    for i in range(n):
        lo = indptr[i]
        hi = indptr[i + 1]
        for q in range(p):
            acc = weights[lo] * cur[indices[lo], q]
            for s in range(lo + 1, hi):
                acc += weights[s] * cur[indices[s], q]
            out[i, q] = acc


@njit(cache=True)
def _same(a, b):
    n, p = a.shape
    for i in range(n):
        for q in range(p):
            if a[i, q] != b[i, q]:
                return False
    return True


@njit(cache=True)
def _mix_rounds(x, indptr, indices, weights, t):
    # Stops early once the float state is a fixed point or a 2-cycle; the
    # remaining rounds would reproduce it exactly.
    prev = x.copy()
    cur = x.copy()
    nxt = np.empty_like(x)
    for r in range(t):
        _mix_once(cur, nxt, indptr, indices, weights)
        if _same(nxt, cur):
            return cur
        if r > 0 and _same(nxt, prev):
            if (t - r - 1) % 2 == 0:
                return nxt
            return cur
        prev, cur, nxt = cur, nxt, prev
    return cur


def consensus_apply(W: ConsensusMatrix, x: np.ndarray, t: int = 1) -> np.ndarray:
    """Apply ``t`` rounds of mixing to the stacked iterate ``x`` of shape ``(n, p)``."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] != W.n:
        raise ValueError(f"iterate must have shape ({W.n}, p), got {x.shape}")
    if t < 1:
        raise ValueError(f"round count must be >= 1, got {t}")
    return _mix_rounds(np.ascontiguousarray(x), W._indptr, W._indices, W._weights, int(t))


def write_matrix_csv(W: ConsensusMatrix | np.ndarray, stream: io.TextIOBase) -> None:
    """Dense row-major dump with shortest round-trip decimals."""
    M = W.entries if isinstance(W, ConsensusMatrix) else np.asarray(W, dtype=float)
    for row in M:
        stream.write(",".join(repr(float(v)) for v in row) + "\n")
