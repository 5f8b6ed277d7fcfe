"""Network structure: adjacency, incremental cycle and combining weights."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class NetworkTopology:
    """Symmetric adjacency with self-loops, plus an optional cycle order.

    Nodes are indexed from 0 internally; edge-list files are 1-indexed.
    """

    adjacency: np.ndarray
    cycle: tuple | None = None

    def __post_init__(self):
        A = np.array(self.adjacency, dtype=bool)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
            raise TopologyError(f"adjacency must be a nonempty square matrix, got shape {A.shape}")
        if not np.array_equal(A, A.T):
            raise TopologyError("adjacency must be symmetric")
        np.fill_diagonal(A, True)
        A.setflags(write=False)
        object.__setattr__(self, "adjacency", A)
        if self.cycle is not None:
            object.__setattr__(self, "cycle", tuple(int(k) for k in self.cycle))

    @property
    def N(self):
        return self.adjacency.shape[0]

    def neighbors(self, k):
        """``N_k``, including ``k`` itself."""
        return np.flatnonzero(self.adjacency[k])

    def degrees(self):
        """``|N_k|`` counting the node itself."""
        return self.adjacency.sum(axis=1)

    def edges(self):
        """Undirected edges ``(k, l)`` with ``k < l``."""
        k, l = np.nonzero(np.triu(self.adjacency, 1))
        return list(zip(k.tolist(), l.tolist()))

    def is_connected(self):
        seen = np.zeros(self.N, dtype=bool)
        stack = [0]
        seen[0] = True
        while stack:
            k = stack.pop()
            for l in self.neighbors(k):
                if not seen[l]:
                    seen[l] = True
                    stack.append(l)
        return bool(seen.all())

    def with_cycle(self, cycle):
        return NetworkTopology(self.adjacency, tuple(cycle))


@dataclass(frozen=True)
class CombiningMatrix:
    C: np.ndarray

    def row(self, k):
        return self.C[k]


def from_edges(N, edges, cycle=None):
    A = np.zeros((N, N), dtype=bool)
    for k, l in edges:
        if not (0 <= k < N and 0 <= l < N):
            raise TopologyError(f"edge ({k}, {l}) out of range for {N} nodes")
        A[k, l] = A[l, k] = True
    return NetworkTopology(A, cycle)


def ring(N):
    """Ring with natural cycle order ``0, 1, ..., N-1``."""
    return from_edges(N, [(k, (k + 1) % N) for k in range(N) if N > 1], cycle=range(N))


def path(N):
    return from_edges(N, [(k, k + 1) for k in range(N - 1)])


def fully_connected(N):
    return NetworkTopology(np.ones((N, N), dtype=bool), tuple(range(N)))


def random_geometric(N, radius=0.4, rng=None, max_tries=1000):
    """Nodes uniform in the unit square, linked when closer than ``radius``.

    Redraws until the graph is connected.  Also returns the node positions.
    """
    rng = np.random.default_rng(rng)
    for _ in range(max_tries):
        pos = rng.uniform(size=(N, 2))
        dist = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
        topo = NetworkTopology(dist <= radius)
        if topo.is_connected():
            return topo, pos
    raise TopologyError(f"no connected graph with N={N}, radius={radius} after {max_tries} draws")


def metropolis_weights(topology, include_self=True):
    """Metropolis rule ``c_kl = 1 / max(|N_k|, |N_l|)``; diagonal takes the rest.

    ``include_self=False`` counts neighborhoods without the node itself.
    """
    A = topology.adjacency
    n = topology.degrees() - (0 if include_self else 1)
    off = A & ~np.eye(topology.N, dtype=bool)
    denom = np.maximum(n[:, None], n[None, :]).astype(float)
    C = np.where(off, 1.0 / np.where(off, denom, 1.0), 0.0)
    np.fill_diagonal(C, 1.0 - C.sum(axis=1))
    return CombiningMatrix(C)


def combine_estimates(row, estimates):
    """``sum_l c_kl w_l`` for one row of the combining matrix."""
    row = np.asarray(row)
    estimates = np.asarray(estimates)
    if row.shape[0] != estimates.shape[0]:
        raise ValueError(f"{row.shape[0]} weights for {estimates.shape[0]} estimates")
    return np.tensordot(row, estimates, axes=(0, 0))


def validate_cycle(topology):
    """Return the list of cycle defects; empty means the cycle is usable.

    Checks that every node is visited once and that consecutive nodes,
    including the wrap from last to first, are adjacent.  Non-adjacent hops
    are reported as ``(k, l)`` pairs.
    """
    cycle = topology.cycle
    if cycle is None:
        raise TopologyError("topology has no incremental cycle")
    problems = []
    if sorted(cycle) != list(range(topology.N)):
        problems.append(("not-a-permutation", tuple(cycle)))
    n = len(cycle)
    for i in range(n):
        k, l = cycle[i], cycle[(i + 1) % n]
        if 0 <= k < topology.N and 0 <= l < topology.N and not topology.adjacency[k, l]:
            problems.append((k, l))
    return problems


def load_edge_list(path, N=None, cycle=None):
    """Read ``k l`` pairs, one per line, 1-indexed.  ``#`` starts a comment."""
    edges = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise TopologyError(f"{path}:{lineno}: expected 'k l', got {line!r}")
        try:
            k, l = int(parts[0]), int(parts[1])
        except ValueError as exc:
            raise TopologyError(f"{path}:{lineno}: non-integer node id in {line!r}") from exc
        if k < 1 or l < 1:
            raise TopologyError(f"{path}:{lineno}: node ids are 1-indexed")
        edges.append((k - 1, l - 1))
    n = max((max(e) for e in edges), default=-1) + 1
    N = n if N is None else N
    return from_edges(N, edges, cycle)


def write_edge_list(topology, path):
    lines = [f"{k + 1} {l + 1}" for k, l in topology.edges()]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))
