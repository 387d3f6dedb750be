"""Undirected weighted interaction graphs and their Laplacians."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from itertools import combinations

import numpy as np

#: eigenvalues below this are treated as zero when locating the spectral gap
ZERO_EIG_TOL = 1e-9


@dataclass(frozen=True)
class QuantumGraph:
    """``n`` qubits joined by edges ``(j, k, weight)`` with ``1 <= j < k <= n``."""

    n: int
    edges: tuple[tuple[int, int, float], ...] = ()

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("graph needs at least one node")
        seen = set()
        clean = []
        for e in self.edges:
            j, k, w = int(e[0]), int(e[1]), float(e[2])
            if j == k:
                raise ValueError(f"self-loop on node {j}")
            if j > k:
                j, k = k, j
            if not (1 <= j and k <= self.n):
                raise ValueError(f"edge ({j}, {k}) outside 1..{self.n}")
            if not w > 0:
                raise ValueError(f"edge ({j}, {k}) has non-positive weight {w}")
            if (j, k) in seen:
                raise ValueError(f"duplicate edge ({j}, {k})")
            seen.add((j, k))
            clean.append((j, k, w))
        object.__setattr__(self, "edges", tuple(clean))

    @classmethod
    def complete(cls, n: int, weight: float = 1.0) -> "QuantumGraph":
        return cls(n, tuple((j, k, weight) for j, k in combinations(range(1, n + 1), 2)))

    def weight_matrix(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        for j, k, w in self.edges:
            a[j - 1, k - 1] = a[k - 1, j - 1] = w
        return a

    def scaled(self, c: float) -> "QuantumGraph":
        return QuantumGraph(self.n, tuple((j, k, c * w) for j, k, w in self.edges))

    def relabeled(self, perm) -> "QuantumGraph":
        """Graph with node ``j`` renamed ``perm[j-1]``."""
        return QuantumGraph(
            self.n, tuple((perm[j - 1], perm[k - 1], w) for j, k, w in self.edges)
        )

    def components(self) -> list[list[int]]:
        adj = {v: [] for v in range(1, self.n + 1)}
        for j, k, _ in self.edges:
            adj[j].append(k)
            adj[k].append(j)
        seen, out = set(), []
        for s in range(1, self.n + 1):
            if s in seen:
                continue
            comp, queue = [], deque([s])
            seen.add(s)
            while queue:
                v = queue.popleft()
                comp.append(v)
                for u in adj[v]:
                    if u not in seen:
                        seen.add(u)
                        queue.append(u)
            out.append(sorted(comp))
        return out

    def is_connected(self) -> bool:
        return len(self.components()) == 1

    def as_dict(self) -> dict:
        return {"n": self.n, "edges": [list(e) for e in self.edges]}


def smallest_nonzero_eigenvalue(sym: np.ndarray, tol: float = ZERO_EIG_TOL) -> float:
    lam = np.linalg.eigvalsh(sym)
    nz = lam[lam > tol]
    if nz.size == 0:
        raise ValueError("matrix has no nonzero eigenvalue")
    return float(nz[0])


def classical_laplacian(graph: QuantumGraph) -> tuple[np.ndarray, float | None]:
    """Laplacian ``Q`` of ``graph`` and its smallest nonzero eigenvalue.

    The eigenvalue is ``None`` for an edgeless graph.
    """
    a = graph.weight_matrix()
    q = np.diag(a.sum(axis=1)) - a
    lam = smallest_nonzero_eigenvalue(q) if graph.edges else None
    return q, lam
