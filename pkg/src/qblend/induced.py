"""Induced graph on matrix units ``|l><l'|`` and the symmetrizing projections.

Node ``idx(l, l') = l + 2**n * l'`` is exactly the coordinate of ``rho[l, l']``
in the column-stacked ``vec(rho)``, so projections are index arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import permutations
from math import factorial

import numpy as np

from .graph import QuantumGraph
from .operators import qubit_count, unvectorize, vectorize


class UnionFind:
    def __init__(self, size: int):
        self.parent = list(range(size))
        self.rank = [0] * size

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, x: int, y: int) -> bool:
        x, y = self.find(x), self.find(y)
        if x == y:
            return False
        if self.rank[x] < self.rank[y]:
            x, y = y, x
        elif self.rank[x] == self.rank[y]:
            self.rank[x] += 1
        self.parent[y] = x
        return True

    def groups(self) -> list[list[int]]:
        out: dict[int, list[int]] = {}
        for x in range(len(self.parent)):
            out.setdefault(self.find(x), []).append(x)
        return sorted(out.values(), key=lambda g: g[0])


def bit_swap(l: int, j: int, k: int, n: int) -> int:
    """Exchange bits ``j`` and ``k`` (1-based, bit 1 most significant) of ``l``."""
    if not (1 <= j <= n and 1 <= k <= n):
        raise IndexError(f"bit positions ({j}, {k}) outside 1..{n}")
    if not 0 <= l < 2**n:
        raise ValueError(f"label {l} outside 0..{2**n - 1}")
    pj, pk = n - j, n - k
    if ((l >> pj) ^ (l >> pk)) & 1:
        l ^= (1 << pj) | (1 << pk)
    return l


def node_index(l: int, lp: int, n: int) -> int:
    return l + (2**n) * lp


def node_label(idx: int, n: int) -> tuple[int, int]:
    d = 2**n
    return idx % d, idx // d


@dataclass(frozen=True)
class InducedGraph:
    n: int
    edges: np.ndarray  # rows (u, v, weight) with u < v
    laplacian: np.ndarray
    components: tuple[np.ndarray, ...]
    component_of: np.ndarray = field(repr=False)

    @property
    def node_count(self) -> int:
        return 4**self.n

    @property
    def p(self) -> int:
        return len(self.components)

    def to_dict(self) -> dict:
        d = 2**self.n
        fmt = f"0{self.n}b"
        nodes = [
            {
                "index": i,
                "ket": format(i % d, fmt),
                "bra": format(i // d, fmt),
                "component": int(self.component_of[i]),
            }
            for i in range(self.node_count)
        ]
        return {
            "n": self.n,
            "node_count": self.node_count,
            "p": self.p,
            "nodes": nodes,
            "edges": [[int(u), int(v), float(w)] for u, v, w in self.edges],
            "components": [c.tolist() for c in self.components],
        }


def build_induced_graph(graph: QuantumGraph) -> InducedGraph:
    n = graph.n
    d = 2**n
    size = d * d
    swaps = {}
    rows = []
    for j, k, w in graph.edges:
        s = np.array([bit_swap(l, j, k, n) for l in range(d)])
        swaps[(j, k)] = s
        for lp in range(d):
            for l in range(d):
                u = l + d * lp
                v = int(s[l] + d * s[lp])
                if u < v:
                    rows.append((u, v, w))
    edges = np.array(rows, dtype=float).reshape(-1, 3)

    uf = UnionFind(size)
    for u, v, _ in edges:
        uf.union(int(u), int(v))
    comps = tuple(np.array(g) for g in uf.groups())
    comp_of = np.empty(size, dtype=int)
    for m, g in enumerate(comps):
        comp_of[g] = m

    lap = np.zeros((size, size))
    if len(edges):
        u = edges[:, 0].astype(int)
        v = edges[:, 1].astype(int)
        w = edges[:, 2]
        np.add.at(lap, (u, v), -w)
        np.add.at(lap, (v, u), -w)
        np.add.at(lap, (u, u), w)
        np.add.at(lap, (v, v), w)
    return InducedGraph(n, edges, lap, comps, comp_of)


@dataclass(frozen=True)
class ProjectionBasis:
    P: np.ndarray
    S: np.ndarray
    eigenvalues: np.ndarray  # diagonal of Lambda_d, matching the columns of S

    @property
    def p(self) -> int:
        return self.P.shape[1]

    @property
    def lambda_m(self) -> float | None:
        return float(self.eigenvalues.min()) if self.eigenvalues.size else None


def projection_basis(g: InducedGraph) -> ProjectionBasis:
    """Orthonormal null-space basis ``P_d`` and complementary eigenbasis ``S_d``.

    ``P_d`` has value ``1/sqrt(|V_m|)`` on component ``m`` so that
    ``P_d^T P_d = I``.  ``S_d`` is assembled component by component: each
    component's sub-Laplacian has exactly one zero eigenvalue (the constant
    vector), which is dropped.
    """
    size = g.node_count
    P = np.zeros((size, g.p))
    s_cols, lams = [], []
    for m, comp in enumerate(g.components):
        P[comp, m] = 1.0 / np.sqrt(comp.size)
        if comp.size == 1:
            continue
        sub = g.laplacian[np.ix_(comp, comp)]
        try:
            lam, vec = np.linalg.eigh(sub)
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError(
                f"eigendecomposition failed on component {m}"
            ) from exc
        for i in range(1, comp.size):
            col = np.zeros(size)
            col[comp] = vec[:, i]
            s_cols.append(col)
            lams.append(lam[i])
    S = np.array(s_cols).T if s_cols else np.zeros((size, 0))
    return ProjectionBasis(P, S, np.array(lams))


def project_vector(x, basis: ProjectionBasis) -> np.ndarray:
    x = np.asarray(x)
    if x.shape != (basis.P.shape[0],):
        raise ValueError(f"expected length {basis.P.shape[0]}, got {x.shape}")
    return basis.P.T @ x


def inverse_project(y, basis: ProjectionBasis) -> np.ndarray:
    y = np.asarray(y)
    if y.shape != (basis.p,):
        raise ValueError(f"expected length {basis.p}, got {y.shape}")
    return basis.P @ y


def project_operator(a, basis: ProjectionBasis) -> np.ndarray:
    a = np.asarray(a)
    size = basis.P.shape[0]
    if a.shape != (size, size):
        raise ValueError(f"expected {size}x{size} operator, got {a.shape}")
    return basis.P.T @ a @ basis.P


def permutation_unitary(perm) -> np.ndarray:
    """``U_pi |q1 ... qn> = |q_pi(1) ... q_pi(n)>`` for ``perm = (pi(1), ..., pi(n))``.

    Composition: ``U_tau @ U_pi == U_{pi o tau}`` where ``(pi o tau)(i) = pi(tau(i))``.
    """
    perm = tuple(int(p) for p in perm)
    n = len(perm)
    if sorted(perm) != list(range(1, n + 1)):
        raise ValueError(f"{perm} is not a permutation of 1..{n}")
    d = 2**n
    u = np.zeros((d, d), dtype=complex)
    for col in range(d):
        bits = format(col, f"0{n}b")
        row = int("".join(bits[perm[i] - 1] for i in range(n)), 2)
        u[row, col] = 1.0
    return u


def all_permutation_unitaries(n: int) -> list[np.ndarray]:
    return [permutation_unitary(p) for p in permutations(range(1, n + 1))]


def permutation_invariant_projection(rho) -> np.ndarray:
    """Average of ``U_pi rho U_pi^dag`` over the full symmetric group."""
    rho = np.asarray(rho, dtype=complex)
    n = qubit_count(rho.shape[0])
    acc = np.zeros_like(rho)
    for u in all_permutation_unitaries(n):
        acc += u @ rho @ u.conj().T
    return acc / factorial(n)


def symmetrize_via_basis(rho, basis: ProjectionBasis) -> np.ndarray:
    """``unvec(P_d P_d^T vec(rho))``."""
    y = vectorize(np.asarray(rho, dtype=complex))
    return unvectorize(basis.P @ (basis.P.T @ y))
