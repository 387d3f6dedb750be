"""Diffusively coupled qubit networks and the generators they induce."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import block_diag

from .graph import QuantumGraph, classical_laplacian
from .induced import InducedGraph, bit_swap, build_induced_graph
from .operators import (
    dissipator,
    embed_single_qubit_op,
    frobenius_distance,
    lindbladian,
    partial_trace_keep,
    tensor,
    validate_density,
)

SEPARABILITY_TOL = 1e-10


def swap_operator(j: int, k: int, n: int) -> np.ndarray:
    """Unitary permutation matrix exchanging qubits ``j < k``."""
    if not 1 <= j < k <= n:
        raise ValueError(f"need 1 <= j < k <= n, got j={j}, k={k}, n={n}")
    d = 2**n
    u = np.zeros((d, d), dtype=complex)
    for l in range(d):
        u[bit_swap(l, j, k, n), l] = 1.0
    return u


@dataclass(frozen=True, eq=False)
class NetworkSpec:
    """Hamiltonian, Lindblad terms and swap couplings of an ``n``-qubit network.

    ``hamiltonian`` and every Lindblad operator are full ``2**n`` matrices
    (scenario files build them from per-qubit factors). ``hbar`` is 1.
    """

    graph: QuantumGraph
    hamiltonian: np.ndarray
    lindblad: tuple[tuple[float, np.ndarray], ...] = ()
    kc: float = 0.0
    initial_state: np.ndarray | None = None
    name: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        d = 2**self.graph.n
        h = np.asarray(self.hamiltonian, dtype=complex)
        if h.shape != (d, d):
            raise ValueError(f"Hamiltonian has shape {h.shape}, expected {(d, d)}")
        if np.linalg.norm(h - h.conj().T) > 1e-12 * max(1.0, np.linalg.norm(h)):
            raise ValueError("Hamiltonian is not Hermitian")
        object.__setattr__(self, "hamiltonian", h)
        terms = []
        for rate, op in self.lindblad:
            op = np.asarray(op, dtype=complex)
            if op.shape != (d, d):
                raise ValueError(f"Lindblad operator has shape {op.shape}, expected {(d, d)}")
            if not rate > 0:
                raise ValueError(f"Lindblad rate must be positive, got {rate}")
            terms.append((float(rate), op))
        object.__setattr__(self, "lindblad", tuple(terms))
        if self.kc < 0:
            raise ValueError(f"gain must be non-negative, got {self.kc}")
        if self.initial_state is not None:
            rho0 = validate_density(self.initial_state)
            if rho0.shape != (d, d):
                raise ValueError(f"initial state has shape {rho0.shape}, expected {(d, d)}")
            object.__setattr__(self, "initial_state", rho0)

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def dim(self) -> int:
        return 2**self.graph.n

    def with_gain(self, kc: float) -> "NetworkSpec":
        return NetworkSpec(
            self.graph, self.hamiltonian, self.lindblad, kc, self.initial_state, self.name, self.meta
        )

    @cached_property
    def induced(self) -> InducedGraph:
        return build_induced_graph(self.graph)

    def spec_hash(self) -> str:
        """Stable digest of the resolved operators, graph and initial state."""
        payload = {
            "graph": self.graph.as_dict(),
            "H": _round_matrix(self.hamiltonian),
            "L": [[r, _round_matrix(op)] for r, op in self.lindblad],
            "rho0": None if self.initial_state is None else _round_matrix(self.initial_state),
        }
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _round_matrix(m: np.ndarray) -> list:
    return [[f"{z.real:.12g}", f"{z.imag:.12g}"] for z in np.asarray(m).ravel()]


def coherent_dissipative_generator(spec: NetworkSpec) -> np.ndarray:
    """``A_d``: the Hamiltonian and environmental part of the vectorized flow."""
    return lindbladian(spec.hamiltonian, spec.lindblad)


def swap_laplacian(spec: NetworkSpec) -> np.ndarray:
    """``Q_d``: PSD Laplacian of the induced graph."""
    return spec.induced.laplacian


def build_full_generator(spec: NetworkSpec, kc: float | None = None) -> np.ndarray:
    """``A_d - K_c Q_d`` acting on column-stacked ``vec(rho)``."""
    kc = spec.kc if kc is None else kc
    return coherent_dissipative_generator(spec) - kc * swap_laplacian(spec)


def direct_rhs(spec: NetworkSpec, rho: np.ndarray, kc: float | None = None) -> np.ndarray:
    """Right-hand side of the network master equation by plain matrix arithmetic."""
    kc = spec.kc if kc is None else kc
    h = spec.hamiltonian
    out = -1j * (h @ rho - rho @ h)
    for rate, op in spec.lindblad:
        out = out + rate * dissipator(op, rho)
    for j, k, w in spec.graph.edges:
        out = out + kc * w * dissipator(swap_operator(j, k, spec.n), rho)
    return out


@dataclass(frozen=True)
class SeparableDecomposition:
    """Per-qubit Hamiltonians, per-qubit Lindblad blocks and product factors."""

    hamiltonians: tuple[np.ndarray, ...]
    lindblad: tuple[tuple[tuple[float, np.ndarray], ...], ...]  # per qubit
    initial_factors: tuple[np.ndarray, ...] | None

    @property
    def n(self) -> int:
        return len(self.hamiltonians)

    def local_generator(self, j: int) -> np.ndarray:
        """4x4 superoperator of qubit ``j`` (1-based)."""
        return lindbladian(self.hamiltonians[j - 1], self.lindblad[j - 1])

    def local_generators(self) -> list[np.ndarray]:
        return [self.local_generator(j) for j in range(1, self.n + 1)]

    def blended_generator(self) -> np.ndarray:
        """Node-averaged single-qubit generator."""
        return sum(self.local_generators()) / self.n

    def blended_initial_state(self) -> np.ndarray:
        if self.initial_factors is None:
            raise ValueError("decomposition has no initial state")
        return sum(self.initial_factors) / self.n


@dataclass(frozen=True)
class Inseparable:
    reason: str

    def __bool__(self) -> bool:
        return False


def _local_part(op: np.ndarray, j: int, n: int) -> np.ndarray:
    return partial_trace_keep(op, j) / 2 ** (n - 1)


def _single_site(op: np.ndarray, n: int) -> tuple[int, np.ndarray] | None:
    scale = max(1.0, float(np.linalg.norm(op)))
    for j in range(1, n + 1):
        a = _local_part(op, j, n)
        if np.linalg.norm(op - embed_single_qubit_op(a, j, n)) <= SEPARABILITY_TOL * scale:
            return j, a
    return None


def separable_decomposition(spec: NetworkSpec) -> SeparableDecomposition | Inseparable:
    """Split the network into per-qubit blocks, or explain why it cannot be split."""
    n = spec.n
    h = spec.hamiltonian
    d = spec.dim
    c = np.trace(h).real / d
    hj = [_local_part(h, j, n) - c * np.eye(2) for j in range(1, n + 1)]
    recon = sum(embed_single_qubit_op(a, j + 1, n) for j, a in enumerate(hj)) + c * np.eye(d)
    if np.linalg.norm(h - recon) > SEPARABILITY_TOL * max(1.0, np.linalg.norm(h)):
        return Inseparable("Hamiltonian contains multi-qubit terms")
    hj = tuple(a + (c / n) * np.eye(2) for a in hj)

    blocks: list[list[tuple[float, np.ndarray]]] = [[] for _ in range(n)]
    for idx, (rate, op) in enumerate(spec.lindblad):
        site = _single_site(op, n)
        if site is None:
            return Inseparable(f"Lindblad term {idx} acts on more than one qubit")
        j, a = site
        blocks[j - 1].append((rate, a))

    factors = None
    if spec.initial_state is not None:
        rho0 = spec.initial_state
        factors = tuple(partial_trace_keep(rho0, j) for j in range(1, n + 1))
        if frobenius_distance(rho0, tensor(*factors)) > SEPARABILITY_TOL:
            return Inseparable("initial state is not a product state")
    return SeparableDecomposition(hj, tuple(tuple(b) for b in blocks), factors)


def local_superoperator_norms(dec: SeparableDecomposition) -> np.ndarray:
    return np.array([np.linalg.norm(g, 2) for g in dec.local_generators()])


def reduced_generator(dec: SeparableDecomposition, graph: QuantumGraph, kc: float) -> np.ndarray:
    """Stacked ``4n`` generator: block-diagonal local flows minus ``K_c (Q kron I_4)``."""
    q, _ = classical_laplacian(graph)
    return block_diag(*dec.local_generators()) - kc * np.kron(q, np.eye(4))

