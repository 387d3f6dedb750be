"""Dense operator algebra for qubit registers.

Conventions used throughout the package:

* computational basis ``|q1 q2 ... qn>`` with ``q1`` the most significant bit,
  so basis index ``l`` is the binary value of the bit string;
* column-stacking vectorization, ``vec(A rho B) = (B^T kron A) vec(rho)``;
* raising/lowering operators follow the convention
  ``sigma_+ = [[0, 0], [1, 0]]`` and ``sigma_- = [[0, 1], [0, 0]]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Sequence

import numpy as np

I2 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
SIGMA_PLUS = np.array([[0, 0], [1, 0]], dtype=complex)
SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)

PAULI = {
    "I": I2,
    "sx": SIGMA_X,
    "sy": SIGMA_Y,
    "sz": SIGMA_Z,
    "sp": SIGMA_PLUS,
    "sm": SIGMA_MINUS,
}

for _m in PAULI.values():
    _m.setflags(write=False)


@dataclass(frozen=True)
class Tolerances:
    herm: float = 1e-10
    trace: float = 1e-10
    psd: float = 1e-9


DEFAULT_TOL = Tolerances()


class DensityError(ValueError):
    """Raised when a matrix is not a valid density operator."""


@dataclass(frozen=True)
class BlochVector:
    x: float
    y: float
    z: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    @property
    def length(self) -> float:
        return float(np.sqrt(self.x**2 + self.y**2 + self.z**2))


def qubit_count(dim: int) -> int:
    """Number of qubits for a register of Hilbert-space dimension ``dim``."""
    n = int(dim).bit_length() - 1
    if dim < 1 or (1 << n) != dim:
        raise ValueError(f"dimension {dim} is not a power of two")
    return n


def embed_single_qubit_op(op, j: int, n: int) -> np.ndarray:
    """Place a 2x2 operator in slot ``j`` (1-based) of an ``n``-qubit register."""
    op = np.asarray(op, dtype=complex)
    if op.shape != (2, 2):
        raise ValueError(f"expected a 2x2 operator, got shape {op.shape}")
    if not 1 <= j <= n:
        raise IndexError(f"qubit index {j} outside 1..{n}")
    left = np.eye(2 ** (j - 1), dtype=complex)
    right = np.eye(2 ** (n - j), dtype=complex)
    return np.kron(np.kron(left, op), right)


def embed_product(factors: dict[int, np.ndarray], n: int) -> np.ndarray:
    """Tensor product with ``factors[j]`` in slot ``j`` and identities elsewhere."""
    for j in factors:
        if not 1 <= j <= n:
            raise IndexError(f"qubit index {j} outside 1..{n}")
    mats = [np.asarray(factors.get(j, I2), dtype=complex) for j in range(1, n + 1)]
    return reduce(np.kron, mats)


def tensor(*ops: np.ndarray) -> np.ndarray:
    return reduce(np.kron, [np.asarray(o, dtype=complex) for o in ops])


def vectorize(a) -> np.ndarray:
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"vectorize expects a square matrix, got shape {a.shape}")
    return a.reshape(-1, order="F")


def unvectorize(v) -> np.ndarray:
    v = np.asarray(v)
    d = int(round(np.sqrt(v.size)))
    if v.ndim != 1 or d * d != v.size:
        raise ValueError(f"length {v.size} is not a perfect square")
    return v.reshape(d, d, order="F")


def partial_trace_keep(rho, j: int) -> np.ndarray:
    """Reduced 2x2 state of qubit ``j`` (1-based), tracing out all others."""
    rho = np.asarray(rho, dtype=complex)
    n = qubit_count(rho.shape[0])
    if not 1 <= j <= n:
        raise IndexError(f"qubit index {j} outside 1..{n}")
    a, b = 2 ** (j - 1), 2 ** (n - j)
    t = rho.reshape(a, 2, b, a, 2, b)
    return np.einsum("xiyxjy->ij", t)


def reduced_states(rho) -> np.ndarray:
    n = qubit_count(np.shape(rho)[0])
    return np.stack([partial_trace_keep(rho, j) for j in range(1, n + 1)])


def frobenius_distance(a, b) -> float:
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))


def hermiticity_defect(rho) -> float:
    rho = np.asarray(rho)
    return float(np.linalg.norm(rho - rho.conj().T))


def min_eigenvalue(rho) -> float:
    rho = np.asarray(rho)
    return float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0])


def validate_density(rho, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """Return ``rho`` as a complex array or raise :class:`DensityError`."""
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise DensityError(f"not a square matrix: shape {rho.shape}")
    if not np.all(np.isfinite(rho)):
        raise DensityError("non-finite entries")
    herm = hermiticity_defect(rho)
    if herm > tol.herm:
        raise DensityError(f"not Hermitian (defect {herm:.3e})")
    tr = np.trace(rho)
    if abs(tr - 1) > tol.trace:
        raise DensityError(f"trace {tr:.12g} differs from 1")
    lam = min_eigenvalue(rho)
    if lam < -tol.psd:
        raise DensityError(f"negative eigenvalue {lam:.3e}")
    return rho


def is_density(rho, tol: Tolerances = DEFAULT_TOL) -> bool:
    try:
        validate_density(rho, tol)
    except DensityError:
        return False
    return True


def bloch_vector(rho) -> BlochVector:
    """Bloch coordinates with ``rho = (I + x sx + y sy + z sz) / 2``."""
    rho = validate_density(rho)
    if rho.shape != (2, 2):
        raise DensityError(f"Bloch vector needs a single-qubit state, got {rho.shape}")
    return BlochVector(
        x=float(2 * rho[1, 0].real),
        y=float(2 * rho[1, 0].imag),
        z=float((rho[0, 0] - rho[1, 1]).real),
    )


def from_bloch(x: float, y: float, z: float) -> np.ndarray:
    return 0.5 * (I2 + x * SIGMA_X + y * SIGMA_Y + z * SIGMA_Z)


def basis_projector(bits: str) -> np.ndarray:
    """``|b><b|`` for a bit string such as ``"010"``."""
    if not bits or set(bits) - {"0", "1"}:
        raise ValueError(f"invalid bit string {bits!r}")
    d = 2 ** len(bits)
    out = np.zeros((d, d), dtype=complex)
    k = int(bits, 2)
    out[k, k] = 1.0
    return out


def product_state(factors: Sequence[np.ndarray]) -> np.ndarray:
    return tensor(*factors)


# -- superoperators (column-stacking) ------------------------------------


def spre(a: np.ndarray) -> np.ndarray:
    """Matrix of ``rho -> a rho``."""
    return np.kron(np.eye(a.shape[0]), a)


def spost(b: np.ndarray) -> np.ndarray:
    """Matrix of ``rho -> rho b``."""
    return np.kron(b.T, np.eye(b.shape[0]))


def commutator_superop(h: np.ndarray, hbar: float = 1.0) -> np.ndarray:
    """Matrix of ``rho -> -(i/hbar)[h, rho]``."""
    h = np.asarray(h, dtype=complex)
    return (-1j / hbar) * (spre(h) - spost(h))


def dissipator_superop(l: np.ndarray) -> np.ndarray:
    """Matrix of ``rho -> l rho l^dag - (l^dag l rho + rho l^dag l)/2``."""
    l = np.asarray(l, dtype=complex)
    ldl = l.conj().T @ l
    return np.kron(l.conj(), l) - 0.5 * spre(ldl) - 0.5 * spost(ldl)


def lindbladian(h, terms: Iterable[tuple[float, np.ndarray]] = (), hbar: float = 1.0):
    """Generator ``-(i/hbar)[h, .] + sum_l gamma_l D(L_l)`` as a matrix."""
    g = commutator_superop(h, hbar)
    for gamma, l in terms:
        g = g + gamma * dissipator_superop(l)
    return g


def dissipator(l: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Direct evaluation of ``D(l) rho``."""
    ldl = l.conj().T @ l
    return l @ rho @ l.conj().T - 0.5 * (ldl @ rho + rho @ ldl)
