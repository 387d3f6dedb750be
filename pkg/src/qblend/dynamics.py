"""Exact propagation of the network, reduced, and blended flows.

Every flow here is linear and time-invariant in vectorized coordinates, so
samples are produced with a single matrix-exponential step matrix reused
across a uniform grid.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .induced import ProjectionBasis, permutation_invariant_projection, projection_basis
from .network import (
    Inseparable,
    NetworkSpec,
    SeparableDecomposition,
    build_full_generator,
    coherent_dissipative_generator,
    reduced_generator,
)
from .graph import QuantumGraph
from .operators import (
    frobenius_distance,
    hermiticity_defect,
    min_eigenvalue,
    partial_trace_keep,
    unvectorize,
    vectorize,
)

log = logging.getLogger(__name__)

#: largest ||G||_1 * dt handed to expm in one piece
MAX_STEP_NORM = 20.0
#: below this |Re lambda| the second-slowest mode counts as non-decaying
RELAX_GAP_TOL = 1e-8


@dataclass(frozen=True)
class TimeGrid:
    t_end: float
    samples: int = 201
    t_start: float = 0.0

    def __post_init__(self):
        if self.samples < 2:
            raise ValueError("a time grid needs at least two samples")
        if self.t_start < 0 or not self.t_end > self.t_start:
            raise ValueError(f"invalid interval [{self.t_start}, {self.t_end}]")

    @property
    def times(self) -> np.ndarray:
        return np.linspace(self.t_start, self.t_end, self.samples)

    @property
    def dt(self) -> float:
        return (self.t_end - self.t_start) / (self.samples - 1)

    @classmethod
    def with_step(cls, t_end: float, dt: float) -> "TimeGrid":
        return cls(t_end, int(round(t_end / dt)) + 1)


@dataclass
class Trajectory:
    """Sampled path of one flow.

    ``states`` layout by ``kind``:

    - ``full``: ``(T, 2**n, 2**n)`` network density operators
    - ``reduced``: ``(T, n, 2, 2)`` per-qubit states
    - ``blended``: ``(T, 2, 2)`` blended reduced state
    - ``coherent``: ``(T, p)`` consensus coordinates; ``lifted`` holds
      ``(T, 2**n, 2**n)`` matrices ``unvec(P_d y_d)``
    """

    grid: TimeGrid
    kind: str
    states: np.ndarray
    lifted: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    KINDS = ("full", "reduced", "blended", "coherent")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown trajectory kind {self.kind!r}")
        if len(self.states) != self.grid.samples:
            raise ValueError("state count does not match the grid")

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    def density_samples(self) -> np.ndarray:
        """All density-operator samples flattened to ``(N, d, d)``."""
        if self.kind == "reduced":
            return self.states.reshape(-1, 2, 2)
        if self.kind == "coherent":
            return self.lifted
        return self.states

    def physicality(self) -> dict:
        """Worst trace drift, Hermiticity defect and smallest eigenvalue."""
        rhos = self.density_samples()
        traces = np.einsum("nii->n", rhos)
        return {
            "trace_drift": float(np.max(np.abs(traces - 1))),
            "hermiticity": float(max(hermiticity_defect(r) for r in rhos)),
            "min_eigenvalue": float(min(min_eigenvalue(r) for r in rhos)),
        }


def step_matrix(g: np.ndarray, dt: float) -> np.ndarray:
    """``exp(g dt)``, pre-split into ``2**k`` pieces when ``||g|| dt`` is large."""
    scale = np.linalg.norm(g, 1) * abs(dt)
    k = max(0, math.ceil(math.log2(scale / MAX_STEP_NORM))) if scale > MAX_STEP_NORM else 0
    with np.errstate(over="ignore", invalid="ignore"):
        e = expm(g * (dt / 2**k))
        for _ in range(k):
            e = e @ e
    if not np.all(np.isfinite(e)):
        raise FloatingPointError(
            f"matrix exponential overflowed for ||G||*dt = {scale:.3g}; refine the time step"
        )
    return e


def propagate_lti(g, y0, grid: TimeGrid) -> np.ndarray:
    """Samples ``exp(g t_i) y0`` on ``grid`` as rows of a ``(T, len(y0))`` array."""
    g = np.asarray(g, dtype=complex)
    y = np.asarray(y0, dtype=complex)
    if g.ndim != 2 or g.shape != (y.size, y.size):
        raise ValueError(f"generator {g.shape} does not match state of length {y.size}")
    out = np.empty((grid.samples, y.size), dtype=complex)
    if grid.t_start > 0:
        y = step_matrix(g, grid.t_start) @ y
    out[0] = y
    e = step_matrix(g, grid.dt)
    for i in range(1, grid.samples):
        y = e @ y
        out[i] = y
    return out


def _unvec_all(ys: np.ndarray) -> np.ndarray:
    d = int(round(math.sqrt(ys.shape[1])))
    return ys.reshape(len(ys), d, d).transpose(0, 2, 1)


def evolve_full(spec: NetworkSpec, rho0=None, grid: TimeGrid | None = None, kc=None) -> Trajectory:
    rho0 = spec.initial_state if rho0 is None else np.asarray(rho0, dtype=complex)
    if rho0 is None:
        raise ValueError("no initial state given")
    grid = grid or TimeGrid(10.0)
    kc = spec.kc if kc is None else kc
    ys = propagate_lti(build_full_generator(spec, kc), vectorize(rho0), grid)
    return Trajectory(
        grid, "full", _unvec_all(ys), metadata={"spec": spec.spec_hash(), "kc": kc, "name": spec.name}
    )


def _require_separable(dec) -> SeparableDecomposition:
    if isinstance(dec, Inseparable):
        raise TypeError(f"reduced-state flows need a separable network: {dec.reason}")
    return dec


def evolve_reduced(
    dec: SeparableDecomposition, graph: QuantumGraph, kc: float, grid: TimeGrid
) -> Trajectory:
    dec = _require_separable(dec)
    if dec.initial_factors is None:
        raise ValueError("decomposition has no initial state")
    y0 = np.concatenate([vectorize(r) for r in dec.initial_factors])
    ys = propagate_lti(reduced_generator(dec, graph, kc), y0, grid)
    states = ys.reshape(grid.samples, dec.n, 2, 2).transpose(0, 1, 3, 2)
    return Trajectory(grid, "reduced", states, metadata={"kc": kc})


def evolve_blended_reduced(dec: SeparableDecomposition, grid: TimeGrid) -> Trajectory:
    dec = _require_separable(dec)
    ys = propagate_lti(dec.blended_generator(), vectorize(dec.blended_initial_state()), grid)
    return Trajectory(grid, "blended", _unvec_all(ys))


def evolve_blended_coherent(
    spec: NetworkSpec, rho0=None, grid: TimeGrid | None = None, basis: ProjectionBasis | None = None
) -> Trajectory:
    rho0 = spec.initial_state if rho0 is None else np.asarray(rho0, dtype=complex)
    grid = grid or TimeGrid(10.0)
    basis = basis or projection_basis(spec.induced)
    a = coherent_dissipative_generator(spec)
    y0 = basis.P.T @ vectorize(rho0)
    yd = propagate_lti(basis.P.T @ a @ basis.P, y0, grid)
    lifted = _unvec_all(yd @ basis.P.T)
    traj = Trajectory(grid, "coherent", yd, lifted=lifted, metadata={"spec": spec.spec_hash()})
    lam = min(min_eigenvalue(r) for r in lifted)
    traj.metadata["lifted_min_eigenvalue"] = lam
    if lam < -1e-9:
        log.info("lifted blended coherent state has min eigenvalue %.3e", lam)
    return traj


# -- error functionals ----------------------------------------------------


def reduced_of_full(traj: Trajectory) -> np.ndarray:
    """Per-qubit partial traces of a full trajectory, shaped like a reduced one."""
    if traj.kind != "full":
        raise TypeError("expected a full trajectory")
    n = int(math.log2(traj.states.shape[1]))
    return np.stack(
        [[partial_trace_keep(r, j) for j in range(1, n + 1)] for r in traj.states]
    )


def distance_to_state(reduced: np.ndarray, target: np.ndarray) -> np.ndarray:
    """``max_j ||rho_j(t) - target(t)||_F`` per sample; ``target`` may be fixed."""
    target = np.asarray(target)
    if target.ndim == 2:
        target = np.broadcast_to(target, (len(reduced), 2, 2))
    diff = reduced - target[:, None]
    return np.linalg.norm(diff, axis=(2, 3)).max(axis=1)


def symmetrization_error(traj: Trajectory) -> np.ndarray:
    """``||rho(t) - P*(rho(t))||_F`` per sample."""
    if traj.kind != "full":
        raise TypeError("expected a full trajectory")
    return np.array(
        [frobenius_distance(r, permutation_invariant_projection(r)) for r in traj.states]
    )


def coherent_error(full: Trajectory, coherent: Trajectory) -> np.ndarray:
    """``||rho(t) - unvec(P_d y_d(t))||_F`` per sample."""
    if full.kind != "full" or coherent.kind != "coherent":
        raise TypeError("expected a full and a coherent trajectory")
    return np.linalg.norm(full.states - coherent.lifted, axis=(1, 2))


# -- steady states --------------------------------------------------------


@dataclass(frozen=True)
class NotRelaxing:
    reason: str
    eigenvalues: np.ndarray

    def __bool__(self) -> bool:
        return False


def steady_state(g) -> np.ndarray | NotRelaxing:
    """Unique attracting density operator of ``d rho/dt = g rho``, if any."""
    g = np.asarray(g, dtype=complex)
    try:
        lam = np.linalg.eigvals(g)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("eigenvalue computation failed") from exc
    order = np.argsort(np.abs(lam.real))
    if np.max(lam.real) > RELAX_GAP_TOL:
        return NotRelaxing("generator has an eigenvalue with positive real part", lam)
    if len(lam) < 2 or abs(lam[order[1]].real) <= RELAX_GAP_TOL:
        return NotRelaxing("more than one non-decaying mode", lam)
    _, _, vh = np.linalg.svd(g)
    rho = unvectorize(vh[-1].conj())
    tr = np.trace(rho)
    if abs(tr) < 1e-12:
        return NotRelaxing("null vector is traceless", lam)
    rho = rho / tr
    rho = 0.5 * (rho + rho.conj().T)
    if min_eigenvalue(rho) < -1e-9:
        return NotRelaxing("null vector is not positive semidefinite", lam)
    return rho
