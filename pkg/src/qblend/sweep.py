"""Error floors across coupling gains."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .certify import symmetrization_defect
from .dynamics import (
    TimeGrid,
    coherent_error,
    distance_to_state,
    evolve_blended_coherent,
    evolve_blended_reduced,
    evolve_full,
    evolve_reduced,
    steady_state,
    symmetrization_error,
)
from .network import NetworkSpec, build_full_generator, separable_decomposition

TARGETS = ("steady", "blended", "coherent", "symmetrization")
#: fraction of the horizon whose maximum defines a finite-horizon floor
TAIL_FRACTION = 0.2
#: tolerated relative deviation of a doubling ratio from 2
HALVING_TOL = 0.25


def tail_max(times: np.ndarray, values: np.ndarray, fraction: float = TAIL_FRACTION) -> float:
    """Largest value over the last ``fraction`` of the sampled horizon."""
    cut = times[-1] - fraction * (times[-1] - times[0])
    return float(values[times >= cut - 1e-12].max())


@dataclass(frozen=True)
class FloorResult:
    kc: float
    floor: float
    method: str  # "steady-state" or "tail"


def error_floor(spec: NetworkSpec, kc: float, target: str, grid: TimeGrid) -> FloorResult:
    """Long-time size of the named error functional at gain ``kc``.

    The symmetrization defect is read off the exact steady state when the
    network relaxes; every other target uses the tail maximum on ``grid``.
    """
    if target not in TARGETS:
        raise ValueError(f"unknown target {target!r}; choose from {TARGETS}")
    if target == "symmetrization":
        rho = steady_state(build_full_generator(spec, kc))
        if isinstance(rho, np.ndarray):
            return FloorResult(kc, symmetrization_defect(rho), "steady-state")
        full = evolve_full(spec, grid=grid, kc=kc)
        return FloorResult(kc, tail_max(full.times, symmetrization_error(full)), "tail")
    if target == "coherent":
        full = evolve_full(spec, grid=grid, kc=kc)
        coh = evolve_blended_coherent(spec, grid=grid)
        return FloorResult(kc, tail_max(full.times, coherent_error(full, coh)), "tail")

    dec = separable_decomposition(spec)
    if not dec:
        raise TypeError(f"target {target!r} needs a separable network: {dec.reason}")
    red = evolve_reduced(dec, spec.graph, kc, grid)
    if target == "blended":
        ref = evolve_blended_reduced(dec, grid).states
    else:
        ref = steady_state(dec.blended_generator())
        if not isinstance(ref, np.ndarray):
            raise ValueError(f"blended dynamics is not relaxing: {ref.reason}")
    return FloorResult(kc, tail_max(red.times, distance_to_state(red.states, ref)), "tail")


def sweep_floors(
    spec: NetworkSpec, kcs, target: str, grid: TimeGrid, workers: int | None = None
) -> list[FloorResult]:
    """Floors for every gain, computed in parallel and returned sorted by gain."""
    kcs = sorted({float(k) for k in kcs})
    if not kcs:
        raise ValueError("no gains to sweep")
    with ThreadPoolExecutor(max_workers=workers or min(4, len(kcs))) as pool:
        results = list(pool.map(lambda k: error_floor(spec, k, target, grid), kcs))
    return sorted(results, key=lambda r: r.kc)


def halving_ratios(results: list[FloorResult]) -> list[float | None]:
    """``floor(K_prev) / floor(K)`` for successive gains; None for the first row."""
    out: list[float | None] = [None]
    for a, b in zip(results, results[1:]):
        out.append(a.floor / b.floor if b.floor > 0 else float("inf"))
    return out


def scales_inversely(results: list[FloorResult], tol: float = HALVING_TOL) -> bool:
    """Whether each ``ratio`` is within ``tol`` of the gain ratio, i.e. floor ~ 1/K."""
    for a, b in zip(results, results[1:]):
        want = b.kc / a.kc
        got = a.floor / b.floor if b.floor > 0 else float("inf")
        if abs(got - want) > tol * want:
            return False
    return True
