"""Acceptance criteria, one test each.

Every test prints a single ``criterion N PASS|FAIL`` line (also under
capture) and then asserts. Run standalone with ``python tests/test_acceptance.py``.
"""

import sys
import time
from functools import cache
from math import comb

import numpy as np

from qblend.certify import (
    CertificateError,
    initial_dispersion,
    kc_star_theorem1,
    kc_star_theorem2,
    kc_star_theorem3,
    kc_star_theorem4,
    spectral_constants,
    verify_bound,
)
from qblend.dynamics import (
    TimeGrid,
    coherent_error,
    distance_to_state,
    evolve_blended_coherent,
    evolve_blended_reduced,
    evolve_full,
    evolve_reduced,
    reduced_of_full,
    steady_state,
    symmetrization_error,
)
from qblend.graph import QuantumGraph
from qblend.induced import build_induced_graph, permutation_invariant_projection, projection_basis
from qblend.network import separable_decomposition
from qblend.operators import vectorize
from qblend.scenario import load_scenario
from qblend.sweep import tail_max

TARGET_RHO_R = np.array([[2 / 3, -1j / 6], [1j / 6, 1 / 3]])
GRID = TimeGrid(10.0, 201)

# every full/reduced/blended-reduced trajectory built below, for the physicality check
_TRAJECTORIES: dict[str, object] = {}


def _keep(label, traj):
    _TRAJECTORIES[label] = traj
    return traj


def report(n: int, ok: bool, detail: str, capsys=None) -> None:
    line = f"criterion {n:>2} {'PASS' if ok else 'FAIL'}: {detail}"
    if capsys is not None:
        with capsys.disabled():
            print("\n" + line)
    else:
        print(line)
    assert ok, line


@cache
def scenario(name):
    return load_scenario(name)


@cache
def decomposition(name):
    return separable_decomposition(scenario(name).spec)


# -- trajectory builders (shared with the physicality check) --------------


def steady_runs():
    spec = scenario("example1").spec
    out = {}
    for eta, kc in ((0.1, 6.0), (0.05, 15.0), (0.01, 70.0)):
        out[eta, kc] = _keep(f"ex1 full K={kc}", evolve_full(spec, grid=GRID, kc=kc))
    _keep("ex1 blended", evolve_blended_reduced(decomposition("example1"), GRID))
    return out


def blended_runs():
    spec = scenario("example2").spec
    dec = decomposition("example2")
    out = {}
    for t2, kc in ((4.0, 60.0), (6.0, 80.0), (8.0, 100.0)):
        grid = TimeGrid(t2, int(50 * t2) + 1)
        red = _keep(f"ex2 reduced K={kc}", evolve_reduced(dec, spec.graph, kc, grid))
        ref = _keep(f"ex2 blended T2={t2}", evolve_blended_reduced(dec, grid))
        out[t2, kc] = (red, ref)
    return out


def equivalence_runs():
    spec = scenario("example1").spec
    dec = decomposition("example1")
    grid = TimeGrid(10.0, 200)
    out = {}
    for kc in (1.0, 10.0, 70.0):
        full = _keep(f"ex1 full 200 K={kc}", evolve_full(spec, grid=grid, kc=kc))
        red = _keep(f"ex1 reduced 200 K={kc}", evolve_reduced(dec, spec.graph, kc, grid))
        out[kc] = (full, red)
    return out


def coherent_runs():
    spec = scenario("example3").spec
    coh = evolve_blended_coherent(spec, grid=GRID)
    fulls = {kc: _keep(f"ex3 full K={kc}", evolve_full(spec, grid=GRID, kc=kc)) for kc in (40.0, 80.0)}
    return coh, fulls


def symmetrization_runs():
    spec = scenario("example3").spec
    out = {}
    for eta in (0.05, 0.01):
        cert = kc_star_theorem4(spec, eta, 0.5)
        out[eta] = (cert, _keep(f"ex3 full thm4 eta={eta}", evolve_full(spec, grid=GRID, kc=cert.kc_star)))
    return out


CLOSED_LOOP_SETTINGS = ((0.05, 0.5, 4.0), (0.01, 0.5, 4.0))


def closed_loop_runs():
    """``(label, report)`` for every example, applicable theorem and setting."""
    out = []
    for name in ("example1", "example2", "example3"):
        spec = scenario(name).spec
        dec = decomposition(name)
        k = spectral_constants(spec, dec)
        for eta, t1, t2 in CLOSED_LOOP_SETTINGS:
            tag = f"{name} eta={eta}"
            if dec:
                disp = initial_dispersion(dec)
                try:
                    c1 = kc_star_theorem1(k, disp, eta)
                except CertificateError:
                    c1 = None  # blended flow not relaxing: theorem does not apply
                if c1 is not None:
                    g = TimeGrid(max(10.0, 1.2 * c1.extras["t_switch"]), 801)
                    red = _keep(f"{tag} thm1", evolve_reduced(dec, spec.graph, c1.kc_star, g))
                    out.append((f"{tag} thm1 K*={c1.kc_star:.4g}", verify_bound(red, c1)))
                c2 = kc_star_theorem2(k, disp, eta, t1, t2)
                g = TimeGrid(t2, 401)
                red = _keep(f"{tag} thm2", evolve_reduced(dec, spec.graph, c2.kc_star, g))
                ref = _keep(f"{tag} thm2 blended", evolve_blended_reduced(dec, g))
                out.append((f"{tag} thm2 K*={c2.kc_star:.4g}", verify_bound(red, c2, reference=ref)))
            c3 = kc_star_theorem3(spec, eta, t1, t2, constants=k)
            g = TimeGrid(t2, 401)
            full = _keep(f"{tag} thm3", evolve_full(spec, grid=g, kc=c3.kc_star))
            coh = evolve_blended_coherent(spec, grid=g)
            out.append((f"{tag} thm3 K*={c3.kc_star:.4g}", verify_bound(full, c3, reference=coh)))
            c4 = kc_star_theorem4(spec, eta, t1, constants=k)
            full = _keep(f"{tag} thm4", evolve_full(spec, grid=GRID, kc=c4.kc_star))
            out.append((f"{tag} thm4 K*={c4.kc_star:.4g}", verify_bound(full, c4)))
    return out


# -- criteria -------------------------------------------------------------


def test_criterion_01_example1_steady_state(capsys):
    t0 = time.perf_counter()
    rho_r = steady_state(decomposition("example1").blended_generator())
    elapsed = time.perf_counter() - t0
    err = float(np.abs(rho_r - TARGET_RHO_R).max())
    got = np.array2string(rho_r, precision=4, suppress_small=True).replace("\n", "")
    report(1, err <= 1e-8 and elapsed < 1.0,
           f"steady state {got}, max deviation from listed value {err:.3e} (tol 1e-8), {elapsed:.2f}s", capsys)


def test_criterion_02_steady_relaxation_at_listed_gains(capsys):
    t0 = time.perf_counter()
    runs = steady_runs()
    rho_r = steady_state(decomposition("example1").blended_generator())
    elapsed = (time.perf_counter() - t0) / len(runs)
    ok, parts = elapsed < 10, []
    for (eta, kc), full in runs.items():
        t = full.times
        err = distance_to_state(reduced_of_full(full), rho_r)
        below = np.flatnonzero(err <= eta)
        crossed = below.size > 0
        t_cross = t[below[0]] if crossed else np.inf
        transient = float(err[t >= t_cross].max()) if crossed else np.inf
        tail = tail_max(t, err)
        good = crossed and transient <= 1.25 * eta and tail <= eta
        ok &= good
        parts.append(f"K={kc:g}: cross t={t_cross:.2f}, tail max {tail:.4f} vs eta {eta}")
    report(2, ok, "; ".join(parts) + f"; {elapsed:.2f}s/run", capsys)


def test_criterion_03_blended_tracking_at_listed_gains(capsys):
    t0 = time.perf_counter()
    runs = blended_runs()
    elapsed = (time.perf_counter() - t0) / len(runs)
    eta = 0.01
    ok, parts = elapsed < 10, []
    for (t2, kc), (red, ref) in runs.items():
        err = distance_to_state(red.states, ref.states)
        worst = float(err[red.times >= 0.5].max())
        ok &= worst <= 1.2 * eta
        parts.append(f"T2={t2:g} K={kc:g}: max {worst:.5f} vs {1.2 * eta:.3f}")
    report(3, ok, "; ".join(parts) + f"; {elapsed:.2f}s/run", capsys)


def test_criterion_04_projection_identity(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(20240611)
    basis = projection_basis(build_induced_graph(QuantumGraph.complete(3)))
    worst = 0.0
    for _ in range(100):
        g = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
        rho = g @ g.conj().T
        rho /= np.trace(rho)
        lhs = basis.P @ (basis.P.T @ vectorize(rho))
        worst = max(worst, float(np.linalg.norm(lhs - vectorize(permutation_invariant_projection(rho)))))
    elapsed = time.perf_counter() - t0
    report(4, worst <= 1e-12 and elapsed < 5, f"max residual {worst:.2e} over 100 states, {elapsed:.2f}s", capsys)


def test_criterion_05_component_counts(capsys):
    t0 = time.perf_counter()
    cases = {
        "n=2 one edge": (QuantumGraph(2, ((1, 2, 1.0),)), 10),
        "n=3 complete": (QuantumGraph.complete(3), 20),
    }
    ok, parts = True, []
    for label, (g, want) in cases.items():
        p = build_induced_graph(g).p
        ok &= p == want
        parts.append(f"{label}: p={p}")
    for n in (2, 3):
        p = build_induced_graph(QuantumGraph.complete(n)).p
        ok &= p == comb(n + 3, 3)
    elapsed = time.perf_counter() - t0
    report(5, ok and elapsed < 1, ", ".join(parts) + f", multiset formula matched, {elapsed:.2f}s", capsys)


def test_criterion_06_separable_equivalence(capsys):
    t0 = time.perf_counter()
    runs = equivalence_runs()
    elapsed = time.perf_counter() - t0
    worst = {kc: float(np.abs(reduced_of_full(f) - r.states).max()) for kc, (f, r) in runs.items()}
    ok = max(worst.values()) <= 1e-6 and elapsed < 10
    report(6, ok, ", ".join(f"K={k:g}: {v:.1e}" for k, v in worst.items()) + f" (tol 1e-6), {elapsed:.2f}s", capsys)


def test_criterion_07_coherent_tracking_and_floor(capsys):
    t0 = time.perf_counter()
    coh, fulls = coherent_runs()
    elapsed = time.perf_counter() - t0
    t = GRID.times
    errs = {kc: coherent_error(f, coh) for kc, f in fulls.items()}
    window = float(errs[40.0][(t >= 0.5) & (t <= 4.0)].max())
    floors = {kc: tail_max(t, e) for kc, e in errs.items()}
    ratio = floors[40.0] / floors[80.0]
    ok = window <= 0.05 and abs(ratio - 2) <= 0.5 and elapsed < 30
    report(7, ok, f"max on [0.5,4] at K=40 {window:.4f} (<=0.05); floors {floors[40.0]:.4f}/{floors[80.0]:.4f}, "
                  f"ratio {ratio:.3f} (2 +- 25%), {elapsed:.2f}s", capsys)


def test_criterion_08_symmetrization_at_certified_gain(capsys):
    t0 = time.perf_counter()
    runs = symmetrization_runs()
    elapsed = time.perf_counter() - t0
    ok, parts = elapsed < 30, []
    for eta, (cert, full) in runs.items():
        err = symmetrization_error(full)
        worst = float(err[full.times >= 0.5].max())
        ok &= worst <= eta
        parts.append(f"eta={eta}: K*={cert.kc_star:.2f}, max {worst:.4f}")
    report(8, ok, "; ".join(parts) + f"; {elapsed:.2f}s", capsys)


def test_criterion_09_certificate_sufficiency(capsys):
    t0 = time.perf_counter()
    results = closed_loop_runs()
    elapsed = time.perf_counter() - t0
    failed = [label for label, rep in results if not (rep.passed and rep.slack == 0.0)]
    worst = max(rep.max_violation for _, rep in results)
    ok = not failed and elapsed < 120
    detail = f"{len(results) - len(failed)}/{len(results)} certificates hold with zero slack, " \
             f"largest (value - bound) {worst:.3e}, {elapsed:.1f}s"
    if failed:
        detail += f"; failing: {failed}"
    report(9, ok, detail, capsys)


def test_criterion_10_physicality(capsys):
    if len(_TRAJECTORIES) < 20:  # run standalone: rebuild everything
        steady_runs(), blended_runs(), equivalence_runs(), coherent_runs()
        symmetrization_runs(), closed_loop_runs()
    worst = {"trace_drift": 0.0, "hermiticity": 0.0, "min_eigenvalue": np.inf}
    for traj in _TRAJECTORIES.values():
        assert traj.kind in ("full", "reduced", "blended")
        p = traj.physicality()
        worst["trace_drift"] = max(worst["trace_drift"], p["trace_drift"])
        worst["hermiticity"] = max(worst["hermiticity"], p["hermiticity"])
        worst["min_eigenvalue"] = min(worst["min_eigenvalue"], p["min_eigenvalue"])
    ok = worst["trace_drift"] <= 1e-10 and worst["hermiticity"] <= 1e-10 and worst["min_eigenvalue"] >= -1e-9
    report(10, ok, f"{len(_TRAJECTORIES)} trajectories: trace drift {worst['trace_drift']:.1e}, "
                   f"hermiticity {worst['hermiticity']:.1e}, min eigenvalue {worst['min_eigenvalue']:.1e}", capsys)


if __name__ == "__main__":
    tests = [v for k, v in sorted(globals().items()) if k.startswith("test_criterion_")]
    failures = 0
    for fn in tests:
        try:
            fn(None)
        except AssertionError:
            failures += 1
    sys.exit(1 if failures else 0)
