import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import expm

from qblend.certify import (
    CertificateError,
    coefficient_lipschitz,
    decay_rate,
    envelope_bound,
    initial_dispersion,
    invariant_subspace,
    kc_star_theorem1,
    kc_star_theorem2,
    kc_star_theorem3,
    kc_star_theorem4,
    spectral_constants,
    subspace_distance,
    symmetrization_defect,
    verify_bound,
)
from qblend.dynamics import TimeGrid, evolve_blended_reduced, evolve_full, evolve_reduced
from qblend.graph import QuantumGraph
from qblend.induced import build_induced_graph, projection_basis
from qblend.network import NetworkSpec, direct_rhs, separable_decomposition
from qblend.operators import SIGMA_MINUS, SIGMA_PLUS, SIGMA_Z, embed_single_qubit_op, tensor, vectorize

from conftest import seeds


def _ad_by_columns(spec):
    """A_d assembled column by column from the plain matrix right-hand side."""
    d = spec.dim
    cols = []
    for b in range(d):
        for a in range(d):
            e = np.zeros((d, d), dtype=complex)
            e[a, b] = 1
            cols.append(vectorize(direct_rhs(spec, e, 0.0)))
    return np.array(cols).T


def test_constants_example1(example1):
    k = spectral_constants(example1.spec)
    assert k.mu == pytest.approx(2 / 3)
    assert k.lambda_m_Q == pytest.approx(3) and k.lambda_m_Qd == pytest.approx(3)
    assert k.norm_Ad == pytest.approx(np.linalg.norm(_ad_by_columns(example1.spec), 2))
    # block-diagonal norm is the largest local norm; qubit 3 carries the rate-3 dissipator
    assert k.norm_L == pytest.approx(3 * math.sqrt(2))
    assert k.L_c >= 1 and not k.notes


def test_constants_inseparable_network(example3):
    k = spectral_constants(example3.spec)
    assert k.mu is None and k.norm_L is None
    assert any("inseparable" in s for s in k.notes)
    assert k.norm_Ad == pytest.approx(np.linalg.norm(_ad_by_columns(example3.spec), 2))


def test_decay_rate_undefined_without_decay():
    with pytest.raises(CertificateError):
        decay_rate(np.diag([0.0, 1j, -1j]))


def test_defective_generator_has_no_lipschitz_constant():
    with pytest.raises(CertificateError, match="defective"):
        coefficient_lipschitz(np.array([[-1.0, 1.0], [0.0, -1.0]]))


def test_envelope_degrees():
    jordan = np.array([[0.0, 1.0], [0.0, 0.0]])
    assert envelope_bound(jordan, 3.0).m == 1
    env = envelope_bound(np.zeros((3, 3)), 5.0)
    assert env.m == 0 and env.M == pytest.approx(1.1)
    with pytest.raises(ValueError):
        envelope_bound(np.array([[0.5]]), 1.0)
    with pytest.raises(ValueError):
        envelope_bound(np.zeros((2, 2)), 0.0)


@given(seeds, st.floats(0.5, 6))
def test_envelope_dominates_norm(seed, horizon):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(4, 4))
    a = a - a.T  # skew: purely imaginary spectrum
    a[0, 1] += rng.normal()  # perturbation that can create transient growth
    lam = np.linalg.eigvals(a).real.max()
    a = a - max(lam, 0) * np.eye(4)
    env = envelope_bound(a, horizon)
    ts = np.random.default_rng(seed + 1).uniform(0, horizon, 1000)
    norms = np.array([np.linalg.norm(expm(a * t), 2) for t in ts])
    assert np.all(norms <= env(ts) * (1 + 1e-9))


def _certificate_inputs(sc):
    dec = separable_decomposition(sc.spec)
    return spectral_constants(sc.spec, dec), initial_dispersion(dec)


def test_theorem1_formula(example1):
    k, disp = _certificate_inputs(example1)
    eta = 0.01
    cert = kc_star_theorem1(k, disp, eta)
    d = k.L_c * k.norm_L / k.lambda_m_Q * (disp / 3 + k.norm_L / k.mu) + 3 * k.norm_L / k.lambda_m_Q
    assert cert.D == pytest.approx(d)
    assert cert.C == pytest.approx((1 + math.sqrt(2)) * (disp + k.L_c))
    assert cert.kc_star == pytest.approx(max(k.mu / k.lambda_m_Q, 2 * (1 + math.sqrt(2)) * d / eta))
    assert np.allclose(cert.extras["rho_r"], np.diag([0.25, 0.75]))


def test_dispersion_example1(example1):
    # factors |0><0|, I/2, |1><1| around their mean I/2
    assert initial_dispersion(separable_decomposition(example1.spec)) == pytest.approx(1.0)


def test_theorem2_formula(example2):
    k, disp = _certificate_inputs(example2)
    cert = kc_star_theorem2(k, disp, 0.01, 0.5, 4.0)
    f = cert.extras["f_T2"]
    d = 3 * k.norm_L / k.lambda_m_Q + f * k.norm_L / (3 * k.lambda_m_Q) * disp
    assert cert.D == pytest.approx(d)
    first = math.log(2 * disp / 0.01) / (0.5 * k.lambda_m_Q)
    assert cert.kc_star == pytest.approx(max(first, 2 * d / 0.01))


def test_theorem3_and_4_formulas(example3):
    spec = example3.spec
    k = spectral_constants(spec)
    c = symmetrization_defect(spec.initial_state)
    c3 = kc_star_theorem3(spec, 0.05, 0.5, 4.0, constants=k)
    f = c3.extras["f_T2"]
    d3 = k.norm_Ad / 3 + f * k.norm_Ad / 3 * (c + 4.0 * k.norm_Ad)
    assert c3.C == pytest.approx(c) and c3.D == pytest.approx(d3)
    assert c3.kc_star == pytest.approx(max(math.log(2 * c / 0.05) / 1.5, 2 * d3 / 0.05))
    c4 = kc_star_theorem4(spec, 0.05, 0.5, constants=k)
    assert c4.kc_star == pytest.approx(max(math.log(2 * c / 0.05) / 1.5, 2 * k.norm_Ad / (0.05 * 3)))


def test_symmetric_start_drops_transient_branch(example3):
    spec = example3.spec
    rho0 = np.eye(8) / 8
    cert = kc_star_theorem4(spec, 0.05, 0.5, rho0=rho0)
    assert cert.branches[0] is None
    assert cert.kc_star == pytest.approx(2 * spectral_constants(spec).norm_Ad / (0.05 * 3))


@pytest.mark.parametrize("bad", [dict(eta=0.0), dict(eta=0.1, t1=-1.0), dict(eta=0.1, t1=2.0, t2=1.0)])
def test_certificate_input_checks(example1, bad):
    args = {"eta": 0.1, "t1": 0.5, "t2": 4.0, **bad}
    with pytest.raises(ValueError):
        kc_star_theorem3(example1.spec, args["eta"], args["t1"], args["t2"])


def test_certificate_json(example1):
    k, disp = _certificate_inputs(example1)
    doc = kc_star_theorem2(k, disp, 0.05, 0.5, 2.0).to_dict()
    text = json.dumps(doc)
    assert {"theorem", "inputs", "constants", "K_c_star"} <= set(json.loads(text))


def test_relabel_invariance(example1):
    spec = example1.spec
    perm = (2, 3, 1)  # qubit j becomes perm[j-1]
    h = embed_single_qubit_op(SIGMA_Z, perm[0], 3)
    lind = ((1.0, embed_single_qubit_op(SIGMA_MINUS, perm[1], 3)),
            (1.0, embed_single_qubit_op(math.sqrt(3) * SIGMA_PLUS, perm[2], 3)))
    factors = [None] * 3
    for j, f in enumerate(separable_decomposition(spec).initial_factors):
        factors[perm[j] - 1] = f
    moved = NetworkSpec(spec.graph.relabeled(perm), h, lind, spec.kc, tensor(*factors))
    a, b = spectral_constants(spec), spectral_constants(moved)
    for name in ("mu", "lambda_m_Q", "lambda_m_Qd", "norm_L", "norm_Ad", "L_c"):
        assert getattr(a, name) == pytest.approx(getattr(b, name))


@given(st.floats(0.5, 50), st.floats(0.01, 2))
def test_consensus_modes_contract(kc, t):
    b = projection_basis(build_induced_graph(QuantumGraph.complete(3)))
    q = build_induced_graph(QuantumGraph.complete(3)).laplacian
    block = b.S.T @ expm(-kc * q * t) @ b.S
    assert np.linalg.norm(block, 2) <= math.exp(-kc * b.lambda_m * t) + 1e-12


def test_verify_bound_kind_checks(example1):
    k, disp = _certificate_inputs(example1)
    cert = kc_star_theorem1(k, disp, 0.1)
    full = evolve_full(example1.spec, grid=TimeGrid(1.0, 5))
    with pytest.raises(TypeError):
        verify_bound(full, cert)
    with pytest.raises(ValueError):
        verify_bound(full, target="symmetrization")


def test_slack_semantics(example3):
    full = evolve_full(example3.spec, grid=TimeGrid(2.0, 21), kc=10.0)
    tight = verify_bound(full, target="symmetrization", bound=0.0)
    assert not tight.passed and tight.max_violation > 0
    loose = verify_bound(full, target="symmetrization", bound=0.0, slack=tight.max_violation)
    assert loose.passed


def test_theorem1_eta_regime_at_gain_70(example1):
    spec = example1.spec
    dec = separable_decomposition(spec)
    k = spectral_constants(spec, dec)
    cert = kc_star_theorem1(k, initial_dispersion(dec), 0.01)
    t_sw = cert.extras["t_switch"]
    grid = TimeGrid(1.3 * t_sw, 400)
    red = evolve_reduced(dec, spec.graph, 70.0, grid)
    rep = verify_bound(red, cert, bound=lambda t: np.where(t >= t_sw, 0.01, np.nan))
    assert rep.passed and rep.horizon[0] >= t_sw


def test_zero_dynamics_network_meets_tiny_eta():
    spec = NetworkSpec(QuantumGraph.complete(3), np.zeros((8, 8)), initial_state=tensor(
        np.diag([1.0, 0]), np.eye(2) / 2, np.diag([0, 1.0])))
    cert = kc_star_theorem4(spec, 1e-6, 0.5)
    full = evolve_full(spec, grid=TimeGrid(2.0, 41), kc=cert.kc_star)
    assert verify_bound(full, cert).passed


def test_subspace_variant_for_dephasing_network():
    n = 3
    graph = QuantumGraph.complete(n)
    h = sum(embed_single_qubit_op(c * SIGMA_Z, j + 1, n) for j, c in enumerate((0.5, 1.0, 1.5)))
    lind = tuple((0.4, embed_single_qubit_op(SIGMA_Z, j, n)) for j in (1, 2, 3))
    plus = np.full((2, 2), 0.5)
    rho0 = tensor(plus, np.diag([0.9, 0.1]), np.array([[0.3, 0.2j], [-0.2j, 0.7]]))
    spec = NetworkSpec(graph, h, lind, 0.0, rho0)
    dec = separable_decomposition(spec)
    k = spectral_constants(spec, dec)
    basis = invariant_subspace(dec.blended_generator())
    assert len(basis) == 2
    assert subspace_distance(np.diag([0.2, 0.8]), basis) == pytest.approx(0, abs=1e-12)
    cert = kc_star_theorem1(k, initial_dispersion(dec), 0.05, invariant_basis=basis)
    grid = TimeGrid(max(5.0, 1.2 * cert.extras["t_switch"]), 300)
    red = evolve_reduced(dec, graph, cert.kc_star, grid)
    assert verify_bound(red, cert).passed


def test_theorem2_closed_loop(example2):
    spec = example2.spec
    dec = separable_decomposition(spec)
    k = spectral_constants(spec, dec)
    cert = kc_star_theorem2(k, initial_dispersion(dec), 0.05, 0.5, 3.0)
    grid = TimeGrid(3.0, 121)
    red = evolve_reduced(dec, spec.graph, cert.kc_star, grid)
    rep = verify_bound(red, cert, reference=evolve_blended_reduced(dec, grid))
    assert rep.passed
    assert rep.horizon == pytest.approx((0.5, 3.0))
