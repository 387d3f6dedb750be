"""Coupling-gain certificates and their closed-loop verification.

Each ``kc_star_theorem*`` function evaluates the explicit gain threshold for
one closeness guarantee between the network and a blended reduction, and
:func:`verify_bound` checks the guarantee sample-by-sample on a simulated
trajectory.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import expm

from .dynamics import NotRelaxing, Trajectory, steady_state, step_matrix
from .graph import classical_laplacian
from .induced import ProjectionBasis, permutation_invariant_projection, projection_basis
from .network import (
    Inseparable,
    NetworkSpec,
    SeparableDecomposition,
    coherent_dissipative_generator,
    separable_decomposition,
)
from .operators import frobenius_distance, vectorize

SQRT2 = math.sqrt(2.0)
#: real parts with magnitude below this count as zero
ZERO_REAL_TOL = 1e-9
#: eigenvector matrices with condition number above this are treated as defective
DEFECTIVE_COND = 1e10
ENVELOPE_HEADROOM = 1.1


class CertificateError(ValueError):
    """A certificate cannot be produced for the given network."""


# -- constants ------------------------------------------------------------


def decay_rate(g: np.ndarray) -> float:
    """Smallest nonzero ``|Re lambda|`` over the spectrum of ``g``."""
    re = np.linalg.eigvals(g).real
    nz = np.abs(re[np.abs(re) > ZERO_REAL_TOL])
    if nz.size == 0:
        raise CertificateError("no eigenvalue with negative real part: decay rate undefined")
    return float(nz.min())


def coefficient_lipschitz(g: np.ndarray) -> float:
    """Spectral norm of the inverse unit-column eigenvector matrix of ``g``."""
    _, v = np.linalg.eig(g)
    v = v / np.linalg.norm(v, axis=0)
    if np.linalg.cond(v) > DEFECTIVE_COND:
        raise CertificateError("certificate unavailable (defective blended generator)")
    return float(np.linalg.norm(np.linalg.inv(v), 2))


def invariant_subspace(g: np.ndarray) -> list[np.ndarray]:
    """2x2 matrices spanning the non-decaying eigenspace of a 4x4 generator."""
    lam, v = np.linalg.eig(g)
    keep = np.abs(lam.real) <= ZERO_REAL_TOL
    return [v[:, i].reshape(2, 2, order="F") for i in np.flatnonzero(keep)]


def subspace_distance(rho: np.ndarray, basis: list[np.ndarray]) -> float:
    """Frobenius distance from ``rho`` to the complex span of ``basis``."""
    if not basis:
        return float(np.linalg.norm(rho))
    b = np.stack([vectorize(m) for m in basis], axis=1)
    y = vectorize(rho)
    coef, *_ = np.linalg.lstsq(b, y, rcond=None)
    return float(np.linalg.norm(y - b @ coef))


def initial_dispersion(dec: SeparableDecomposition) -> float:
    """``sqrt(sum_j ||rho_j(0) - mean||_F^2)``."""
    rhos = dec.initial_factors
    if rhos is None:
        raise CertificateError("decomposition has no initial state")
    mean = sum(rhos) / len(rhos)
    return float(math.sqrt(sum(frobenius_distance(r, mean) ** 2 for r in rhos)))


@dataclass
class SpectralConstants:
    lambda_m_Q: float | None = None
    lambda_m_Qd: float | None = None
    norm_Ad: float | None = None
    mu: float | None = None
    norm_L: float | None = None
    L_c: float | None = None
    n: int = 0
    notes: list[str] = field(default_factory=list)
    blended_generator: np.ndarray | None = field(default=None, repr=False)
    projected_generator: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("blended_generator")
        d.pop("projected_generator")
        return d


def spectral_constants(
    spec: NetworkSpec,
    dec: SeparableDecomposition | Inseparable | None = None,
    basis: ProjectionBasis | None = None,
) -> SpectralConstants:
    """Every constant the four certificates draw on.

    Reduced-state constants (``mu``, ``norm_L``, ``L_c``) need a separable
    network; quantities that cannot be formed are left ``None`` with a note.
    """
    out = SpectralConstants(n=spec.n)
    if not spec.graph.is_connected():
        out.notes.append("graph is not connected")
    _, out.lambda_m_Q = classical_laplacian(spec.graph)
    basis = basis or projection_basis(spec.induced)
    out.lambda_m_Qd = basis.lambda_m
    a_d = coherent_dissipative_generator(spec)
    out.norm_Ad = float(np.linalg.norm(a_d, 2))
    out.projected_generator = basis.P.T @ a_d @ basis.P

    if dec is None:
        dec = separable_decomposition(spec)
    if isinstance(dec, Inseparable):
        out.notes.append(f"inseparable: {dec.reason}")
        return out
    lbar = dec.blended_generator()
    out.blended_generator = lbar
    out.norm_L = float(max(np.linalg.norm(g, 2) for g in dec.local_generators()))
    try:
        out.mu = decay_rate(lbar)
    except CertificateError as exc:
        out.notes.append(str(exc))
    try:
        out.L_c = coefficient_lipschitz(lbar)
    except CertificateError as exc:
        out.notes.append(str(exc))
    return out


# -- envelopes ------------------------------------------------------------


@dataclass(frozen=True)
class Envelope:
    """``f(t) = M * sum_{j<=m} t**j`` dominating ``||exp(A t)||`` on ``[0, horizon]``."""

    m: int
    M: float
    horizon: float
    validated: bool = True

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return self.M * sum(t**j for j in range(self.m + 1))

    def to_dict(self) -> dict:
        return asdict(self)


def _norm_samples(a: np.ndarray, t_end: float, count: int, offset: float = 0.0) -> tuple:
    ts = offset + np.linspace(0.0, t_end, count)
    e = step_matrix(a, ts[1] - ts[0])
    cur = expm(a * ts[0]) if offset else np.eye(a.shape[0], dtype=complex)
    vals = np.empty(count)
    for i in range(count):
        vals[i] = np.linalg.norm(cur, 2)
        cur = e @ cur
    return ts, vals


def envelope_bound(a, horizon: float, samples: int = 400, max_degree: int | None = None) -> Envelope:
    """Polynomial envelope of ``||exp(a t)||_2`` on ``[0, horizon]``.

    The norm is sampled on a dense grid; for each degree ``m`` the smallest
    ``M`` dominating every sample with 10% headroom is computed, and the
    lowest degree that also dominates a half-step-shifted grid reaching
    ``2 * horizon`` is returned.
    """
    a = np.asarray(a, dtype=complex)
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    lam = np.linalg.eigvals(a) if a.size else np.zeros(0)
    if lam.size and lam.real.max() > ZERO_REAL_TOL * max(1.0, np.linalg.norm(a, 2)):
        raise ValueError(f"eigenvalue with positive real part {lam.real.max():.3e}")
    max_degree = a.shape[0] if max_degree is None else max_degree
    ts, g = _norm_samples(a, horizon, samples)
    half = 0.5 * (ts[1] - ts[0])
    tv, gv = _norm_samples(a, 2 * horizon, 2 * samples, offset=half)
    for m in range(max_degree + 1):
        poly = sum(ts**j for j in range(m + 1))
        M = ENVELOPE_HEADROOM * float(np.max(g / poly))
        env = Envelope(m, M, horizon)
        if np.all(gv <= env(tv)):
            return env
    # no degree generalized: fit the top degree to both grids at once
    ratios = [np.max(y / sum(x**j for j in range(max_degree + 1))) for x, y in ((ts, g), (tv, gv))]
    M = ENVELOPE_HEADROOM * float(max(ratios))
    return Envelope(max_degree, M, horizon, validated=False)


# -- certificates ---------------------------------------------------------


@dataclass
class GainCertificate:
    theorem: int | str
    kc_star: float
    C: float
    D: float
    inputs: dict
    constants: dict
    branches: tuple[float | None, float | None]
    envelope: dict | None = None
    extras: dict = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {
            "theorem": self.theorem,
            "inputs": self.inputs,
            "constants": self.constants,
            "C": self.C,
            "D": self.D,
            "K_c_star": self.kc_star,
            "branches": list(self.branches),
            "envelope": self.envelope,
        }


def _log_branch(c: float, eta: float, t1: float, lam: float) -> float | None:
    """``ln(2C/eta) / (T1 lam)``; ``None`` when ``C = 0`` (no transient)."""
    if c <= 0:
        return None
    return math.log(2 * c / eta) / (t1 * lam)


def _kmax(*branches) -> float:
    vals = [b for b in branches if b is not None]
    return max(vals) if vals else 0.0


def _check_eta(eta: float, t1: float | None = None, t2: float | None = None):
    if not eta > 0:
        raise ValueError(f"eta must be positive, got {eta}")
    if t1 is not None and not t1 > 0:
        raise ValueError(f"T1 must be positive, got {t1}")
    if t2 is not None and not t2 >= t1:
        raise ValueError(f"need T2 >= T1, got T1={t1}, T2={t2}")


def kc_star_theorem1(
    constants: SpectralConstants, dispersion: float, eta: float, *, invariant_basis=None
) -> GainCertificate:
    """Gain for relaxation of every reduced state to the blended steady state.

    With ``invariant_basis`` given, the certificate instead covers convergence
    of ``E(t) = max_j ||rho_j - mean|| + dist(mean, S)`` to ``eta`` for a
    non-relaxing blended flow with invariant subspace ``S``.
    """
    _check_eta(eta)
    k = constants
    for name in ("mu", "L_c", "norm_L", "lambda_m_Q"):
        if getattr(k, name) is None:
            raise CertificateError(f"constant {name} unavailable: {'; '.join(k.notes)}")
    n, lam, norm_l, mu, lc = k.n, k.lambda_m_Q, k.norm_L, k.mu, k.L_c
    D = lc * norm_l / lam * (dispersion / n + norm_l / mu) + n * norm_l / lam
    C1 = dispersion + lc
    extras = {"mu": mu}
    if invariant_basis is None:
        rho_r = steady_state(k.blended_generator)
        if isinstance(rho_r, NotRelaxing):
            raise CertificateError(f"blended dynamics is not relaxing: {rho_r.reason}")
        C = (1 + SQRT2) * C1
        branches = (mu / lam, 2 * (1 + SQRT2) * D / eta)
        extras["rho_r"] = rho_r
        theorem = 1
    else:
        C = C1
        branches = (mu / lam, 2 * D / eta)
        extras["invariant_basis"] = list(invariant_basis)
        theorem = "1-subspace"
    extras["t_switch"] = max(0.0, 2 / mu * math.log(C / eta))
    return GainCertificate(
        theorem, _kmax(*branches), C, D,
        {"eta": eta, "dispersion": dispersion}, k.to_dict(), branches, extras=extras,
    )


def kc_star_theorem2(
    constants: SpectralConstants, dispersion: float, eta: float, t1: float, t2: float,
    envelope: Envelope | None = None,
) -> GainCertificate:
    """Gain keeping every reduced state ``eta``-close to the blended path on ``[T1, T2]``."""
    _check_eta(eta, t1, t2)
    k = constants
    if k.blended_generator is None or k.norm_L is None:
        raise CertificateError("theorem 2 needs a separable network")
    env = envelope or envelope_bound(k.blended_generator, t2)
    n, lam, norm_l = k.n, k.lambda_m_Q, k.norm_L
    f = float(env(t2))
    D = n * norm_l / lam + f * norm_l / (n * lam) * dispersion
    branches = (_log_branch(dispersion, eta, t1, lam), 2 * D / eta)
    return GainCertificate(
        2, _kmax(*branches), dispersion, D,
        {"eta": eta, "T1": t1, "T2": t2, "dispersion": dispersion},
        k.to_dict(), branches, env.to_dict(), extras={"f_T2": f},
    )


def symmetrization_defect(rho0) -> float:
    """``||rho - P*(rho)||_F``."""
    return frobenius_distance(rho0, permutation_invariant_projection(rho0))


def _coherent_inputs(spec, constants, rho0):
    rho0 = spec.initial_state if rho0 is None else rho0
    if rho0 is None:
        raise CertificateError("no initial state")
    k = constants or spectral_constants(spec, dec=Inseparable("skipped"))
    if k.lambda_m_Qd is None:
        raise CertificateError("induced graph has no edges")
    return rho0, k


def kc_star_theorem3(
    spec: NetworkSpec, eta: float, t1: float, t2: float, *, rho0=None,
    constants: SpectralConstants | None = None, envelope: Envelope | None = None,
) -> GainCertificate:
    """Gain keeping the network ``eta``-close to the blended coherent path on ``[T1, T2]``."""
    _check_eta(eta, t1, t2)
    rho0, k = _coherent_inputs(spec, constants, rho0)
    env = envelope or envelope_bound(k.projected_generator, t2)
    c = symmetrization_defect(rho0)
    a, lam = k.norm_Ad, k.lambda_m_Qd
    f = float(env(t2))
    D = a / lam + f * a / lam * (c + t2 * a)
    branches = (_log_branch(c, eta, t1, lam), 2 * D / eta)
    return GainCertificate(
        3, _kmax(*branches), c, D, {"eta": eta, "T1": t1, "T2": t2},
        k.to_dict(), branches, env.to_dict(), extras={"f_T2": f},
    )


def kc_star_theorem4(
    spec: NetworkSpec, eta: float, t1: float, *, rho0=None,
    constants: SpectralConstants | None = None,
) -> GainCertificate:
    """Gain bringing the network within ``eta`` of the symmetric subspace for ``t >= T1``."""
    _check_eta(eta, t1)
    rho0, k = _coherent_inputs(spec, constants, rho0)
    c = symmetrization_defect(rho0)
    a, lam = k.norm_Ad, k.lambda_m_Qd
    D = a / lam
    branches = (_log_branch(c, eta, t1, lam), 2 * a / (eta * lam))
    return GainCertificate(4, _kmax(*branches), c, D, {"eta": eta, "T1": t1}, k.to_dict(), branches)


# -- verification ---------------------------------------------------------


@dataclass
class BoundReport:
    target: str
    times: np.ndarray
    values: np.ndarray
    bound: np.ndarray  # NaN where the sample is outside the checked window
    max_violation: float
    passed: bool
    horizon: tuple[float, float]
    slack: float = 0.0

    def to_dict(self, samples: bool = False) -> dict:
        d = {
            "target": self.target,
            "max_violation": self.max_violation,
            "pass": self.passed,
            "horizon": list(self.horizon),
            "slack": self.slack,
        }
        if samples:
            d["t"] = self.times.tolist()
            d["value"] = self.values.tolist()
            d["bound"] = [None if np.isnan(b) else float(b) for b in self.bound]
        return d


TARGET_KIND = {
    "steady": "reduced",
    "subspace": "reduced",
    "blended": "reduced",
    "coherent": "full",
    "symmetrization": "full",
}
THEOREM_TARGET = {1: "steady", "1-subspace": "subspace", 2: "blended", 3: "coherent", 4: "symmetrization"}


def error_functional(traj: Trajectory, target: str, reference: Trajectory | None = None,
                     rho_r=None, invariant_basis=None) -> np.ndarray:
    """Per-sample value of the named closeness measure."""
    from .dynamics import coherent_error, distance_to_state, symmetrization_error

    want = TARGET_KIND.get(target)
    if want is None:
        raise ValueError(f"unknown target {target!r}")
    if traj.kind != want:
        raise TypeError(f"target {target!r} needs a {want} trajectory, got {traj.kind}")
    if target == "steady":
        return distance_to_state(traj.states, rho_r)
    if target == "subspace":
        mean = traj.states.mean(axis=1)
        spread = distance_to_state(traj.states, mean)
        return spread + np.array([subspace_distance(m, invariant_basis) for m in mean])
    if target == "blended":
        if reference is None or reference.kind != "blended":
            raise TypeError("target 'blended' needs a blended reference trajectory")
        return distance_to_state(traj.states, reference.states)
    if target == "coherent":
        if reference is None or reference.kind != "coherent":
            raise TypeError("target 'coherent' needs a coherent reference trajectory")
        return coherent_error(traj, reference)
    return symmetrization_error(traj)


def certificate_bound(cert: GainCertificate) -> Callable[[np.ndarray], np.ndarray]:
    """Bound as a function of time; NaN marks samples the guarantee does not cover."""
    eta = cert.inputs["eta"]
    if cert.theorem in (1, "1-subspace"):
        mu, t_sw, C = cert.extras["mu"], cert.extras["t_switch"], cert.C
        return lambda t: np.where(t <= t_sw, C * np.exp(-mu * t / 2), eta)
    t1 = cert.inputs["T1"]
    t2 = cert.inputs.get("T2", np.inf)
    eps = 1e-12 * max(1.0, t1)
    return lambda t: np.where((t >= t1 - eps) & (t <= t2 + eps), eta, np.nan)


def verify_bound(
    traj: Trajectory,
    certificate: GainCertificate | None = None,
    *,
    target: str | None = None,
    bound: Callable | float | None = None,
    reference: Trajectory | None = None,
    slack: float = 0.0,
) -> BoundReport:
    """Check a certificate (or an explicit bound) against a simulated trajectory.

    Passes when ``value - bound <= slack`` on every covered sample.
    """
    if certificate is None and bound is None:
        raise ValueError("give a certificate or an explicit bound")
    if target is None:
        if certificate is None:
            raise ValueError("target is required with an explicit bound")
        target = THEOREM_TARGET[certificate.theorem]
    extras = certificate.extras if certificate else {}
    values = error_functional(
        traj, target, reference, extras.get("rho_r"), extras.get("invariant_basis")
    )
    t = traj.times
    if bound is None:
        fn = certificate_bound(certificate)
    elif callable(bound):
        fn = bound
    else:
        fn = lambda tt: np.full_like(tt, float(bound))  # noqa: E731
    b = np.asarray(fn(t), dtype=float)
    covered = ~np.isnan(b)
    if not covered.any():
        raise ValueError("no trajectory sample falls inside the certified window")
    excess = values[covered] - b[covered]
    worst = float(excess.max())
    span = (float(t[covered][0]), float(t[covered][-1]))
    return BoundReport(target, t, values, b, worst, worst <= slack, span, slack)
