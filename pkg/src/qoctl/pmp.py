"""Algebraic optimality conditions of the minimum principle, as residuals.

Each condition is written as a sum of terms that must vanish. The report
keeps the raw sum and the sum divided by its largest term, so a single
relative threshold works across very different Bloch magnitudes.

Condition keys (heat and time objectives, every model):

``energy_balance``      conserved value written in Bloch components
``level_stationarity``  derivative of the pseudo-Hamiltonian in ``eps``
``collinearity``        ``|a x q|``, i.e. ``[pi, rho] = 0``
``coherence_x/_y``      in-plane components of the commutator condition
``pseudo_hamiltonian``  ``H - K`` evaluated directly from the dynamics
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .bloch import as_vector, costate_operator, to_density
from .dissipators import (
    ModelKind,
    adjoint_dissipator_matrix,
    dissipator_matrix,
    equilibrium_az,
    equilibrium_az_slope,
)
from .dynamics import Objective, pseudo_hamiltonian
from .errors import InputDomainError

ATOL = 1e-10
RTOL = 1e-6
PROBE_DELTA = 1e-4

CONDITION_KEYS = (
    "energy_balance",
    "level_stationarity",
    "collinearity",
    "coherence_x",
    "coherence_y",
    "pseudo_hamiltonian",
)


@dataclass(frozen=True)
class Residual:
    raw: float
    relative: float
    passed: bool

    @classmethod
    def from_terms(cls, terms, value=None, atol=ATOL, rtol=RTOL):
        terms = np.asarray(terms, dtype=float)
        raw = float(np.sum(terms)) if value is None else float(value)
        scale = float(np.max(np.abs(terms))) if terms.size else 0.0
        rel = raw / scale if scale > 0 else raw
        return cls(raw, rel, bool(abs(raw) <= atol or abs(rel) <= rtol))


@dataclass
class PmpReport:
    objective: Objective
    model: object
    residuals: dict
    K: float
    probe: dict = field(default_factory=dict)

    @property
    def verdict(self):
        return all(r.passed for r in self.residuals.values())

    def max_relative(self):
        return max(abs(r.relative) for r in self.residuals.values())

    def to_jsonl(self):
        lines = [
            json.dumps({"eq": k, "raw": r.raw, "relative": r.relative, "pass": r.passed})
            for k, r in self.residuals.items()
        ]
        return "\n".join(lines) + "\n"


def _collinearity(a, q):
    terms = np.array([a[1] * q[2], a[2] * q[1], a[2] * q[0], a[0] * q[2], a[0] * q[1], a[1] * q[0]])
    return Residual.from_terms(terms, value=np.linalg.norm(np.cross(a, q)))


def heat_residuals(model, a, q, eps, K, lam=(0.0, 0.0, 0.0, 0.0)):
    """Stationarity conditions of the minimum-heat problem at one point."""
    a = as_vector(a, "Bloch vector")
    q = as_vector(q, "costate")
    model.check_eps(eps)
    g = model.gamma
    aeq = float(equilibrium_az(model, eps))
    slope = float(equilibrium_az_slope(model, eps))
    dz = a[2] - aeq
    p = q[2] - 0.5 * eps  # shifted costate
    perp = (a[0] * q[0], a[1] * q[1])
    kind = model.kind
    if kind is ModelKind.GIBBS:
        energy = [*perp, a[2] * p, -aeq * p, K / g]
        level = [slope * p, 0.5 * dz]
        coh = [[aeq * q[j], 0.5 * eps * a[j]] for j in (0, 1)]
    elif kind is ModelKind.BOSONIC:
        energy = [*perp, 2 * a[2] * p, -2 * aeq * p, -2 * aeq * K / g]
        level = [perp[0] * slope, perp[1] * slope, 2 * a[2] * p * slope, aeq * a[2], -aeq * aeq]
        coh = [[a[j] * q[2], -0.5 * eps * a[j], -aeq * q[j]] for j in (0, 1)]
    else:
        energy = [0.5 * perp[0], 0.5 * perp[1], a[2] * p, -aeq * p, K / g]
        level = [slope * p, 0.5 * dz]
        coh = [[aeq * q[j], -a[j] * q[2], 0.5 * eps * a[j]] for j in (0, 1)]
    h = pseudo_hamiltonian(model, a, q, eps, lam, Objective.HEAT)
    res = {
        "energy_balance": Residual.from_terms(energy),
        "level_stationarity": Residual.from_terms(level),
        "collinearity": _collinearity(a, q),
        "coherence_x": Residual.from_terms(coh[0]),
        "coherence_y": Residual.from_terms(coh[1]),
        "pseudo_hamiltonian": Residual.from_terms([h, -K]),
    }
    return PmpReport(Objective.HEAT, model, res, float(K))


def time_residuals(model, a, q, eps, lam=(0.0, 0.0, 0.0, 0.0)):
    """Stationarity conditions of the minimum-time problem (``K = 0``)."""
    a = as_vector(a, "Bloch vector")
    q = as_vector(q, "costate")
    model.check_eps(eps)
    g = model.gamma
    aeq = float(equilibrium_az(model, eps))
    slope = float(equilibrium_az_slope(model, eps))
    perp = (a[0] * q[0], a[1] * q[1])
    kind = model.kind
    if kind is ModelKind.GIBBS:
        energy = [*perp, a[2] * q[2], -aeq * q[2], -1.0 / g]
        level = [slope * q[2]]
        coh = [[aeq * q[j]] for j in (0, 1)]
    elif kind is ModelKind.BOSONIC:
        energy = [*perp, 2 * a[2] * q[2], -2 * aeq * q[2], 2 * aeq / g]
        level = [perp[0] * slope, perp[1] * slope, 2 * a[2] * q[2] * slope]
        coh = [[a[2] * q[j], -aeq * q[j]] for j in (0, 1)]
    else:
        energy = [0.5 * perp[0], 0.5 * perp[1], a[2] * q[2], -aeq * q[2], -1.0 / g]
        level = [slope * q[2]]
        coh = [[a[2] * q[j], -aeq * q[j]] for j in (0, 1)]
    h = pseudo_hamiltonian(model, a, q, eps, lam, Objective.TIME)
    res = {
        "energy_balance": Residual.from_terms(energy),
        "level_stationarity": Residual.from_terms(level),
        "collinearity": _collinearity(a, q),
        "coherence_x": Residual.from_terms(coh[0]),
        "coherence_y": Residual.from_terms(coh[1]),
        "pseudo_hamiltonian": Residual.from_terms([h]),
    }
    return PmpReport(Objective.TIME, model, res, 0.0)


def residuals(model, a, q, eps, objective, K=0.0, lam=(0.0, 0.0, 0.0, 0.0)):
    if Objective(objective) is Objective.HEAT:
        return heat_residuals(model, a, q, eps, K, lam)
    return time_residuals(model, a, q, eps, lam)


def _generator(model, rho, eps):
    D = 0.5 * eps * np.diag([2.0, 0.0]).astype(complex)
    return -1j * (D @ rho - rho @ D) + dissipator_matrix(model, rho, eps), D


def _adjoint_generator(model, X, eps, D):
    return 1j * (D @ X - X @ D) + adjoint_dissipator_matrix(model, X, eps)


def commutator_conditions(model, a, q, eps, objective=Objective.HEAT):
    """Return ``(|a x q|, max|residual of the double-commutator condition|)``.

    The second value is
    ``[pi, L[rho]] + [rho, L^dag[pi]] - [rho, L^dag[D]]`` (heat) or the same
    without the last term (time), evaluated with 2x2 matrices.
    """
    a = as_vector(a, "Bloch vector")
    q = as_vector(q, "costate")
    rho = to_density(a)
    pi = costate_operator(q)
    Lrho, D = _generator(model, rho, eps)
    X = pi - D if Objective(objective) is Objective.HEAT else pi
    LX = _adjoint_generator(model, X, eps, D)
    m = (pi @ Lrho - Lrho @ pi) + (rho @ LX - LX @ rho)
    return float(np.linalg.norm(np.cross(a, q))), float(np.max(np.abs(m)))


@dataclass(frozen=True)
class PseudoHamiltonianValue:
    K: float
    values: np.ndarray
    max_deviation: float
    stdev: float


def conserved_K(trajectory, objective=None):
    """Pseudo-Hamiltonian along a trajectory with costate samples."""
    if trajectory.q is None:
        raise InputDomainError("trajectory has no costate samples")
    if trajectory.model is None:
        raise InputDomainError("trajectory carries no dissipator model")
    objective = Objective(objective or trajectory.objective)
    vals = np.array(
        [
            pseudo_hamiltonian(trajectory.model, trajectory.a[k], trajectory.q[k], trajectory.eps[k], trajectory.lam[k], objective)
            for k in range(trajectory.times.size)
        ]
    )
    K = float(np.mean(vals))
    return PseudoHamiltonianValue(K, vals, float(np.max(np.abs(vals - K))), float(np.std(vals)))


def minimality_probe(model, a, q, eps, objective, lam=(0.0, 0.0, 0.0, 0.0), delta=PROBE_DELTA, tol=1e-12):
    """Heuristic check that the pseudo-Hamiltonian is locally minimal in the controls.

    Perturbs ``eps`` and each generator coefficient by ``+-delta`` and reports
    the largest decrease found. A decrease beyond ``tol`` flags the point as
    not minimal. This is a first-order probe only.
    """
    lam = np.asarray(lam, dtype=float)
    h0 = pseudo_hamiltonian(model, a, q, eps, lam, objective)
    worst = 0.0
    for s in (-delta, delta):
        try:
            worst = min(worst, pseudo_hamiltonian(model, a, q, eps + s, lam, objective) - h0)
        except InputDomainError:
            pass
        for i in range(4):
            dl = lam.copy()
            dl[i] += s
            worst = min(worst, pseudo_hamiltonian(model, a, q, eps, dl, objective) - h0)
    return {"largest_decrease": float(-worst), "minimal": bool(-worst <= tol)}


def trajectory_report(trajectory, K=None, objective=None, lo=0, hi=None):
    """Per-sample residual reports on samples ``lo..hi`` (exclusive)."""
    objective = Objective(objective or trajectory.objective)
    if trajectory.q is None:
        raise InputDomainError("trajectory has no costate samples")
    if K is None:
        K = conserved_K(trajectory, objective).K if objective is Objective.HEAT else 0.0
    hi = trajectory.times.size if hi is None else hi
    return [
        residuals(trajectory.model, trajectory.a[k], trajectory.q[k], trajectory.eps[k], objective, K, trajectory.lam[k])
        for k in range(lo, hi)
    ]
