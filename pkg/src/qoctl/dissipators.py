"""Thermal GKSL dissipators of a driven qubit, in Bloch and matrix form.

The rotating-frame Hamiltonian is ``D = (eps/2)(1 + sigma_z)``: ground state
on the -z pole at energy 0, excited state on +z at energy ``eps``.

Every model acts on the Bloch vector as an affine map::

    da/dt|_diss = (m_perp a_x, m_perp a_y, m_z (a_z - a_eq))

with model-specific rates ``m_perp, m_z`` and the common equilibrium
``a_eq = -tanh(beta eps / 2)``.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import expit

from .bloch import (
    IDENTITY,
    SIGMA_MINUS,
    SIGMA_PLUS,
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    as_bloch,
    as_vector,
    from_density,
    is_unitary,
    to_density,
)
from .errors import InputDomainError, SingularRateError


class ModelKind(str, Enum):
    GIBBS = "gibbs"
    BOSONIC = "bosonic"
    FERMIONIC = "fermionic"


KIND_CODES = {ModelKind.GIBBS: 0, ModelKind.BOSONIC: 1, ModelKind.FERMIONIC: 2}


@dataclass(frozen=True)
class DissipatorModel:
    """A thermal dissipator with decoherence rate ``gamma`` and inverse temperature ``beta``.

    ``gamma = 0`` is accepted and switches dissipation off, which is handy for
    checking that purely unitary schedules conserve purity.
    """

    kind: ModelKind
    gamma: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        try:
            object.__setattr__(self, "kind", ModelKind(self.kind))
        except ValueError:
            raise InputDomainError(f"unknown dissipator kind {self.kind!r}") from None
        if not (np.isfinite(self.gamma) and self.gamma >= 0):
            raise InputDomainError(f"gamma must be non-negative, got {self.gamma}")
        if not (np.isfinite(self.beta) and self.beta > 0):
            raise InputDomainError(f"beta must be positive, got {self.beta}")

    @property
    def code(self):
        return KIND_CODES[self.kind]

    def check_eps(self, eps):
        """Reject controls outside the model's domain.

        Only the bosonic bath is restricted: ``N_B`` is negative for
        ``eps < 0`` and its rates diverge at ``eps = 0``.
        """
        eps = np.asarray(eps, dtype=float)
        if np.any(np.isnan(eps)):
            raise InputDomainError("eps contains NaN")
        if self.kind is ModelKind.BOSONIC and self.gamma > 0 and np.any(eps <= 0):
            raise SingularRateError(
                "bosonic dissipator needs eps > 0 (rates diverge at eps = 0)"
            )
        return eps


@dataclass(frozen=True)
class OccupationNumbers:
    n_bosonic: float
    n_fermionic: float


def bose_occupation(beta, eps):
    """``N_B = 1/(exp(beta eps) - 1)``, overflow-safe for large ``beta eps``."""
    x = beta * np.asarray(eps, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(x > 0, np.exp(-np.abs(x)) / -np.expm1(-np.abs(x)), 1.0 / np.expm1(x))


def fermi_occupation(beta, eps):
    """``N_F = 1/(exp(beta eps) + 1)``."""
    return expit(-beta * np.asarray(eps, dtype=float))


def occupations(model, eps):
    return OccupationNumbers(
        n_bosonic=float(bose_occupation(model.beta, eps)),
        n_fermionic=float(fermi_occupation(model.beta, eps)),
    )


def _sech2(x):
    # 4 e^{-2|x|} / (1 + e^{-2|x|})^2 stays finite for any x
    e = np.exp(-2.0 * np.abs(x))
    return 4.0 * e / (1.0 + e) ** 2


def equilibrium_az(model, eps):
    """z-component of the instantaneous Gibbs state, ``-tanh(beta eps/2)``."""
    return -np.tanh(0.5 * model.beta * np.asarray(eps, dtype=float))


def equilibrium_az_slope(model, eps):
    """``d a_eq / d eps = -(beta/2)(1 - a_eq^2)``; never positive."""
    return -0.5 * model.beta * _sech2(0.5 * model.beta * np.asarray(eps, dtype=float))


def relaxation_rates(model, eps):
    """Return ``(m_perp, m_z, a_eq)`` for the affine Bloch form of the dissipator."""
    eps = model.check_eps(eps)
    g = model.gamma
    aeq = equilibrium_az(model, eps)
    if model.kind is ModelKind.GIBBS:
        return -g * np.ones_like(aeq), -g * np.ones_like(aeq), aeq
    if model.kind is ModelKind.FERMIONIC:
        return -0.5 * g * np.ones_like(aeq), -g * np.ones_like(aeq), aeq
    if g == 0:
        return np.zeros_like(aeq), np.zeros_like(aeq), aeq
    return g / (2.0 * aeq), g / aeq, aeq


def apply_dissipator(model, a, eps):
    """Bloch-space rate ``da/dt`` produced by the dissipator alone."""
    a = as_vector(a, "Bloch vector")
    m_perp, m_z, aeq = (float(v) for v in relaxation_rates(model, eps))
    return np.array([m_perp * a[0], m_perp * a[1], m_z * (a[2] - aeq)])


# -- matrix form -------------------------------------------------------------


def _lindblad_term(L, rho):
    LdL = L.conj().T @ L
    return L @ rho @ L.conj().T - 0.5 * (LdL @ rho + rho @ LdL)


def gibbs_state(model, eps):
    return to_density([0.0, 0.0, float(equilibrium_az(model, eps))])


def dissipator_matrix(model, rho, eps):
    """Apply the dissipator to a density matrix in the rotating frame.

    Written directly from the operator definitions (thermal mixing towards the
    Gibbs state, or jump operators ``sigma_-``/``sigma_+`` weighted by the bath
    occupation), independent of the Bloch-form rates.
    """
    model.check_eps(eps)
    rho = np.asarray(rho, dtype=complex)
    g = model.gamma
    if model.kind is ModelKind.GIBBS:
        return g * (gibbs_state(model, eps) * np.trace(rho) - rho)
    if model.kind is ModelKind.BOSONIC:
        if g == 0:
            return np.zeros((2, 2), dtype=complex)
        n = float(bose_occupation(model.beta, eps))
        return g * ((1.0 + n) * _lindblad_term(SIGMA_MINUS, rho) + n * _lindblad_term(SIGMA_PLUS, rho))
    n = float(fermi_occupation(model.beta, eps))
    return g * ((1.0 - n) * _lindblad_term(SIGMA_MINUS, rho) + n * _lindblad_term(SIGMA_PLUS, rho))


def adjoint_dissipator_matrix(model, X, eps):
    """Heisenberg-picture dual of :func:`dissipator_matrix`."""
    model.check_eps(eps)
    X = np.asarray(X, dtype=complex)
    g = model.gamma
    if model.kind is ModelKind.GIBBS:
        return g * (np.trace(gibbs_state(model, eps) @ X) * IDENTITY - X)

    def dual(L):
        LdL = L.conj().T @ L
        return L.conj().T @ X @ L - 0.5 * (LdL @ X + X @ LdL)

    if model.kind is ModelKind.BOSONIC:
        if g == 0:
            return np.zeros((2, 2), dtype=complex)
        n = float(bose_occupation(model.beta, eps))
        return g * ((1.0 + n) * dual(SIGMA_MINUS) + n * dual(SIGMA_PLUS))
    n = float(fermi_occupation(model.beta, eps))
    return g * ((1.0 - n) * dual(SIGMA_MINUS) + n * dual(SIGMA_PLUS))


def fermionic_decomposition_check(a, eps, gamma=1.0, beta=1.0):
    """Max-abs gap between the fermionic dissipator and Gibbs mixing plus dephasing."""
    a = as_bloch(a)
    model = DissipatorModel(ModelKind.FERMIONIC, gamma, beta)
    rho = to_density(a)
    lhs = dissipator_matrix(model, rho, eps)
    eta = gibbs_state(model, eps)
    rhs = gamma * (eta - rho) + 0.25 * gamma * (a[0] * SIGMA_X + a[1] * SIGMA_Y)
    return float(np.max(np.abs(lhs - rhs)))


# -- H-covariance ------------------------------------------------------------


@dataclass(frozen=True)
class LindbladOpSet:
    """Standard-form jump operators ``(operator, rate)`` for a given Hamiltonian."""

    ops: tuple

    def apply(self, rho):
        out = np.zeros((2, 2), dtype=complex)
        for L, rate in self.ops:
            out += rate * _lindblad_term(L, rho)
        return out


def lindblad_operators(model, H, coupling=None):
    """Jump operators of ``model`` for an arbitrary Hermitian qubit Hamiltonian.

    Built from the spectral projectors of ``H``: the coupling operator is
    split into its energy-lowering and energy-raising parts. Gibbs mixing uses
    the complete set ``sqrt(gamma p_i)|i><j|`` of its eigenbasis.
    """
    evals, evecs = np.linalg.eigh(np.asarray(H, dtype=complex))
    gap = evals[1] - evals[0]
    if gap <= 1e-12:
        raise InputDomainError("H-covariance needs a non-degenerate Hamiltonian")
    proj = [np.outer(evecs[:, k], evecs[:, k].conj()) for k in range(2)]
    g = model.gamma
    if model.kind is ModelKind.GIBBS:
        w = np.exp(-model.beta * (evals - evals[0]))
        w /= w.sum()
        ops = []
        for i in range(2):
            for j in range(2):
                ops.append((np.outer(evecs[:, i], evecs[:, j].conj()), g * w[i]))
        return LindbladOpSet(tuple(ops))
    if coupling is None:
        raise InputDomainError("bath models need a coupling operator")
    A = np.asarray(coupling, dtype=complex)
    lower = proj[0] @ A @ proj[1]
    raise_ = proj[1] @ A @ proj[0]
    if model.kind is ModelKind.BOSONIC:
        n = float(bose_occupation(model.beta, gap))
        return LindbladOpSet(((lower, g * (1.0 + n)), (raise_, g * n)))
    n = float(fermi_occupation(model.beta, gap))
    return LindbladOpSet(((lower, g * (1.0 - n)), (raise_, g * n)))


def h_covariance_check(model, rho, U, eps):
    """Residual of rotating the Hamiltonian versus rotating the state.

    Compares the dissipator built from the jump operators of ``H = U^dag D U``
    with ``U^dag D_D[U rho U^dag] U``, where ``D_D`` is the rotating-frame form.
    """
    U = np.asarray(U, dtype=complex)
    if not is_unitary(U, tol=1e-10):
        raise InputDomainError("U is not unitary")
    rho = np.asarray(rho, dtype=complex)
    D = 0.5 * eps * (IDENTITY + SIGMA_Z)
    H = U.conj().T @ D @ U
    # sigma_x in the eigenbasis of D, carried to the lab frame by U
    coupling = U.conj().T @ (SIGMA_PLUS + SIGMA_MINUS) @ U
    lhs = lindblad_operators(model, H, coupling).apply(rho)
    rhs = U.conj().T @ dissipator_matrix(model, U @ rho @ U.conj().T, eps) @ U
    return float(np.max(np.abs(lhs - rhs)))


def bloch_rate_from_matrix(model, a, eps):
    """Bloch rate of the matrix-form dissipator (used as a cross-check)."""
    return from_density(dissipator_matrix(model, to_density(a), eps))
