"""Co-moving Hamiltonian eigenframe.

A Hamiltonian path is written as ``H(t) = U(t)^dag D(t) U(t)`` with ``D``
diagonal and ``dU/dt = i Lambda U``. ``Lambda`` is stored through four real
coefficients::

    Lambda = ((l0 + l3) 1 + 2 (l1 sx + l2 sy) + (l0 - l3) sz) / 2
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .bloch import IDENTITY, PAULI, is_hermitian, is_unitary
from .errors import DegenerateSpectrumError, InputDomainError


def lambda_matrix(coeffs):
    """Hermitian generator from ``(l0, l1, l2, l3)``; broadcasts over leading axes."""
    c = np.asarray(coeffs, dtype=float)
    l0, l1, l2, l3 = c[..., 0], c[..., 1], c[..., 2], c[..., 3]
    out = np.empty(c.shape[:-1] + (2, 2), dtype=complex)
    out[..., 0, 0] = l0
    out[..., 1, 1] = l3
    out[..., 0, 1] = l1 - 1j * l2
    out[..., 1, 0] = l1 + 1j * l2
    return out


def lambda_coefficients(L):
    """Inverse of :func:`lambda_matrix`."""
    L = np.asarray(L, dtype=complex)
    if not is_hermitian(L, tol=1e-10):
        raise InputDomainError("generator must be Hermitian")
    return np.array([L[0, 0].real, L[0, 1].real, -L[0, 1].imag, L[1, 1].real])


@dataclass(frozen=True)
class LambdaSchedule:
    """Time-indexed generator coefficients.

    ``interpolation="hold"`` keeps sample ``k`` on ``[t_k, t_{k+1})``;
    ``"cubic"`` interpolates samples smoothly.
    """

    times: np.ndarray
    coeffs: np.ndarray
    interpolation: str = "hold"
    _spline: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        c = np.asarray(self.coeffs, dtype=float)
        if c.ndim != 2 or c.shape != (t.size, 4):
            raise InputDomainError("coeffs must have shape (len(times), 4)")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise InputDomainError("times must be strictly increasing")
        if self.interpolation not in ("hold", "cubic"):
            raise InputDomainError(f"unknown interpolation {self.interpolation!r}")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "coeffs", c)
        if self.interpolation == "cubic":
            object.__setattr__(self, "_spline", CubicSpline(t, c, axis=0))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.interpolation == "cubic":
            return self._spline(t)
        idx = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, self.times.size - 1)
        return self.coeffs[idx]


def expi(coeffs, h):
    """``exp(i h Lambda)`` in closed form."""
    c = np.asarray(coeffs, dtype=float)
    c0 = 0.5 * (c[0] + c[3])
    v = np.array([c[1], c[2], 0.5 * (c[0] - c[3])])
    return np.exp(1j * c0 * h) * _su2(v * h)


def _su2(v):
    # exp(i v.sigma)
    r = np.linalg.norm(v)
    if r == 0.0:
        return IDENTITY.copy()
    n = v / r
    return np.cos(r) * IDENTITY + 1j * np.sin(r) * np.tensordot(n, PAULI, axes=(0, 0))


def _expm_antihermitian(A):
    # A = i(c0 1 + v.sigma)
    M = -1j * A
    c0 = 0.5 * np.trace(M).real
    v = 0.5 * np.real(np.einsum("ij,kji->k", M, PAULI))
    return np.exp(1j * c0) * _su2(v)


def reconstruct_U(schedule, U0, t, dt=1e-3):
    """Solve ``dU/dt = i Lambda(t) U`` on ``[0, t]``.

    Held schedules are propagated exactly, one matrix exponential per piece.
    Smooth schedules (cubic ``LambdaSchedule`` or any callable returning
    ``(l0, l1, l2, l3)``) use the fourth-order Magnus integrator with step
    ``dt``; both routes are unitary to rounding.
    """
    U = np.asarray(U0, dtype=complex)
    if not is_unitary(U, tol=1e-10):
        raise InputDomainError("U0 is not unitary")
    if t <= 0:
        return U.copy()
    if isinstance(schedule, LambdaSchedule) and schedule.interpolation == "hold":
        edges = np.concatenate([[0.0], schedule.times[(schedule.times > 0) & (schedule.times < t)], [t]])
        for lo, hi in zip(edges[:-1], edges[1:]):
            U = expi(schedule(0.5 * (lo + hi)), hi - lo) @ U
        return U
    n = max(1, int(np.ceil(t / dt - 1e-9)))
    h = t / n
    g = np.sqrt(3.0) / 6.0
    for k in range(n):
        t0 = k * h
        A1 = 1j * lambda_matrix(schedule(t0 + (0.5 - g) * h))
        A2 = 1j * lambda_matrix(schedule(t0 + (0.5 + g) * h))
        omega = 0.5 * h * (A1 + A2) + (np.sqrt(3.0) / 12.0) * h * h * (A2 @ A1 - A1 @ A2)
        U = _expm_antihermitian(omega) @ U
    return U


def rotate_frame(rho, U):
    """``U rho U^dag``."""
    U = np.asarray(U, dtype=complex)
    return U @ np.asarray(rho, dtype=complex) @ U.conj().T


@dataclass(frozen=True)
class FrameDecomposition:
    """Result of :func:`lambda_from_path`."""

    schedule: LambdaSchedule
    U0: np.ndarray
    energies: np.ndarray  # (N, 2), excited level first
    eigenvectors: np.ndarray  # (N, 2, 2), columns phase-aligned along the path


def lambda_from_path(times, H, gap_floor=None):
    """Generator of the eigenframe of a sampled Hamiltonian path.

    Off-diagonal elements follow from the energy gap and the time derivative
    of ``H`` (fourth-order differences on uniform grids, central inside and
    one-sided at the ends; second order otherwise); the
    diagonal is fixed to zero. Eigenvectors are phase-aligned with the
    previous sample so the frame moves continuously. ``U0`` is the inverse
    eigenvector matrix at the first sample.
    """
    times = np.asarray(times, dtype=float)
    H = np.asarray(H, dtype=complex)
    if H.shape != (times.size, 2, 2):
        raise InputDomainError("H must have shape (len(times), 2, 2)")
    if times.size < 3:
        raise InputDomainError("need at least three samples")
    if not all(is_hermitian(h, tol=1e-10) for h in H):
        raise InputDomainError("every Hamiltonian sample must be Hermitian")

    evals, evecs = np.linalg.eigh(H)
    evals = evals[:, ::-1]
    evecs = evecs[:, :, ::-1].copy()
    gaps = evals[:, 0] - evals[:, 1]
    if gap_floor is None:
        gap_floor = 1e-6 * gaps.max()
    if np.any(gaps < max(gap_floor, 1e-300)):
        k = int(np.argmin(gaps))
        raise DegenerateSpectrumError(f"energy gap {gaps[k]:.3e} below floor at t={times[k]}")

    for k in range(1, times.size):
        for j in range(2):
            ov = np.vdot(evecs[k - 1, :, j], evecs[k, :, j])
            evecs[k, :, j] *= np.conj(ov) / abs(ov)

    dH = _derivative(H, times)
    M = np.einsum("kim,kij,kjn->kmn", evecs.conj(), dH, evecs)
    lam01 = 1j * M[:, 0, 1] / (evals[:, 1] - evals[:, 0])
    coeffs = np.zeros((times.size, 4))
    coeffs[:, 1] = lam01.real
    coeffs[:, 2] = -lam01.imag
    U0 = evecs[0].conj().T
    return FrameDecomposition(LambdaSchedule(times, coeffs, "cubic"), U0, evals, evecs)


def _derivative(f, t):
    h = np.diff(t)
    if t.size < 5 or np.ptp(h) > 1e-9 * h.mean():
        return np.gradient(f, t, axis=0, edge_order=2)
    h = h.mean()
    d = np.empty_like(f)
    d[2:-2] = (f[:-4] - 8 * f[1:-3] + 8 * f[3:-1] - f[4:]) / (12 * h)
    w = np.array([-25, 48, -36, 16, -3]) / (12 * h)
    d[0] = np.tensordot(w, f[:5], axes=(0, 0))
    d[-1] = -np.tensordot(w, f[::-1][:5], axes=(0, 0))
    v = np.array([-3, -10, 18, -6, 1]) / (12 * h)
    d[1] = np.tensordot(v, f[:5], axes=(0, 0))
    d[-2] = -np.tensordot(v, f[::-1][:5], axes=(0, 0))
    return d


def rotdin_identity_check(times, rho_path, schedule, U0, dt=None):
    """Max residual of ``U drho/dt U^dag - (d rho~/dt - i[Lambda, rho~])``.

    ``rho_path`` holds lab-frame density matrices on ``times``; derivatives are
    taken by finite differences, so the residual is bounded by the grid.
    """
    times = np.asarray(times, dtype=float)
    rho = np.asarray(rho_path, dtype=complex)
    if dt is None:
        dt = min(1e-3, float(np.min(np.diff(times))))
    Us = np.empty((times.size, 2, 2), dtype=complex)
    U = np.asarray(U0, dtype=complex)
    Us[0] = U
    for k in range(1, times.size):
        U = reconstruct_U(_shifted(schedule, times[k - 1]), U, times[k] - times[k - 1], dt=dt)
        Us[k] = U
    rho_t = np.einsum("kij,kjl,kml->kim", Us, rho, Us.conj())
    drho = np.gradient(rho, times, axis=0, edge_order=2)
    drho_t = np.gradient(rho_t, times, axis=0, edge_order=2)
    L = lambda_matrix(np.asarray(schedule(times)))
    lhs = np.einsum("kij,kjl,kml->kim", Us, drho, Us.conj())
    rhs = drho_t - 1j * (L @ rho_t - rho_t @ L)
    return float(np.max(np.abs(lhs - rhs)))


def _shifted(schedule, t0):
    if isinstance(schedule, LambdaSchedule) and schedule.interpolation == "hold":
        return LambdaSchedule(schedule.times - t0, schedule.coeffs, "hold")
    return lambda t: schedule(np.asarray(t) + t0)
