"""Qubit algebra in Bloch form.

States are real 3-vectors ``a`` with ``rho = (1 + a.sigma) / 2``; costates
are real 3-vectors ``q`` with ``pi = q.sigma``. Operators are plain
``(2, 2)`` complex numpy arrays.
"""

import numpy as np

from .errors import InputDomainError

IDENTITY = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = np.stack([SIGMA_X, SIGMA_Y, SIGMA_Z])
# sigma_+ = |e><g| with the excited state on the +z pole
SIGMA_PLUS = np.array([[0, 1], [0, 0]], dtype=complex)
SIGMA_MINUS = np.array([[0, 0], [1, 0]], dtype=complex)

PHYSICAL_TOL = 1e-9


def as_vector(v, name="vector"):
    arr = np.asarray(v, dtype=float)
    if arr.shape != (3,):
        raise InputDomainError(f"{name} must have 3 components, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InputDomainError(f"{name} has non-finite components")
    return arr


def as_bloch(a, tol=PHYSICAL_TOL):
    """Validate a physical Bloch vector (``|a| <= 1 + tol``)."""
    arr = as_vector(a, "Bloch vector")
    if np.linalg.norm(arr) > 1.0 + tol:
        raise InputDomainError(f"Bloch vector {arr} has norm {np.linalg.norm(arr)!r} > 1")
    return arr


def pauli_dot(v):
    """Return ``v.sigma`` for a real 3-vector."""
    v = np.asarray(v, dtype=float)
    return np.tensordot(v, PAULI, axes=(0, 0))


def to_density(a):
    """Density matrix ``(1 + a.sigma)/2`` of a Bloch vector."""
    return 0.5 * (IDENTITY + pauli_dot(as_vector(a, "Bloch vector")))


def from_density(rho):
    """Bloch vector ``Tr(rho sigma_i)`` of a 2x2 density matrix."""
    rho = np.asarray(rho, dtype=complex)
    return np.real(np.einsum("ij,kji->k", rho, PAULI))


def costate_operator(q):
    """Traceless Hermitian costate ``q.sigma``."""
    return pauli_dot(as_vector(q, "costate"))


def costate_from_operator(pi):
    """Inverse of :func:`costate_operator`; the trace part is discarded."""
    return 0.5 * from_density(pi)


def is_hermitian(op, tol=1e-12):
    op = np.asarray(op)
    return bool(np.max(np.abs(op - op.conj().T)) <= tol)


def is_unitary(op, tol=1e-12):
    op = np.asarray(op)
    return bool(np.max(np.abs(op @ op.conj().T - IDENTITY)) <= tol)


def rotation_matrix(axis, angle):
    """SO(3) matrix rotating Bloch vectors by ``angle`` about ``axis``.

    Matches conjugation of ``rho`` by ``exp(-i angle axis.sigma / 2)``.
    """
    n = as_vector(axis, "axis")
    if abs(np.linalg.norm(n) - 1.0) > 1e-12:
        raise InputDomainError(f"rotation axis {n} is not normalized")
    c, s = np.cos(angle), np.sin(angle)
    cross = np.array([[0.0, -n[2], n[1]], [n[2], 0.0, -n[0]], [-n[1], n[0], 0.0]])
    return c * np.eye(3) + s * cross + (1.0 - c) * np.outer(n, n)


def rotate_bloch(a, axis, angle):
    """Rotate a Bloch (or costate) vector about a unit ``axis``."""
    return rotation_matrix(axis, angle) @ as_vector(a)


def rotation_unitary(axis, angle):
    """``exp(-i angle axis.sigma / 2)`` as a 2x2 unitary."""
    n = as_vector(axis, "axis")
    if abs(np.linalg.norm(n) - 1.0) > 1e-12:
        raise InputDomainError(f"rotation axis {n} is not normalized")
    return np.cos(angle / 2) * IDENTITY - 1j * np.sin(angle / 2) * pauli_dot(n)


def pauli_commutator(a, b):
    """Real vector ``c`` with ``[a.sigma, b.sigma] = i c.sigma``, i.e. ``2 a x b``."""
    return 2.0 * np.cross(as_vector(a), as_vector(b))


def aligning_rotation(v, w, flip_axis=(0.0, 1.0, 0.0)):
    """Axis and angle of the rotation taking direction ``v`` onto ``w``.

    Antiparallel inputs rotate by pi about ``flip_axis`` (default y), which
    must be orthogonal to them. Zero vectors give the identity rotation.
    """
    v = as_vector(v)
    w = as_vector(w)
    nv, nw = np.linalg.norm(v), np.linalg.norm(w)
    if nv < 1e-15 or nw < 1e-15:
        return np.array([0.0, 0.0, 1.0]), 0.0
    v, w = v / nv, w / nw
    axis = np.cross(v, w)
    s = np.linalg.norm(axis)
    c = float(np.clip(np.dot(v, w), -1.0, 1.0))
    if s < 1e-14:
        if c > 0:
            return np.array([0.0, 0.0, 1.0]), 0.0
        flip = as_vector(flip_axis)
        flip = flip - np.dot(flip, v) * v
        if np.linalg.norm(flip) < 1e-12:
            flip = np.cross(v, [1.0, 0.0, 0.0])
            if np.linalg.norm(flip) < 1e-12:
                flip = np.cross(v, [0.0, 1.0, 0.0])
        return flip / np.linalg.norm(flip), float(np.pi)
    return axis / s, float(np.arctan2(s, c))
