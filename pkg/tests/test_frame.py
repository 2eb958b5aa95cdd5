import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from qoctl.bloch import SIGMA_X, SIGMA_Y, SIGMA_Z, from_density, is_unitary, to_density
from qoctl.errors import DegenerateSpectrumError, InputDomainError
from qoctl.frame import (
    LambdaSchedule,
    expi,
    lambda_coefficients,
    lambda_from_path,
    lambda_matrix,
    reconstruct_U,
    rotate_frame,
    rotdin_identity_check,
)

from conftest import random_ball


def rotating_path(eps=2.0, omega=1.3, t_final=2.0, n=2001):
    t = np.linspace(0.0, t_final, n)
    H = 0.5 * eps * (np.cos(omega * t)[:, None, None] * SIGMA_Z + np.sin(omega * t)[:, None, None] * SIGMA_X)
    return t, H


def test_lambda_matrix_round_trip(rng):
    for _ in range(50):
        c = rng.normal(size=4)
        L = lambda_matrix(c)
        assert np.max(np.abs(L - L.conj().T)) <= 1e-14
        assert np.allclose(lambda_coefficients(L), c, atol=1e-15)
    # parameterization ((l0 + l3) 1 + 2(l1 sx + l2 sy) + (l0 - l3) sz)/2
    l0, l1, l2, l3 = 0.3, -0.7, 0.4, 1.1
    ref = 0.5 * ((l0 + l3) * np.eye(2) + 2 * (l1 * SIGMA_X + l2 * SIGMA_Y) + (l0 - l3) * SIGMA_Z)
    assert np.allclose(lambda_matrix([l0, l1, l2, l3]), ref)


def test_expi_matches_expm(rng):
    for _ in range(20):
        c, h = rng.normal(size=4), rng.uniform(0, 3)
        assert np.max(np.abs(expi(c, h) - expm(1j * h * lambda_matrix(c)))) <= 1e-13


def test_reconstruct_zero_generator(rng):
    U0 = expm(1j * 0.4 * SIGMA_Y)
    s = LambdaSchedule([0.0], np.zeros((1, 4)))
    assert np.allclose(reconstruct_U(s, U0, 3.0), U0, atol=1e-15)


def test_reconstruct_constant_generator():
    w, t = 0.9, 2.5
    s = LambdaSchedule([0.0], [[0.0, 0.0, w / 2, 0.0]])
    U = reconstruct_U(s, np.eye(2), t)
    assert np.max(np.abs(U - expm(1j * w * t * SIGMA_Y / 2))) <= 1e-14


def test_reconstruct_piecewise_matches_fine_integration(rng):
    c = rng.normal(size=(2, 4))
    s = LambdaSchedule([0.0, 0.6], c)
    U = reconstruct_U(s, np.eye(2), 1.5)
    assert np.allclose(U, expi(c[1], 0.9) @ expi(c[0], 0.6), atol=1e-14)

    def rhs(t, y):
        L = lambda_matrix(c[0] if t < 0.6 else c[1])
        return (1j * L @ y.reshape(2, 2)).ravel()

    ref = np.eye(2, dtype=complex).ravel()
    ref = solve_ivp(rhs, (0, 0.6), ref, rtol=1e-12, atol=1e-14, method="DOP853").y[:, -1]
    ref = solve_ivp(rhs, (0.6, 1.5), ref, rtol=1e-12, atol=1e-14, method="DOP853").y[:, -1]
    assert np.max(np.abs(U - ref.reshape(2, 2))) <= 1e-10


def test_reconstruct_smooth_is_unitary_and_converges(rng):
    coeff = rng.normal(size=(3, 4))

    def sched(t):
        t = np.asarray(t, dtype=float)
        return coeff[0] + np.multiply.outer(t, coeff[1]) + np.multiply.outer(t**2, coeff[2]) * 0.2

    U1 = reconstruct_U(sched, np.eye(2), 4.0, dt=1e-2)
    U2 = reconstruct_U(sched, np.eye(2), 4.0, dt=5e-3)
    assert is_unitary(U1, tol=1e-10) and is_unitary(U2, tol=1e-10)
    assert np.max(np.abs(U1 - U2)) < 1e-6


def test_reconstruct_rejects_non_unitary():
    with pytest.raises(InputDomainError):
        reconstruct_U(LambdaSchedule([0.0], np.zeros((1, 4))), np.diag([1, 2]), 1.0)


def test_rotate_frame(rng):
    rho = to_density([1, 0, 0])
    assert np.allclose(rotate_frame(rho, np.eye(2)), rho)
    U = expm(-1j * np.pi * SIGMA_Y / 4)
    out = rotate_frame(rho, U)
    assert abs(np.trace(out @ out) - 1) < 1e-14
    assert np.allclose(from_density(out), [0, 0, -1], atol=1e-14)
    for a in random_ball(rng, 100):
        V = expm(1j * sum(x * s for x, s in zip(rng.normal(size=3), (SIGMA_X, SIGMA_Y, SIGMA_Z))))
        rho = to_density(a)
        assert np.allclose(np.linalg.eigvalsh(rotate_frame(rho, V)), np.linalg.eigvalsh(rho), atol=1e-14)


def test_lambda_from_static_path():
    t = np.linspace(0, 1, 11)
    H = np.broadcast_to(0.7 * SIGMA_Z + 0.2 * SIGMA_X, (11, 2, 2))
    fd = lambda_from_path(t, H)
    assert np.max(np.abs(fd.schedule.coeffs)) <= 1e-14


def test_lambda_from_rotating_path_is_constant():
    omega = 1.3
    t, H = rotating_path(omega=omega)
    fd = lambda_from_path(t, H)
    c = fd.schedule.coeffs
    # |Lambda_01| = omega/2 everywhere, diagonal zero
    mag = np.hypot(c[:, 1], c[:, 2])
    assert np.max(np.abs(mag - omega / 2)) < 1e-6
    assert np.all(c[:, 0] == 0) and np.all(c[:, 3] == 0)
    assert np.ptp(c[:, 1]) < 1e-6 and np.ptp(c[:, 2]) < 1e-6


def test_lambda_round_trip_reproduces_path():
    t, H = rotating_path()
    fd = lambda_from_path(t, H)
    D = np.diag(fd.energies[0])
    worst = 0.0
    for k in (0, 500, 1000, 2000):
        U = reconstruct_U(fd.schedule, fd.U0, t[k], dt=1e-3)
        D = np.diag(fd.energies[k])
        worst = max(worst, np.max(np.abs(U.conj().T @ D @ U - H[k])))
        assert is_unitary(U, tol=1e-10)
    assert worst <= 1e-8


def test_lambda_from_path_degenerate():
    t = np.linspace(0, 1, 5)
    H = np.zeros((5, 2, 2), dtype=complex)
    with pytest.raises(DegenerateSpectrumError):
        lambda_from_path(t, H + 1e-3 * SIGMA_Z * (t[:, None, None] - 0.5))


def test_gauge_freedom_changes_only_phases(rng):
    # U -> P U with P = diag(exp(i phi0 t), exp(i phi1 t)) shifts the diagonal
    # by (phi0, phi1) and rotates the off-diagonal phase
    t, H = rotating_path(n=801)
    fd = lambda_from_path(t, H)
    phi0, phi1 = 0.8, -0.3
    c = fd.schedule.coeffs.copy()
    off = (c[:, 1] - 1j * c[:, 2]) * np.exp(1j * (phi0 - phi1) * t)
    gauged = np.column_stack([c[:, 0] + phi0, off.real, -off.imag, c[:, 3] + phi1])
    gauged = LambdaSchedule(t, gauged, "cubic")
    rho_lab = to_density(random_ball(rng))
    for tk in (0.5, 1.7):
        U1 = reconstruct_U(fd.schedule, fd.U0, tk)
        U2 = reconstruct_U(gauged, fd.U0, tk)
        P = U2 @ U1.conj().T
        assert abs(P[0, 1]) < 1e-9 and abs(P[1, 0]) < 1e-9
        assert np.allclose(np.abs(np.diag(P)), 1.0, atol=1e-9)
        r1 = rotate_frame(rho_lab, U1)
        r2 = rotate_frame(rho_lab, U2)
        assert np.allclose(np.diag(r1), np.diag(r2), atol=1e-9)


def test_rotdin_identity():
    t = np.linspace(0, 1, 2001)
    rho = np.array([to_density([0.3 * np.cos(2 * x), 0.3 * np.sin(2 * x), -0.4]) for x in t])
    zero = LambdaSchedule([0.0], np.zeros((1, 4)))
    assert rotdin_identity_check(t, rho, zero, np.eye(2)) <= 1e-8
    const = LambdaSchedule([0.0], [[0.2, 0.5, -0.3, 0.1]])
    assert rotdin_identity_check(t, rho, const, np.eye(2)) <= 1e-6

    def smooth(s):
        s = np.asarray(s, dtype=float)
        return np.stack([0.1 * s, 0.5 - 0.2 * s**2, 0.3 * s, np.zeros_like(s)], axis=-1)

    assert rotdin_identity_check(t, rho, smooth, np.eye(2)) <= 1e-6
