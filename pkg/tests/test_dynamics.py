import numpy as np
import pytest

from qoctl.bloch import IDENTITY, PAULI, SIGMA_Z, costate_operator, from_density, to_density
from qoctl.dissipators import DissipatorModel, ModelKind, dissipator_matrix, equilibrium_az
from qoctl.dynamics import (
    ControlSchedule,
    Objective,
    Quench,
    Trajectory,
    arrival_time,
    heat_flux,
    integrate,
    pseudo_hamiltonian,
    rhs_costate,
    rhs_state,
)
from qoctl.errors import InputDomainError, IntegrationDiverged, SingularRateError
from qoctl.frame import lambda_matrix

from conftest import random_ball

KINDS = list(ModelKind)


def matrix_rhs(model, a, eps, lam):
    # drho/dt = -i[D - Lambda, rho] + D[rho], D = (eps/2)(1 + sz)
    rho = to_density(a)
    G = 0.5 * eps * (IDENTITY + SIGMA_Z) - lambda_matrix(lam)
    return from_density(-1j * (G @ rho - rho @ G) + dissipator_matrix(model, rho, eps))


def matrix_pseudo_h(model, a, q, eps, lam, objective):
    rho = to_density(a)
    G = 0.5 * eps * (IDENTITY + SIGMA_Z) - lambda_matrix(lam)
    diss = dissipator_matrix(model, rho, eps)
    drho = -1j * (G @ rho - rho @ G) + diss
    h = np.trace(costate_operator(q) @ drho).real
    if objective is Objective.HEAT:
        return h - np.trace(0.5 * eps * (IDENTITY + SIGMA_Z) @ diss).real
    return 1.0 + h


@pytest.mark.parametrize("kind", KINDS)
def test_state_rhs_matches_matrix_form(kind, rng):
    m = DissipatorModel(kind, 0.8, 1.2)
    for a in random_ball(rng, 50):
        eps, lam = rng.uniform(0.1, 4), rng.normal(size=4)
        assert np.max(np.abs(rhs_state(m, a, eps, lam) - matrix_rhs(m, a, eps, lam))) < 1e-13


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("objective", list(Objective))
def test_costate_rhs_is_minus_gradient(kind, objective, rng):
    m = DissipatorModel(kind, 0.8, 1.2)
    for _ in range(20):
        a, q = random_ball(rng), rng.normal(size=3)
        eps, lam = rng.uniform(0.1, 4), rng.normal(size=4)
        # the pseudo-Hamiltonian is affine in a, so central differences are exact up to rounding
        grad = np.array(
            [
                (matrix_pseudo_h(m, a + 1e-3 * e, q, eps, lam, objective) - matrix_pseudo_h(m, a - 1e-3 * e, q, eps, lam, objective)) / 2e-3
                for e in np.eye(3)
            ]
        )
        assert np.max(np.abs(rhs_costate(m, q, eps, lam, objective) + grad)) < 1e-9
        h = pseudo_hamiltonian(m, a, q, eps, lam, objective)
        assert abs(h - matrix_pseudo_h(m, a, q, eps, lam, objective)) < 1e-12


def test_heat_flux_sign():
    m = DissipatorModel("gibbs")
    # relaxing downward releases heat
    assert heat_flux(m, [0, 0, 0.0], 2.0) > 0
    assert heat_flux(m, [0, 0, equilibrium_az(m, 2.0)], 2.0) == 0


def test_closed_form_relaxation():
    m = DissipatorModel("gibbs", 0.7, 1.0)
    eps, az0 = 1.5, 0.3
    traj = integrate(ControlSchedule.constant(eps, 3.0, 1e-3), [0, 0, az0], m)
    aeq = equilibrium_az(m, eps)
    decay = np.exp(-0.7 * traj.times)
    assert np.max(np.abs(traj.a[:, 2] - (aeq + (az0 - aeq) * decay))) < 1e-12
    heat = 0.5 * eps * (az0 - aeq) * (1 - decay)
    assert np.max(np.abs(traj.heat - heat)) < 1e-12


def test_coherent_decay_and_precession():
    m = DissipatorModel("fermionic", 1.0, 1.0)
    eps = 3.0
    traj = integrate(ControlSchedule.constant(eps, 2.0, 1e-3), [0.5, 0, -0.2], m)
    t = traj.times
    ax = 0.5 * np.exp(-0.5 * t) * np.cos(eps * t)
    ay = 0.5 * np.exp(-0.5 * t) * np.sin(eps * t)
    assert np.max(np.abs(traj.a[:, 0] - ax)) < 1e-10
    assert np.max(np.abs(traj.a[:, 1] - ay)) < 1e-10


def _smooth_schedule(dt):
    return ControlSchedule(
        2.0,
        dt,
        lambda t: 1.0 + 0.5 * np.sin(2 * t),
        lambda t: np.stack([0.2 * np.cos(t), 0.3 * np.sin(t), 0.1 * t, -0.2 * np.ones_like(t)], axis=-1),
    )


def test_rk4_order():
    m = DissipatorModel("gibbs", 1.0, 1.0)
    a0, q0 = [0.3, -0.2, 0.1], [0.2, 0.1, 0.5]
    ref = integrate(_smooth_schedule(1e-4), a0, m, q0=q0).a[-1]
    errs = [np.linalg.norm(integrate(_smooth_schedule(h), a0, m, q0=q0).a[-1] - ref) for h in (0.04, 0.02)]
    order = np.log2(errs[0] / errs[1])
    assert abs(order - 4) <= 0.2


def test_zero_duration_schedule():
    traj = integrate(ControlSchedule.constant(1.0, 0.0, 1e-3), [0.1, 0.2, -0.3], DissipatorModel("gibbs"))
    assert traj.times.size == 1 and np.allclose(traj.a[0], [0.1, 0.2, -0.3])
    assert traj.total_heat == 0.0


def test_grid_is_shrunk_to_end_on_horizon():
    s = ControlSchedule.constant(1.0, 1.0, 0.3)
    assert s.n_steps == 4 and s.times[-1] == pytest.approx(1.0, abs=1e-15)


def test_pseudo_hamiltonian_constant_on_autonomous_controls():
    m = DissipatorModel("bosonic", 1.0, 1.0)
    traj = integrate(ControlSchedule.constant(2.0, 2.0, 1e-3, lam=(0.1, 0.3, -0.2, 0.05)), [0.2, 0.1, -0.4], m, q0=[0.3, -0.1, 0.7])
    h = [pseudo_hamiltonian(m, a, q, 2.0, (0.1, 0.3, -0.2, 0.05)) for a, q in zip(traj.a, traj.q)]
    assert np.std(h) < 1e-10


def test_quench_rotates_state_and_costate():
    m = DissipatorModel("gibbs", 0.0, 1.0)
    qn = Quench(0.0, [0.0, 1.0, 0.0], np.pi)
    traj = integrate(ControlSchedule.constant(1.0, 0.1, 0.01, quenches=[qn]), [0, 0, 0.4], m, q0=[0, 0, 1.0])
    assert np.allclose(traj.a[0], [0, 0, -0.4], atol=1e-15)
    assert np.allclose(traj.q[0], [0, 0, -1.0], atol=1e-15)


def test_quench_off_grid_rejected():
    with pytest.raises(InputDomainError):
        ControlSchedule.constant(1.0, 1.0, 0.1, quenches=[Quench(0.05, [0, 0, 1], 1.0)])


def test_divergence_raises_with_time():
    m = DissipatorModel("gibbs", 1000.0, 1.0)
    with pytest.raises(IntegrationDiverged) as err:
        integrate(ControlSchedule.constant(1.0, 1.0, 0.01), [0.9, 0, 0], m)
    assert err.value.time > 0


def test_bosonic_zero_gap_raises():
    with pytest.raises(SingularRateError):
        integrate(ControlSchedule.constant(0.0, 1.0, 0.01), [0, 0, -0.3], DissipatorModel("bosonic"))


def test_infinite_eps_is_clamped():
    m = DissipatorModel("gibbs")
    traj = integrate(ControlSchedule.constant(np.inf, 0.1, 0.01), [0, 0, 0], m, eps_max=7.0)
    assert np.all(traj.eps == 7.0)


def test_csv_round_trip(tmp_path):
    m = DissipatorModel("gibbs")
    traj = integrate(ControlSchedule.constant(1.3, 0.5, 0.01), [0.1, 0.0, 0.2], m, q0=[0.1, 0.2, 0.3])
    path = tmp_path / "t.csv"
    traj.to_csv(path)
    assert path.read_text().splitlines()[0] == "t,ax,ay,az,qx,qy,qz,eps,heat_cum"
    back = Trajectory.from_csv(path, model=m)
    for name in ("times", "a", "q", "heat", "eps"):
        assert np.array_equal(getattr(back, name), getattr(traj, name))


def test_csv_without_costate(tmp_path):
    traj = integrate(ControlSchedule.constant(1.3, 0.1, 0.01), [0.1, 0.0, 0.2], DissipatorModel("gibbs"))
    traj.to_csv(tmp_path / "t.csv")
    assert Trajectory.from_csv(tmp_path / "t.csv").q is None


def test_csv_errors_report_lines(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("t,ax,ay,az,qx,qy,qz,eps,heat_cum\n0,0,0,0,0,0,0,1,0\n0.1,0,zz,0,0,0,0,1,0\n")
    with pytest.raises(InputDomainError, match=":3:"):
        Trajectory.from_csv(p)
    p.write_text("t,ax\n0,0\n")
    with pytest.raises(InputDomainError, match=":1:"):
        Trajectory.from_csv(p)
    p.write_text("")
    with pytest.raises(InputDomainError):
        Trajectory.from_csv(p)


def test_arrival_time_matches_closed_form():
    m = DissipatorModel("gibbs")
    traj = integrate(ControlSchedule.constant(2.0, 3.0, 0.01), [0, 0, 0], m)
    expected = -np.log(1 - 0.5 / np.tanh(1.0))
    assert abs(arrival_time(traj, 0.5) - expected) < 1e-8
    assert arrival_time(traj, 0.99) is None
