import json

import numpy as np
import pytest

from qoctl.analytic import (
    CAVEAT_ZERO_TIME,
    HeatBranch,
    OpenEvolution,
    QuenchSegment,
    bosonic_coherent_branch,
    bosonic_incoherent_az,
    coherent_decay_time,
    fermionic_coherent_feasibility,
    final_state,
    gibbs_coherent_az,
    minimal_time,
    simulate_protocol,
    synthesize_heat_protocol,
    synthesize_time_protocol,
)
from qoctl.bloch import rotate_bloch
from qoctl.dissipators import DissipatorModel, ModelKind, equilibrium_az, equilibrium_az_slope
from qoctl.dynamics import ControlSchedule, Objective, arrival_time, integrate
from qoctl.errors import BranchUndefinedError, InfeasibleProblem, InputDomainError
from qoctl.pmp import conserved_K, trajectory_report

GIBBS = DissipatorModel("gibbs", 1.0, 1.0)
BOSONIC = DissipatorModel("bosonic", 1.0, 1.0)
FERMIONIC = DissipatorModel("fermionic", 1.0, 1.0)


# -- coherent branches -------------------------------------------------------


def test_gibbs_coherent_value():
    # a_eq (1 + r)/(1 - r), r = x/sinh x, evaluated by hand at x = 1
    r = 1.0 / 1.1752011936438014
    expected = -0.46211715726000974 * (1 + r) / (1 - r)
    assert gibbs_coherent_az(1.0, 1.0) == pytest.approx(expected, abs=1e-12)
    assert gibbs_coherent_az(1.0, 1.0) == pytest.approx(-5.737391231014692, abs=1e-12)


def test_gibbs_coherent_rejected_on_grid():
    x = np.linspace(0.01, 20, 2000)
    assert np.all(np.abs(gibbs_coherent_az(x, 1.0)) > 1)


def test_gibbs_coherent_diverges_near_zero():
    assert abs(gibbs_coherent_az(1e-3, 1.0)) > 1e2
    with pytest.raises(BranchUndefinedError):
        gibbs_coherent_az(0.0, 1.0)


def test_bosonic_coherent_xy_negative_on_grid():
    count = 0
    for x in np.linspace(0.05, 10, 60):
        for kb in np.linspace(-10, 10, 41):
            for s in (1, -1):
                try:
                    _, xy = bosonic_coherent_branch(x, 1.0, kb, 1.0, s)
                except BranchUndefinedError:
                    continue
                count += 1
                assert xy < 0
    assert count > 100


def test_bosonic_coherent_large_mu_asymptotics():
    x, mu = 1.0, 1e6
    az, _ = bosonic_coherent_branch(x, 1.0, 2 * mu, 1.0, 1)
    assert az == pytest.approx(-np.tanh(0.5) + 2 * mu / np.cosh(0.5) ** 2, rel=1e-9)


def test_bosonic_coherent_errors():
    with pytest.raises(BranchUndefinedError):
        bosonic_coherent_branch(5.0, 1.0, 0.1, 1.0, 1)
    with pytest.raises(BranchUndefinedError):
        bosonic_coherent_branch(1.0, 1.0, 0.0, 1.0, 1)
    with pytest.raises(InputDomainError):
        bosonic_coherent_branch(1.0, 1.0, 1.0, 1.0, 0)


def test_bosonic_incoherent_spot_values():
    minus = bosonic_incoherent_az(1.0, 1.0, -1.0, 1.0, -1)
    assert minus.az == pytest.approx(-0.13558, abs=1e-4)
    assert minus.az == pytest.approx(-0.13557995237025372, abs=1e-12)
    assert minus.physical
    plus = bosonic_incoherent_az(1.0, 1.0, -1.0, 1.0, 1)
    assert plus.az == pytest.approx(-1.5751020951156933, abs=1e-12)
    assert not plus.physical


def test_bosonic_incoherent_identity_on_grid():
    m = BOSONIC
    for x in np.linspace(0.05, 10, 40):
        for mu in np.linspace(-10, -0.05, 40):
            K = 2 * mu  # beta = gamma = 1
            for s in (1, -1):
                pt = bosonic_incoherent_az(x, 1.0, K, 1.0, s)
                d = pt.az - float(equilibrium_az(m, x))
                rhs = -2 * K * pt.az * float(equilibrium_az_slope(m, x))
                assert abs(d * d - rhs) <= 1e-10 * max(1.0, abs(rhs))


def test_bosonic_incoherent_zero_K_is_equilibrium():
    assert bosonic_incoherent_az(1.3, 1.0, 0.0, 1.0, -1).az == pytest.approx(-np.tanh(0.65), abs=1e-15)


def test_fermionic_coherent_infeasible():
    assert fermionic_coherent_feasibility(np.linspace(1e-3, 20, 5000)) == []


# -- heat protocols ----------------------------------------------------------


def test_identity_heat_protocol():
    aeq = float(equilibrium_az(GIBBS, 1.0))
    p = synthesize_heat_protocol(GIBBS, [0, 0, aeq], [0, 0, aeq], 2.0)
    assert p.predicted_cost == 0.0
    traj = simulate_protocol(p, dt=1e-2)
    assert abs(traj.total_heat) < 1e-12
    assert np.allclose(traj.a[-1], [0, 0, aeq], atol=1e-12)


@pytest.mark.parametrize(
    "model,az0,az1,tau",
    [
        (GIBBS, -0.2, -0.8, 3.0),
        (GIBBS, -0.8, -0.2, 3.0),
        (FERMIONIC, -0.3, -0.6, 2.0),
        (BOSONIC, -0.2, -0.8, 3.0),
        (BOSONIC, -0.8, -0.4, 6.0),
    ],
)
def test_heat_protocol_simulation(model, az0, az1, tau):
    p = synthesize_heat_protocol(model, [0, 0, az0], [0, 0, az1], tau)
    traj = simulate_protocol(p, dt=1e-3)
    assert traj.a[-1][2] == pytest.approx(az1, abs=1e-9)
    assert traj.total_heat == pytest.approx(p.predicted_cost, rel=1e-6, abs=1e-10)
    K = conserved_K(traj)
    assert K.stdev <= 1e-6 * abs(K.K)
    assert K.K == pytest.approx(p.open_segment.branch.K, rel=1e-6)
    reports = trajectory_report(traj, K=p.open_segment.branch.K, lo=1, hi=traj.times.size - 1)
    assert all(r.verdict for r in reports)


def test_tilted_target_adds_only_a_quench():
    az1 = -0.6
    tilted = rotate_bloch([0, 0, az1], [0, 1, 0], np.pi / 4)
    p_diag = synthesize_heat_protocol(GIBBS, [0, 0, -0.2], [0, 0, az1], 2.0)
    p_tilt = synthesize_heat_protocol(GIBBS, [0, 0, -0.2], tilted, 2.0)
    assert p_tilt.predicted_cost == pytest.approx(p_diag.predicted_cost, rel=1e-13)
    assert p_tilt.open_segment.description["K"] == pytest.approx(p_diag.open_segment.description["K"], rel=1e-12)
    tr_d, tr_t = simulate_protocol(p_diag, dt=1e-3), simulate_protocol(p_tilt, dt=1e-3)
    assert tr_t.total_heat == pytest.approx(tr_d.total_heat, rel=1e-12)
    assert np.allclose(final_state(p_tilt, tr_t), tilted, atol=1e-9)
    assert np.isclose(p_tilt.segments[-1].angle, np.pi / 4)


def test_coherent_start_is_quenched():
    a0 = np.array([0.3, 0.1, 0.0])
    p = synthesize_heat_protocol(GIBBS, a0, [0, 0, -0.7], 2.5)
    traj = simulate_protocol(p, dt=1e-3)
    assert np.allclose(traj.a[0], [0, 0, -np.linalg.norm(a0)], atol=1e-15)
    assert np.allclose(final_state(p, traj), [0, 0, -0.7], atol=1e-9)


def test_heat_infeasible_below_minimal_time():
    with pytest.raises(InfeasibleProblem) as err:
        synthesize_heat_protocol(GIBBS, [0, 0, -0.2], [0, 0, -0.8], 1.0)
    assert err.value.minimal_time == pytest.approx(np.log(4))


def test_bosonic_raising_duration_floor():
    with pytest.raises(InfeasibleProblem) as err:
        synthesize_heat_protocol(BOSONIC, [0, 0, -0.8], [0, 0, -0.4], 0.05)
    assert err.value.minimal_time == pytest.approx(0.0928099, rel=1e-5)
    assert synthesize_heat_protocol(BOSONIC, [0, 0, -0.8], [0, 0, -0.4], 0.2).predicted_cost < 0


def test_heat_protocol_input_errors():
    with pytest.raises(InputDomainError):
        synthesize_heat_protocol(GIBBS, [0, 0, -0.2], [0, 0, -1.0], 2.0)
    with pytest.raises(InputDomainError):
        synthesize_heat_protocol(GIBBS, [0, 0, -0.2], [0, 0, -0.5], -1.0)
    with pytest.raises(InputDomainError):
        synthesize_heat_protocol(BOSONIC, [0, 0, 0.0], [0, 0, -0.5], 2.0)


def test_heat_branch_sign_of_K():
    br = HeatBranch(GIBBS, 0.1, 1)
    assert br.K < 0  # a_z <= 0 along the branch
    # slower protocols cost less
    h = [synthesize_heat_protocol(GIBBS, [0, 0, -0.2], [0, 0, -0.8], tau).predicted_cost for tau in (2, 4, 8)]
    assert h[0] > h[1] > h[2] > 0


def test_protocol_json():
    p = synthesize_heat_protocol(GIBBS, [0, 0, -0.2], [0.2, 0, -0.5], 2.0)
    d = json.loads(p.to_json())
    assert [s["type"] for s in d["segments"]] == ["quench", "open_evolution", "quench"]
    assert d["segments"][1]["lambda"] == [0.0, 0.0, 0.0, 0.0]
    assert d["predicted_cost"] == p.predicted_cost and d["objective"] == "heat"


# -- time protocols ----------------------------------------------------------


def test_time_lowering_ln4():
    p = synthesize_time_protocol(GIBBS, [0, 0, -0.2], [0, 0, -0.8])
    assert p.predicted_cost == pytest.approx(np.log(4), abs=1e-15)
    assert p.open_segment.description["value"] == 50.0


def test_time_raising_ln15():
    p = synthesize_time_protocol(GIBBS, [0, 0, -0.8], [0, 0, -0.2])
    assert p.predicted_cost == pytest.approx(np.log(1.5), abs=1e-15)
    assert p.open_segment.description["value"] == -50.0


def test_time_unitary_equivalent_boundaries():
    p = synthesize_time_protocol(GIBBS, [0.3, 0.4, 0.0], [0, 0, -0.5])
    assert p.predicted_cost == 0.0 and p.open_segment is None
    assert all(isinstance(s, QuenchSegment) for s in p.segments)


def test_time_bosonic_raising_caveat():
    p = synthesize_time_protocol(BOSONIC, [0, 0, -0.8], [0, 0, -0.2])
    assert p.predicted_cost == 0.0 and CAVEAT_ZERO_TIME in p.caveats
    low = synthesize_time_protocol(BOSONIC, [0, 0, -0.2], [0, 0, -0.8])
    assert low.predicted_cost == pytest.approx(np.log(4))


@pytest.mark.parametrize("model", [GIBBS, FERMIONIC, BOSONIC])
def test_time_protocol_on_shell(model):
    p = synthesize_time_protocol(model, [0, 0, -0.3], [0, 0, -0.7])
    traj = simulate_protocol(p, dt=1e-4)
    h = conserved_K(traj)
    assert abs(h.K) <= 1e-6 and h.max_deviation <= 1e-6
    assert traj.a[-1][2] == pytest.approx(-0.7, abs=1e-6)


def test_minimal_time_monotone():
    t = [minimal_time(GIBBS, [0, 0, -0.2], [0, 0, z]) for z in (-0.3, -0.5, -0.7, -0.9)]
    assert np.all(np.diff(t) > 0)


def test_clamp_convergence_is_exponential():
    errs = []
    for em in (4.0, 6.0, 8.0, 10.0):
        traj = integrate(ControlSchedule.constant(em, 2.0, 1e-4), [0, 0, -0.2], GIBBS)
        errs.append(arrival_time(traj, 0.8) - np.log(4))
    errs = np.array(errs)
    assert np.all(errs > 0) and np.all(np.diff(errs) < 0)
    # error ~ C exp(-beta eps_max)
    ratios = errs[1:] / errs[:-1]
    assert np.all(ratios < 0.25)


# -- coherent decay ----------------------------------------------------------


def test_coherent_decay_examples():
    assert coherent_decay_time(0.8, 0.2, 1.0) == pytest.approx(np.log(4))
    assert coherent_decay_time(0.8, 0.2, 1.0) > synthesize_time_protocol(GIBBS, [0, 0, -0.8], [0, 0, -0.2]).predicted_cost
    assert coherent_decay_time(0.5, 0.5, 1.0) == 0.0
    assert coherent_decay_time(1.0, np.exp(-1), 2.0) == pytest.approx(0.5)
    with pytest.raises(InfeasibleProblem):
        coherent_decay_time(0.2, 0.5, 1.0)
