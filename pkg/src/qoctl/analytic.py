"""Closed-form extremal branches and optimal protocol synthesis.

Optimal protocols have the shape quench -> open evolution -> quench. The
open evolution is incoherent (state diagonal in the Hamiltonian basis,
``Lambda = 0``), so only ``a_z`` moves and the level ``eps(t)`` follows a
branch parameterized by the conserved value ``K``.

Heat branches, with ``u = beta eps / 2`` and ``delta = a_z - a_eq``:

* Gibbs and fermionic: ``delta = s c sech(u)``, ``c = sqrt(2 |mu|)``
* bosonic: ``delta^2 = -2 (K/gamma) a_z d a_eq/d eps``, so ``c = sqrt(2 mu a_z)``

where ``mu = K beta / (2 gamma)`` and ``s = +1`` lowers ``a_z``. Both invert
to ``eps(a_z) = (2/beta) [asinh(s c / sqrt(1 - a_z^2)) - artanh(a_z)]``.
"""

import json
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.optimize import brentq, fsolve

from .bloch import aligning_rotation, as_bloch, from_density, to_density
from .dissipators import (
    DissipatorModel,
    ModelKind,
    equilibrium_az,
    equilibrium_az_slope,
)
from .dynamics import ControlSchedule, Objective, Quench, default_eps_max, integrate
from .errors import BranchUndefinedError, InfeasibleProblem, InputDomainError

logger = logging.getLogger(__name__)

SOUTH = np.array([0.0, 0.0, -1.0])
FLIP_AXIS = np.array([0.0, 1.0, 0.0])
CAVEAT_ZERO_TIME = "bosonic_zero_gap_limit"
NORM_TOL = 1e-12  # Bloch norms closer than this count as unitarily equivalent


# -- coherent branches -------------------------------------------------------


def gibbs_coherent_az(eps, beta):
    """``a_z`` on the coherent Gibbs heat branch: ``a_eq (1 + r)/(1 - r)``, ``r = x/sinh x``.

    ``1 - r`` equals ``1 - d ln a_eq / d ln eps``; it vanishes only at
    ``beta eps = 0``, which is rejected.
    """
    x = beta * np.asarray(eps, dtype=float)
    if np.any(x == 0):
        logger.warning("coherent Gibbs branch evaluated at beta*eps = 0")
        raise BranchUndefinedError("beta*eps = 0 is a removable singularity of the coherent branch")
    r = x / np.sinh(x)
    aeq = -np.tanh(0.5 * x)
    return aeq * (1.0 + r) / (1.0 - r)


def _mu(K, beta, gamma):
    return K * beta / (2.0 * gamma)


def bosonic_coherent_branch(eps, beta, K, gamma, sign):
    """Return ``(a_z, |a_perp|^2)`` on the coherent bosonic heat branch.

    ``|a_perp|^2 = 2 a_eq (2K/(gamma eps) - 1)(a_z - a_eq)``; it is negative
    wherever the branch exists, so the branch is never physical.
    """
    if sign not in (1, -1):
        raise InputDomainError("sign must be +1 or -1")
    x = beta * eps
    if not x > 0:
        raise InputDomainError("bosonic branch needs beta*eps > 0")
    mu = _mu(K, beta, gamma)
    if mu == 0:
        raise BranchUndefinedError("coherent bosonic branch needs K != 0")
    disc = 1.0 - x * np.sinh(x) / (4.0 * mu * mu)
    if disc < 0:
        raise BranchUndefinedError(f"negative discriminant {disc:.3g}")
    aeq = -np.tanh(0.5 * x)
    delta = mu / np.cosh(0.5 * x) ** 2 * (1.0 + sign * np.sqrt(disc))
    xy = 2.0 * aeq * (2.0 * K / (gamma * eps) - 1.0) * delta
    return float(aeq + delta), float(xy)


@dataclass(frozen=True)
class IncoherentPoint:
    az: float
    physical: bool


def bosonic_incoherent_az(eps, beta, K, gamma, sign):
    """``a_z = a_eq + (mu/cosh^2 u)(1 +- sqrt(1 - sinh(beta eps)/mu))``.

    Returns an :class:`IncoherentPoint`; ``physical`` is False when
    ``|a_z| > 1`` (the value is still returned).
    """
    if sign not in (1, -1):
        raise InputDomainError("sign must be +1 or -1")
    x = beta * eps
    if not x > 0:
        raise InputDomainError("bosonic branch needs beta*eps > 0")
    mu = _mu(K, beta, gamma)
    aeq = -np.tanh(0.5 * x)
    if mu == 0:
        return IncoherentPoint(float(aeq), True)
    disc = 1.0 - np.sinh(x) / mu
    if disc < 0:
        raise BranchUndefinedError(f"negative discriminant {disc:.3g}")
    az = aeq + mu / np.cosh(0.5 * x) ** 2 * (1.0 + sign * np.sqrt(disc))
    return IncoherentPoint(float(az), bool(abs(az) <= 1.0))


def fermionic_coherent_feasibility(beta_eps):
    """Grid points where the coherent fermionic conditions have a real solution.

    Combining them forces ``delta^2 = -(x/2) tanh(x/2) / cosh^2(x/2)``; the
    right side is negative for every ``x != 0``.
    """
    x = np.asarray(beta_eps, dtype=float)
    rhs = -(0.5 * x) * np.tanh(0.5 * x) / np.cosh(0.5 * x) ** 2
    return [float(v) for v in x[rhs >= 0]]


def fermionic_coherent_rhs(beta_eps):
    x = np.asarray(beta_eps, dtype=float)
    return -(0.5 * x) * np.tanh(0.5 * x) / np.cosh(0.5 * x) ** 2


# -- incoherent heat branch --------------------------------------------------


@dataclass(frozen=True)
class HeatBranch:
    """Incoherent heat branch with strength ``p = |mu| > 0`` and direction ``sign``."""

    model: DissipatorModel
    p: float
    sign: int

    @property
    def K(self):
        # sign(K) = sign(a_z) and a_z <= 0 throughout
        return -2.0 * self.model.gamma * self.p / self.model.beta

    def c(self, az):
        az = np.asarray(az, dtype=float)
        if self.model.kind is ModelKind.BOSONIC:
            return np.sqrt(2.0 * self.p * np.abs(az))
        return np.full_like(az, np.sqrt(2.0 * self.p))

    def eps(self, az):
        az = np.asarray(az, dtype=float)
        return (2.0 / self.model.beta) * (
            np.arcsinh(self.sign * self.c(az) / np.sqrt(1.0 - az * az)) - np.arctanh(az)
        )

    def rate(self, az):
        """``d a_z / dt`` on the branch."""
        eps = self.eps(az)
        delta = np.asarray(az) - equilibrium_az(self.model, eps)
        g = self.model.gamma
        if self.model.kind is ModelKind.BOSONIC:
            return g * delta / equilibrium_az(self.model, eps)
        return -g * delta

    def costate_z(self, az):
        """``q_z`` that puts the branch on shell."""
        eps = self.eps(az)
        aeq = equilibrium_az(self.model, eps)
        delta = np.asarray(az) - aeq
        if self.model.kind is ModelKind.BOSONIC:
            return 0.5 * eps + aeq * self.K / (self.model.gamma * delta)
        return 0.5 * eps - delta / (2.0 * equilibrium_az_slope(self.model, eps))

    def duration(self, az0, az1):
        val, _ = quad(lambda z: 1.0 / abs(self.rate(z)), min(az0, az1), max(az0, az1), epsabs=1e-14, epsrel=1e-12, limit=200)
        return val

    def heat(self, az0, az1):
        """``-(1/2) int eps d a_z`` from ``az0`` to ``az1``."""
        val, _ = quad(lambda z: float(self.eps(z)), az0, az1, epsabs=1e-14, epsrel=1e-12, limit=200)
        return -0.5 * val


def diagonal_heat_point(model, eps, K, guess):
    """Solve the diagonal (incoherent) heat conditions for ``(a_z, q_z)`` numerically.

    Independent of :class:`HeatBranch`; used to cross-check it.
    """
    g = model.gamma

    def eqs(v):
        az, qz = v
        aeq = float(equilibrium_az(model, eps))
        slope = float(equilibrium_az_slope(model, eps))
        p = qz - 0.5 * eps
        d = az - aeq
        if model.kind is ModelKind.BOSONIC:
            return [2 * d * p - 2 * aeq * K / g, 2 * az * p * slope + aeq * d]
        return [d * p + K / g, slope * p + 0.5 * d]

    sol, info, ier, msg = fsolve(eqs, guess, full_output=True, xtol=1e-14)
    # ier = 5 ("xtol too small") also occurs after convergence
    if ier != 1 and np.max(np.abs(info["fvec"])) > 1e-13:
        raise BranchUndefinedError(f"diagonal heat conditions not solved: {msg}")
    return float(sol[0]), float(sol[1])


# -- protocols ---------------------------------------------------------------


@dataclass
class QuenchSegment:
    axis: np.ndarray
    angle: float

    def to_dict(self):
        return {"type": "quench", "axis": [float(v) for v in self.axis], "angle": float(self.angle)}


@dataclass
class OpenEvolution:
    """Open evolution with ``Lambda = 0`` and level ``eps_fn(t)`` for ``duration``."""

    duration: float
    eps_fn: Callable
    description: dict
    q0: Optional[np.ndarray] = None
    hold: bool = False

    def to_dict(self, samples=33):
        t = np.linspace(0.0, self.duration, samples)
        return {
            "type": "open_evolution",
            "duration": float(self.duration),
            "lambda": [0.0, 0.0, 0.0, 0.0],
            "eps": self.description,
            "eps_samples": [[float(a), float(b)] for a, b in zip(t, np.broadcast_to(self.eps_fn(t), t.shape))],
        }


@dataclass
class Protocol:
    objective: Objective
    model: DissipatorModel
    segments: list
    rho0: np.ndarray
    rho_tau: np.ndarray
    predicted_cost: float
    basis: np.ndarray = field(default_factory=lambda: np.eye(2, dtype=complex))
    caveats: list = field(default_factory=list)

    @property
    def open_segment(self):
        return next((s for s in self.segments if isinstance(s, OpenEvolution)), None)

    @property
    def duration(self):
        seg = self.open_segment
        return 0.0 if seg is None else seg.duration

    def to_dict(self):
        return {
            "objective": self.objective.value,
            "model": {"kind": self.model.kind.value, "gamma": self.model.gamma, "beta": self.model.beta},
            "boundary": {"a0": [float(v) for v in self.rho0], "a_tau": [float(v) for v in self.rho_tau]},
            "segments": [s.to_dict() for s in self.segments],
            "predicted_cost": float(self.predicted_cost),
            "caveats": list(self.caveats),
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def _to_frame(a, basis):
    # Bloch vector of V^dag rho V, V holding the Hamiltonian eigenvectors
    V = np.asarray(basis, dtype=complex)
    return from_density(V.conj().T @ to_density(a) @ V)


def _quenches(a0, a_tau):
    ax0, ang0 = aligning_rotation(a0, SOUTH, FLIP_AXIS)
    ax1, ang1 = aligning_rotation(SOUTH, a_tau, FLIP_AXIS)
    return QuenchSegment(ax0, ang0), QuenchSegment(ax1, ang1)


def _time_optimal(model, az0, az1):
    """Shortest diagonal transfer ``az0 -> az1`` (both ``<= 0``); returns ``(time, eps_sign)``."""
    g = model.gamma
    if abs(az1 - az0) <= NORM_TOL:
        return 0.0, 0
    if az1 < az0:
        return float(np.log((1.0 + az0) / (1.0 + az1)) / g), 1
    if model.kind is ModelKind.BOSONIC:
        return 0.0, -1
    return float(np.log((1.0 - az0) / (1.0 - az1)) / g), -1


def minimal_time(model, a0, a_tau):
    """Minimal transfer time between Bloch norms (clamp-free limit)."""
    a0 = as_bloch(a0)
    a_tau = as_bloch(a_tau)
    return _time_optimal(model, -np.linalg.norm(a0), -np.linalg.norm(a_tau))[0]


def synthesize_time_protocol(model, rho0, rho_tau, eps_max=None, basis=None):
    """Time-optimal protocol between Bloch vectors ``rho0`` and ``rho_tau``.

    Both states are quenched onto the ``-z`` axis (``a_z <= 0``). Lowering
    ``a_z`` uses ``eps = +eps_max``; raising uses ``-eps_max`` (Gibbs,
    fermionic) or, for the bosonic bath, the ``eps -> 0+`` limit whose time
    is zero and which carries a caveat flag.
    """
    if model.gamma <= 0:
        raise InputDomainError("time-optimal synthesis needs gamma > 0")
    basis = np.eye(2, dtype=complex) if basis is None else np.asarray(basis, dtype=complex)
    a0 = as_bloch(rho0)
    a1 = as_bloch(rho_tau)
    t0, t1 = _to_frame(a0, basis), _to_frame(a1, basis)
    az0, az1 = -np.linalg.norm(t0), -np.linalg.norm(t1)
    eps_max = default_eps_max(model) if eps_max is None else float(eps_max)
    q_in, q_out = _quenches(t0, t1)
    caveats = []
    tau, direction = _time_optimal(model, az0, az1)
    if direction == 0:
        segs = [q_in, q_out]
    elif model.kind is ModelKind.BOSONIC and direction < 0:
        caveats.append(CAVEAT_ZERO_TIME)
        segs = [q_in, q_out]
    else:
        eps = direction * eps_max
        aeq = float(equilibrium_az(model, eps))
        delta = az0 - aeq
        qz = -aeq / (model.gamma * delta) if model.kind is ModelKind.BOSONIC else 1.0 / (model.gamma * delta)
        open_seg = OpenEvolution(
            tau,
            lambda t, e=eps: np.full(np.shape(t), e),
            {"kind": "constant", "value": eps, "clamp": eps_max},
            q0=np.array([0.0, 0.0, qz]),
            hold=True,
        )
        segs = [q_in, open_seg, q_out]
    return Protocol(Objective.TIME, model, segs, a0, a1, tau, basis, caveats)


def _fit_branch(model, az0, az1, tau):
    sign = 1 if az1 < az0 else -1
    bosonic = model.kind is ModelKind.BOSONIC
    if bosonic and sign < 0:
        p_hi = 0.5 * abs(az1) * (1.0 - 1e-12)
    else:
        p_hi = None

    def duration(logp):
        return HeatBranch(model, float(np.exp(logp)), sign).duration(az0, az1)

    lo = -20.0
    while duration(lo) < tau:
        lo -= 10.0
        if lo < -200:
            raise BranchUndefinedError("cannot bracket the branch strength")
    if p_hi is not None:
        hi = float(np.log(p_hi))
        t_floor = duration(hi)
        if t_floor > tau:
            raise InfeasibleProblem(
                f"bosonic raising branch needs at least {t_floor:.6g}; faster raising requires eps -> 0+",
                minimal_time=t_floor,
            )
    else:
        hi = 5.0
        while duration(hi) > tau:
            hi += 5.0
            if hi > 200:
                raise InfeasibleProblem("duration too close to the minimal time", minimal_time=tau)
    logp = brentq(lambda v: duration(v) - tau, lo, hi, xtol=1e-14, rtol=1e-14, maxiter=500)
    return HeatBranch(model, float(np.exp(logp)), sign)


def synthesize_heat_protocol(model, rho0, rho_tau, tau, basis=None, beta=None, gamma=None):
    """Minimum-heat protocol reaching ``rho_tau`` from ``rho0`` in time ``tau``.

    Raises :class:`InfeasibleProblem` (with the minimal time) when the
    eigenvalues cannot be connected within ``tau``.
    """
    if beta is not None or gamma is not None:
        model = DissipatorModel(model.kind, model.gamma if gamma is None else gamma, model.beta if beta is None else beta)
    if model.gamma <= 0:
        raise InputDomainError("heat synthesis needs gamma > 0")
    if not (np.isfinite(tau) and tau > 0):
        raise InputDomainError("tau must be positive and finite")
    basis = np.eye(2, dtype=complex) if basis is None else np.asarray(basis, dtype=complex)
    a0 = as_bloch(rho0)
    a1 = as_bloch(rho_tau)
    t0, t1 = _to_frame(a0, basis), _to_frame(a1, basis)
    az0, az1 = -float(np.linalg.norm(t0)), -float(np.linalg.norm(t1))
    if max(abs(az0), abs(az1)) >= 1.0:
        raise InputDomainError("pure boundary states are reachable only asymptotically")
    if model.kind is ModelKind.BOSONIC and (az0 == 0.0 or az1 == 0.0):
        raise InputDomainError("bosonic bath cannot hold the maximally mixed state (eps = 0)")
    q_in, q_out = _quenches(t0, t1)

    if abs(az0 - az1) <= NORM_TOL:
        eps = 2.0 * np.arctanh(-az0) / model.beta
        seg = OpenEvolution(
            tau,
            lambda t, e=eps: np.full(np.shape(t), e),
            {"kind": "constant", "value": float(eps)},
            q0=np.array([0.0, 0.0, 0.5 * eps]),
            hold=True,
        )
        return Protocol(Objective.HEAT, model, [q_in, seg, q_out], a0, a1, 0.0, basis)

    t_min, _ = _time_optimal(model, az0, az1)
    if tau <= t_min:
        raise InfeasibleProblem(f"tau = {tau:.6g} is below the minimal time {t_min:.6g}", minimal_time=t_min)
    branch = _fit_branch(model, az0, az1, tau)
    sol = solve_ivp(
        lambda t, y: [float(branch.rate(y[0]))],
        (0.0, tau),
        [az0],
        method="DOP853",
        rtol=1e-13,
        atol=1e-15,
        dense_output=True,
    )
    path = sol.sol

    def eps_fn(t):
        t = np.clip(np.asarray(t, dtype=float), 0.0, tau)
        az = np.minimum(path(t.ravel())[0].reshape(t.shape), -1e-300)
        return branch.eps(az)

    seg = OpenEvolution(
        tau,
        eps_fn,
        {"kind": "heat_branch", "p": branch.p, "sign": branch.sign, "K": branch.K, "az0": az0, "az_tau": az1},
        q0=np.array([0.0, 0.0, float(branch.costate_z(az0))]),
    )
    seg.branch = branch
    seg.az_path = path
    return Protocol(Objective.HEAT, model, [q_in, seg, q_out], a0, a1, branch.heat(az0, az1), basis)


def coherent_decay_time(a0_norm, atau_norm, gamma):
    """Duration of the coherent ``eps = 0`` decay, ``ln(|a0|/|a_tau|)/gamma``."""
    if not gamma > 0:
        raise InputDomainError("gamma must be positive")
    if not (0 < atau_norm and a0_norm <= 1.0):
        raise InputDomainError("norms must satisfy 0 < |a_tau| and |a0| <= 1")
    if atau_norm > a0_norm:
        raise InfeasibleProblem("pure decay cannot increase the Bloch norm")
    return float(np.log(a0_norm / atau_norm) / gamma)


def simulate_protocol(protocol, dt=1e-3, with_costate=True, eps_max=None, final_quench=False):
    """Integrate a protocol through :mod:`qoctl.dynamics`.

    The initial quench acts at ``t = 0`` (the first sample is the post-quench
    state). The final quench is applied at the last sample only when
    ``final_quench`` is set; otherwise the trajectory ends on the open
    segment and :func:`final_state` gives the target.
    """
    model = protocol.model
    q_in, q_out = protocol.segments[0], protocol.segments[-1]
    seg = protocol.open_segment
    tau = 0.0 if seg is None else seg.duration
    a0 = _to_frame(protocol.rho0, protocol.basis)
    if seg is None:
        eps_fn, hold = (lambda t: np.full(np.shape(t), 1.0 / model.beta)), True
        q_branch = np.zeros(3)
    else:
        eps_fn, hold = seg.eps_fn, seg.hold
        q_branch = seg.q0 if seg.q0 is not None else np.zeros(3)
    n = max(1, int(np.ceil(tau / dt - 1e-9))) if tau > 0 else 0
    step = tau / n if n else dt
    quenches = [Quench(0.0, q_in.axis, q_in.angle)]
    if final_quench:
        quenches.append(Quench(tau, q_out.axis, q_out.angle))
    schedule = ControlSchedule(tau, step, eps_fn, None, hold=hold, quenches=quenches)
    q0 = quenches[0].matrix().T @ q_branch if with_costate else None
    return integrate(schedule, a0, model, q0=q0, objective=protocol.objective, eps_max=eps_max)


def final_state(protocol, trajectory):
    """Frame Bloch vector after the protocol's final quench."""
    q_out = protocol.segments[-1]
    return Quench(0.0, q_out.axis, q_out.angle).matrix() @ trajectory.a[-1]
