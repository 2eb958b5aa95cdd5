"""Rotating-frame state/costate dynamics, RK4 integration and cost functionals.

In the eigenframe the state evolves as ``da/dt = W x a + dissipator`` with
``W = (-2 l1, -2 l2, eps - (l0 - l3))``; the costate follows the adjoint
equation with a heat source ``eps/2`` on its z-component (dropped for the
time objective).
"""

import csv
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from . import _kernels
from .bloch import as_bloch, as_vector, rotation_matrix
from .dissipators import DissipatorModel, relaxation_rates
from .errors import InputDomainError, IntegrationDiverged

logger = logging.getLogger(__name__)

CSV_HEADER = ("t", "ax", "ay", "az", "qx", "qy", "qz", "eps", "heat_cum")
DIVERGENCE_TOL = 1e-6


class Objective(str, Enum):
    HEAT = "heat"
    TIME = "time"


def default_eps_max(model):
    return 50.0 / model.beta


def _omega(eps, lam):
    lam = np.asarray(lam, dtype=float)
    return np.array([-2.0 * lam[1], -2.0 * lam[2], eps - (lam[0] - lam[3])])


def rhs_state(model, a, eps, lam=(0.0, 0.0, 0.0, 0.0)):
    """``da/dt`` for Bloch vector ``a`` under control ``eps`` and generator ``lam``."""
    a = as_vector(a, "Bloch vector")
    m_perp, m_z, aeq = (float(v) for v in relaxation_rates(model, eps))
    w = _omega(eps, lam)
    return np.cross(w, a) + np.array([m_perp * a[0], m_perp * a[1], m_z * (a[2] - aeq)])


def rhs_costate(model, q, eps, lam=(0.0, 0.0, 0.0, 0.0), objective=Objective.HEAT):
    """``dq/dt`` of the costate; the heat objective adds the ``eps/2`` source."""
    q = as_vector(q, "costate")
    m_perp, m_z, _ = (float(v) for v in relaxation_rates(model, eps))
    src = 0.5 * eps if Objective(objective) is Objective.HEAT else 0.0
    w = _omega(eps, lam)
    return np.cross(w, q) - np.array([m_perp * q[0], m_perp * q[1], m_z * (q[2] - src)])


def heat_flux(model, a, eps):
    """Instantaneous heat released to the bath, ``-<D D_D[rho]>``."""
    a = np.asarray(a, dtype=float)
    _, m_z, aeq = relaxation_rates(model, eps)
    return -0.5 * np.asarray(eps) * m_z * (a[..., 2] - aeq)


def pseudo_hamiltonian(model, a, q, eps, lam=(0.0, 0.0, 0.0, 0.0), objective=Objective.HEAT):
    """Control-theoretic Hamiltonian of the heat or time problem.

    Heat: ``q . da/dt + heat_flux``. Time: ``1 + q . da/dt``. The
    normalization multiplier is absent because the costate is traceless.
    """
    a = as_vector(a, "Bloch vector")
    q = as_vector(q, "costate")
    base = float(np.dot(q, rhs_state(model, a, eps, lam)))
    if Objective(objective) is Objective.HEAT:
        return base + float(heat_flux(model, a, eps))
    return 1.0 + base


# -- schedules ---------------------------------------------------------------


@dataclass(frozen=True)
class Quench:
    """Instantaneous rotation of state and costate at grid time ``time``."""

    time: float
    axis: Sequence[float]
    angle: float

    def matrix(self):
        return rotation_matrix(self.axis, self.angle)


@dataclass
class ControlSchedule:
    """Controls on a uniform grid ``t_k = k * dt``, ``k = 0..n_steps``.

    ``eps_fn(t)`` and ``lam_fn(t)`` are vectorized callables returning
    ``eps`` and ``(l0, l1, l2, l3)``. With ``hold=True`` every RK4 stage of a
    step samples the controls at the step midpoint, which makes piecewise
    constant controls with breakpoints on the grid exact.
    """

    t_final: float
    dt: float
    eps_fn: Callable
    lam_fn: Optional[Callable] = None
    hold: bool = False
    quenches: list = field(default_factory=list)

    def __post_init__(self):
        if self.t_final < 0 or not np.isfinite(self.t_final):
            raise InputDomainError("t_final must be finite and non-negative")
        if not self.dt > 0:
            raise InputDomainError("dt must be positive")
        ratio = self.t_final / self.dt
        self.n_steps = int(round(ratio))
        if self.n_steps > 0 and abs(ratio - self.n_steps) > 1e-6 * max(1.0, ratio):
            # shrink dt so the grid ends exactly at t_final
            self.n_steps = int(np.ceil(ratio))
            self.dt = self.t_final / self.n_steps
        if self.t_final == 0:
            self.n_steps = 0
        self.quenches = sorted(self.quenches, key=lambda qn: qn.time)
        for qn in self.quenches:
            k = qn.time / self.dt if self.n_steps else 0.0
            if abs(k - round(k)) > 1e-6 or not (0 <= round(k) <= self.n_steps):
                raise InputDomainError(f"quench at t={qn.time} is not on the grid")

    @property
    def times(self):
        return np.arange(self.n_steps + 1) * self.dt

    @classmethod
    def constant(cls, eps, t_final, dt, lam=(0.0, 0.0, 0.0, 0.0), quenches=()):
        lam = np.asarray(lam, dtype=float)
        return cls(
            t_final,
            dt,
            lambda t: np.full(np.shape(t), float(eps)),
            lambda t: np.broadcast_to(lam, np.shape(t) + (4,)),
            hold=True,
            quenches=list(quenches),
        )

    @classmethod
    def piecewise(cls, breaks, eps, lam=None, t_final=None, dt=1e-3, quenches=()):
        """Held controls: ``eps[j]``/``lam[j]`` apply from ``breaks[j]`` on."""
        breaks = np.asarray(breaks, dtype=float)
        eps = np.asarray(eps, dtype=float)
        if breaks.ndim != 1 or breaks.size == 0 or breaks[0] != 0.0 or np.any(np.diff(breaks) <= 0):
            raise InputDomainError("breaks must start at 0 and increase strictly")
        if eps.shape != breaks.shape:
            raise InputDomainError("eps must have one value per segment")
        lam = np.zeros((breaks.size, 4)) if lam is None else np.asarray(lam, dtype=float)
        if lam.shape != (breaks.size, 4):
            raise InputDomainError("lam must have shape (segments, 4)")
        if t_final is None:
            raise InputDomainError("t_final is required")

        def index(t):
            return np.clip(np.searchsorted(breaks, t, side="right") - 1, 0, breaks.size - 1)

        return cls(
            t_final,
            dt,
            lambda t: eps[index(t)],
            lambda t: lam[index(t)],
            hold=True,
            quenches=list(quenches),
        )

    def stage_arrays(self, eps_max=np.inf):
        """Per-step, per-stage control arrays for the compiled integrator."""
        n, h = self.n_steps, self.dt
        t0 = np.arange(n) * h
        if self.hold:
            ts = np.repeat((t0 + 0.5 * h)[:, None], 3, axis=1)
        else:
            ts = t0[:, None] + h * np.array([0.0, 0.5, 1.0])[None, :]
        eps = np.array(self.eps_fn(ts), dtype=float).reshape(n, 3)
        eps = np.where(np.isposinf(eps), eps_max, np.where(np.isneginf(eps), -eps_max, eps))
        if self.lam_fn is None:
            lam = np.zeros((n, 3, 3))
        else:
            c = np.asarray(self.lam_fn(ts), dtype=float).reshape(n, 3, 4)
            lam = np.stack([c[..., 1], c[..., 2], c[..., 0] - c[..., 3]], axis=-1)
        return eps, lam

    def sample(self, eps_max=np.inf):
        """Controls on the grid points (held values belong to the step that starts there)."""
        t = self.times
        if self.hold and self.n_steps > 0:
            ts = np.minimum(t, t[-1] - 0.5 * self.dt) + 0.5 * self.dt
            ts[-1] = t[-1] - 0.5 * self.dt
        else:
            ts = t
        eps = np.array(self.eps_fn(ts), dtype=float).reshape(t.shape)
        eps = np.where(np.isposinf(eps), eps_max, np.where(np.isneginf(eps), -eps_max, eps))
        lam = np.zeros((t.size, 4)) if self.lam_fn is None else np.asarray(self.lam_fn(ts), dtype=float).reshape(t.size, 4)
        return eps, lam


@dataclass
class Trajectory:
    """Sampled solution of the state (and optionally costate) equations."""

    times: np.ndarray
    a: np.ndarray
    q: Optional[np.ndarray]
    heat: np.ndarray
    eps: np.ndarray
    lam: np.ndarray
    model: Optional[DissipatorModel] = None
    objective: Objective = Objective.HEAT

    @property
    def final_state(self):
        return self.a[-1]

    @property
    def total_heat(self):
        return float(self.heat[-1])

    def to_csv(self, path):
        q = self.q if self.q is not None else np.full_like(self.a, np.nan)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for k in range(self.times.size):
                row = [self.times[k], *self.a[k], *q[k], self.eps[k], self.heat[k]]
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path, model=None, objective=Objective.HEAT):
        """Read a trajectory CSV; raises :class:`InputDomainError` with line numbers."""
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise InputDomainError(f"{path}: empty file")
        header = [h.strip() for h in rows[0]]
        missing = [c for c in CSV_HEADER if c not in header]
        if missing:
            raise InputDomainError(f"{path}:1: missing columns {missing}")
        idx = [header.index(c) for c in CSV_HEADER]
        data = []
        for lineno, row in enumerate(rows[1:], start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                data.append([float(row[i]) for i in idx])
            except (ValueError, IndexError):
                raise InputDomainError(f"{path}:{lineno}: malformed row {row!r}") from None
        if not data:
            raise InputDomainError(f"{path}: no data rows")
        arr = np.array(data)
        q = arr[:, 4:7]
        return cls(
            times=arr[:, 0],
            a=arr[:, 1:4],
            q=None if np.all(np.isnan(q)) else q,
            heat=arr[:, 8],
            eps=arr[:, 7],
            lam=np.zeros((arr.shape[0], 4)),
            model=model,
            objective=Objective(objective),
        )


def integrate(schedule, a0, model, q0=None, objective=Objective.HEAT, eps_max=None, check_physical=True):
    """Fixed-step RK4 integration of state, costate and accumulated heat.

    Quenches rotate both ``a`` and ``q`` at their grid times; recorded samples
    are taken after the rotation. Raises :class:`IntegrationDiverged` when
    ``|a|`` exceeds ``1 + 1e-6``.
    """
    a0 = as_bloch(a0)
    objective = Objective(objective)
    eps_max = default_eps_max(model) if eps_max is None else float(eps_max)
    with_costate = q0 is not None
    y0 = np.zeros(7)
    y0[:3] = a0
    if with_costate:
        y0[3:6] = as_vector(q0, "costate")

    eps_st, lam_st = schedule.stage_arrays(eps_max)
    model.check_eps(eps_st)
    if not np.all(np.isfinite(eps_st)):
        raise InputDomainError("schedule produced non-finite eps")
    qidx = np.array([int(round(qn.time / schedule.dt)) if schedule.n_steps else 0 for qn in schedule.quenches], dtype=np.int64)
    qrot = np.array([qn.matrix() for qn in schedule.quenches]).reshape(-1, 3, 3)

    Y, status, k = _kernels.rk4(
        model.code,
        float(model.gamma),
        float(model.beta),
        1.0 if objective is Objective.HEAT else 0.0,
        y0,
        np.ascontiguousarray(eps_st),
        np.ascontiguousarray(lam_st),
        float(schedule.dt),
        qidx,
        np.ascontiguousarray(qrot),
        DIVERGENCE_TOL if check_physical else np.inf,
    )
    if status == _kernels.DIVERGED:
        t = k * schedule.dt
        raise IntegrationDiverged(f"|a| = {np.linalg.norm(Y[k, :3]):.12g} > 1 at t = {t:.6g}", time=t)
    eps_s, lam_s = schedule.sample(eps_max)
    return Trajectory(
        times=schedule.times,
        a=Y[:, :3].copy(),
        q=Y[:, 3:6].copy() if with_costate else None,
        heat=Y[:, 6].copy(),
        eps=eps_s,
        lam=lam_s,
        model=model,
        objective=objective,
    )


def arrival_time(traj, target_norm, model=None):
    """First time ``|a(t)|`` crosses ``target_norm``, or ``None``.

    Within the crossing step the norm is interpolated by a cubic Hermite
    polynomial built from the sampled states and their exact rates.
    """
    model = model or traj.model
    r = np.linalg.norm(traj.a, axis=1)
    f = r - target_norm
    if f[0] == 0.0:
        return float(traj.times[0])
    hits = np.nonzero(np.sign(f[1:]) != np.sign(f[0]))[0]
    if hits.size == 0:
        return None
    k = int(hits[0])
    t0, t1 = traj.times[k], traj.times[k + 1]
    h = t1 - t0
    if model is None:
        return float(t0 + h * f[k] / (f[k] - f[k + 1]))

    def rdot(i):
        a = traj.a[i]
        da = rhs_state(model, a, traj.eps[min(i, k)], traj.lam[min(i, k)])
        return float(np.dot(a, da) / np.linalg.norm(a))

    d0, d1 = rdot(k) * h, rdot(k + 1) * h

    def herm(s):
        return (
            (2 * s**3 - 3 * s**2 + 1) * f[k]
            + (s**3 - 2 * s**2 + s) * d0
            + (-2 * s**3 + 3 * s**2) * f[k + 1]
            + (s**3 - s**2) * d1
        )

    return float(t0 + h * brentq(herm, 0.0, 1.0, xtol=1e-15))
