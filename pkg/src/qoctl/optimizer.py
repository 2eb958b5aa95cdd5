"""Brute-force oracle: direct search over piecewise-constant controls.

Controls are ``N`` held segments of ``(eps, l1, l2, l3)`` (``l0 = 0``; only
``l0 - l3`` matters). A free terminal quench is implied: it costs no heat and
no time, so the boundary constraint only asks the final Bloch norm to match
the target norm.

For held controls the Bloch equations are affine with constant
coefficients, so each segment is propagated exactly by a matrix
exponential.
"""

import csv
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .analytic import _time_optimal
from .bloch import as_bloch
from .dissipators import ModelKind, equilibrium_az
from .dynamics import ControlSchedule, Objective, default_eps_max
from .errors import InputDomainError

DEFAULT_TARGET_TOL = 1e-5
BOSONIC_EPS_FLOOR = 0.05  # in units of 1/beta
EPS_WARP = 4.0
LAM_WARP = 3.0


@dataclass(frozen=True)
class Problem:
    """Boundary-value problem for the oracle.

    ``horizon`` is the fixed duration (heat) or the longest allowed arrival
    time (time).
    """

    model: object
    objective: Objective
    a0: np.ndarray
    a_target: np.ndarray
    horizon: float
    eps_max: float = None
    lam_max: float = None
    target_tol: float = DEFAULT_TARGET_TOL

    def __post_init__(self):
        object.__setattr__(self, "objective", Objective(self.objective))
        object.__setattr__(self, "a0", as_bloch(self.a0))
        object.__setattr__(self, "a_target", as_bloch(self.a_target))
        if not (np.isfinite(self.horizon) and self.horizon >= 0):
            raise InputDomainError("horizon must be finite and non-negative")
        if self.eps_max is None:
            object.__setattr__(self, "eps_max", default_eps_max(self.model))
        if self.lam_max is None:
            object.__setattr__(self, "lam_max", 10.0 * max(self.model.gamma, 1e-12))

    @property
    def target_norm(self):
        return float(np.linalg.norm(self.a_target))

    def bounds(self, n_seg):
        eps_lo = BOSONIC_EPS_FLOOR / self.model.beta if self.model.kind is ModelKind.BOSONIC else -self.eps_max
        lo = np.tile([eps_lo, -self.lam_max, -self.lam_max, -self.lam_max], n_seg)
        hi = np.tile([self.eps_max, self.lam_max, self.lam_max, self.lam_max], n_seg)
        return lo.astype(float), hi.astype(float)

    def coordinate_map(self, n_seg):
        """Per-coordinate map from the unit box to control values.

        Symmetric ranges use ``hi sinh(k(2x - 1))/sinh(k)``, which resolves
        small controls finely while still reaching the bounds; the bosonic
        level (strictly positive) is log-spaced.
        """
        if self.model.kind is ModelKind.BOSONIC:
            eps_mode, eps_k = _kernels.LOG, 0.0
        else:
            eps_mode, eps_k = _kernels.SINH, EPS_WARP
        mode = np.tile([eps_mode, _kernels.SINH, _kernels.SINH, _kernels.SINH], n_seg).astype(np.int64)
        k = np.tile([eps_k, LAM_WARP, LAM_WARP, LAM_WARP], n_seg).astype(float)
        return mode, k


@dataclass
class ParamVector:
    """Per-segment ``(eps, l1, l2, l3)`` values, shape ``(N, 4)``."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.values.ndim != 2 or self.values.shape[1] != 4 or self.values.shape[0] < 1:
            raise InputDomainError("ParamVector needs shape (N >= 1, 4)")

    @property
    def n_segments(self):
        return self.values.shape[0]

    @classmethod
    def from_unit(cls, x, problem, n_seg):
        lo, hi = problem.bounds(n_seg)
        mode, k = problem.coordinate_map(n_seg)
        x = np.asarray(x, dtype=float)
        v = np.array([_kernels.unit_to_value(x[i], lo[i], hi[i], mode[i], k[i]) for i in range(x.size)])
        return cls(v.reshape(n_seg, 4))

    def to_unit(self, problem):
        lo, hi = problem.bounds(self.n_segments)
        mode, k = problem.coordinate_map(self.n_segments)
        v = self.values.ravel()
        if np.any(v < lo - 1e-12) or np.any(v > hi + 1e-12):
            raise InputDomainError("parameters outside bounds")
        x = np.where(
            mode == _kernels.SINH,
            0.5 * (1.0 + np.arcsinh(v / hi * np.sinh(np.maximum(k, 1e-300))) / np.maximum(k, 1e-300)),
            np.where(mode == _kernels.LOG, np.log(np.maximum(v, 1e-300) / np.maximum(lo, 1e-300)) / np.log(hi / np.where(lo > 0, lo, 1.0)), (v - lo) / (hi - lo)),
        )
        return np.clip(x, 0.0, 1.0)

    def segments(self):
        seg = self.values.copy()
        seg[:, 3] = -seg[:, 3]
        return np.ascontiguousarray(seg)

    def schedule(self, problem, dt=1e-3):
        """Equivalent :class:`ControlSchedule` (for cross-checks with RK4)."""
        n = self.n_segments
        breaks = np.arange(n) * problem.horizon / n
        lam = np.column_stack([np.zeros(n), self.values[:, 1], self.values[:, 2], self.values[:, 3]])
        return ControlSchedule.piecewise(breaks, self.values[:, 0], lam, t_final=problem.horizon, dt=dt)


@dataclass(frozen=True)
class Evaluation:
    cost: float
    target_miss: float
    final_state: np.ndarray
    heat: float


def evaluate(params, problem, subdiv=8):
    """Cost and target miss of a control vector.

    Heat: dissipated heat over the horizon, miss ``||a(T)| - |a*||``.
    Time: first arrival at the target norm (miss 0), or the horizon plus the
    closest approach when it never arrives.
    """
    lo, hi = problem.bounds(params.n_segments)
    v = params.values.ravel()
    if np.any(v < lo - 1e-12) or np.any(v > hi + 1e-12):
        raise InputDomainError("parameters outside bounds")
    if problem.horizon == 0:
        miss = abs(np.linalg.norm(problem.a0) - problem.target_norm)
        return Evaluation(0.0, miss, problem.a0.copy(), 0.0)
    seg_t = np.full(params.n_segments, problem.horizon / params.n_segments)
    time_obj = problem.objective is Objective.TIME
    af, heat, t_arr, miss_min, _ = _kernels.propagate_exact(
        problem.model.code, float(problem.model.gamma), float(problem.model.beta), problem.a0,
        params.segments(), seg_t, problem.target_norm, time_obj, subdiv,
    )
    if time_obj:
        if t_arr >= 0:
            return Evaluation(float(t_arr), 0.0, af, float(heat))
        return Evaluation(float(problem.horizon), float(miss_min), af, float(heat))
    return Evaluation(float(heat), float(abs(np.linalg.norm(af) - problem.target_norm)), af, float(heat))


@dataclass
class SearchConfig:
    n_segments: int = 16
    restarts: int = 200
    seed: int = 0
    iterations: int = 60
    epochs: int = 3
    penalty0: float = None
    step0: float = 0.25
    min_step: float = 1e-7
    subdiv: int = 4

    def __post_init__(self):
        if self.n_segments < 1 or self.restarts < 0 or self.iterations < 0 or self.epochs < 1:
            raise InputDomainError("invalid search configuration")

    def weights(self, objective):
        w0 = self.penalty0
        if w0 is None:
            w0 = 1e4 if Objective(objective) is Objective.HEAT else 10.0
        return w0 * 10.0 ** np.arange(self.epochs)


@dataclass
class RestartResult:
    index: int
    params: ParamVector
    cost: float
    target_miss: float
    trace: np.ndarray
    n_evals: int


@dataclass
class OptimizationResult:
    best: ParamVector
    best_cost: float
    target_miss: float
    feasible: bool
    trace: np.ndarray
    seed: int
    restarts: list = field(default_factory=list)
    target_tol: float = DEFAULT_TARGET_TOL

    @property
    def best_feasible(self):
        ok = [r for r in self.restarts if r.target_miss <= self.target_tol]
        return min(ok, key=lambda r: (r.cost, r.index)) if ok else None

    def to_dict(self):
        return {
            "best_cost": self.best_cost,
            "target_miss": self.target_miss,
            "feasible": self.feasible,
            "seed": self.seed,
            "best_params": self.best.values.tolist(),
            "restart_costs": [[r.index, r.cost, r.target_miss] for r in self.restarts],
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    def write_trace_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["restart", "iteration", "best_penalized"])
            for r in self.restarts:
                for i, v in enumerate(r.trace):
                    w.writerow([r.index, i, repr(float(v))])


def _run_restart(problem, config, idx, weights):
    n = config.n_segments
    rng = np.random.default_rng([config.seed, idx])
    x0 = rng.random(4 * n)
    lo, hi = problem.bounds(n)
    mode, k = problem.coordinate_map(n)
    time_obj = problem.objective is Objective.TIME
    if problem.horizon == 0:
        params = ParamVector.from_unit(x0, problem, n)
        ev = evaluate(params, problem)
        return RestartResult(idx, params, ev.cost, ev.target_miss, np.array([ev.cost]), 1)
    x, trace, cost, miss, n_evals = _kernels.pattern_search(
        problem.model.code, float(problem.model.gamma), float(problem.model.beta), problem.a0,
        problem.target_norm, time_obj, float(problem.horizon), n, x0, lo, hi, mode, k, weights,
        config.iterations, config.step0, config.min_step, config.subdiv,
    )
    return RestartResult(idx, ParamVector.from_unit(x, problem, n), float(cost), float(miss), trace, int(n_evals))


def _threads():
    try:
        return max(1, int(os.environ.get("QOCTL_THREADS", "1")))
    except ValueError:
        return 1


def multistart_search(problem, config=None, threads=None):
    """Best of ``config.restarts`` seeded pattern searches.

    Restart ``i`` draws its start from ``default_rng([seed, i])``, so the
    result does not depend on how restarts are scheduled over threads.
    """
    config = config or SearchConfig()
    weights = config.weights(problem.objective)
    threads = threads or _threads()
    idx = range(max(config.restarts, 1))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            runs = list(pool.map(lambda i: _run_restart(problem, config, i, weights), idx))
    else:
        runs = [_run_restart(problem, config, i, weights) for i in idx]
    runs.sort(key=lambda r: r.index)
    tol = problem.target_tol
    feasible = [r for r in runs if r.target_miss <= tol]
    pool_ = feasible or runs
    best = min(pool_, key=lambda r: (r.cost if feasible else r.cost + weights[-1] * r.target_miss**2, r.index))
    return OptimizationResult(best.params, best.cost, best.target_miss, bool(feasible), best.trace, config.seed, runs, tol)


# -- reachability ------------------------------------------------------------


def clamped_transfer_time(model, az0, az1, eps_max):
    """Transfer time ``az0 -> az1`` (both ``<= 0``) at the clamped optimal level.

    Returns ``inf`` when the clamped equilibrium cannot be passed, and 0 for
    the bosonic raising limit.
    """
    if az1 == az0:
        return 0.0
    lowering = az1 < az0
    if model.kind is ModelKind.BOSONIC and not lowering:
        return 0.0
    eps = eps_max if lowering else -eps_max
    aeq = float(equilibrium_az(model, eps))
    rate = model.gamma
    if model.kind is ModelKind.BOSONIC:
        rate = -model.gamma / aeq
    num, den = az0 - aeq, az1 - aeq
    if den == 0 or num / den <= 0 or (lowering and az1 <= aeq) or (not lowering and az1 >= aeq):
        return float("inf")
    return float(np.log(num / den) / rate)


@dataclass(frozen=True)
class ReachRow:
    target_az: float
    minimal_time: float
    exact_time: float
    reachable: bool


def reachability_scan(model, a0, horizon, grid, eps_max=None):
    """Reachable target ``a_z`` values (norm-matched, quenches free) within ``horizon``."""
    a0 = as_bloch(a0)
    eps_max = default_eps_max(model) if eps_max is None else float(eps_max)
    az0 = -float(np.linalg.norm(a0))
    rows = []
    for target in np.asarray(grid, dtype=float):
        az1 = -abs(float(target))
        if az1 <= -1.0:
            rows.append(ReachRow(float(target), float("inf"), float("inf"), False))
            continue
        t_clamp = clamped_transfer_time(model, az0, az1, eps_max)
        t_exact = _time_optimal(model, az0, az1)[0]
        rows.append(ReachRow(float(target), t_clamp, t_exact, bool(t_clamp <= horizon)))
    return rows


def write_reachability_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["target_az", "minimal_time", "exact_time", "reachable"])
        for r in rows:
            w.writerow([repr(r.target_az), repr(r.minimal_time), repr(r.exact_time), int(r.reachable)])
