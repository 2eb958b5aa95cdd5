"""Command-line front end: ``qoctl {simulate,synthesize,verify,certify}``.

Configuration is an INI file::

    [model]      kind = gibbs | bosonic | fermionic, gamma, beta
    [boundary]   a0 = x, y, z ; a_tau = x, y, z ; q0 = x, y, z (optional)
    [run]        objective = heat | time, tau, step, eps_max, seed
    [optimizer]  n_segments, restarts, iterations

Command-line flags override the file. Exit codes: 0 ok, 1 verification
failed, 2 input error, 3 infeasible problem.
"""

import argparse
import configparser
import csv
import json
import logging
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import __version__
from .analytic import (
    final_state,
    simulate_protocol,
    synthesize_heat_protocol,
    synthesize_time_protocol,
)
from .dissipators import DissipatorModel
from .dynamics import ControlSchedule, Objective, Trajectory, arrival_time, default_eps_max, integrate
from .errors import InfeasibleProblem, InputDomainError, QoctlError
from .optimizer import Problem, SearchConfig, multistart_search
from .pmp import conserved_K, residuals

logger = logging.getLogger("qoctl")

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_INFEASIBLE = 0, 1, 2, 3
CERTIFY_RTOL = 1e-3


@dataclass
class RunConfig:
    kind: str = "gibbs"
    gamma: float = 1.0
    beta: float = 1.0
    a0: tuple = (0.0, 0.0, -0.2)
    a_tau: tuple = (0.0, 0.0, -0.8)
    q0: tuple = None
    objective: str = "heat"
    tau: float = 3.0
    step: float = 1e-3
    eps_max: float = None
    seed: int = 0
    n_segments: int = 16
    restarts: int = 200
    iterations: int = 60
    out: str = "."

    @property
    def model(self):
        return DissipatorModel(self.kind, self.gamma, self.beta)

    def resolved(self):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["eps_max"] = self.eps_max if self.eps_max is not None else default_eps_max(self.model)
        for k in ("a0", "a_tau", "q0"):
            if d[k] is not None:
                d[k] = [float(v) for v in d[k]]
        return d

    def validate(self):
        if not (self.gamma > 0 and self.beta > 0 and self.step > 0 and self.tau >= 0):
            raise InputDomainError("gamma, beta and step must be positive; tau non-negative")
        if self.eps_max is not None and not self.eps_max > 0:
            raise InputDomainError("eps_max must be positive")
        Objective(self.objective)
        for name in ("a0", "a_tau"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (3,) or np.linalg.norm(v) > 1.0 + 1e-9:
                raise InputDomainError(f"{name} must be a physical Bloch vector")
        self.model  # validates kind
        return self


def _triple(text, name):
    try:
        vals = tuple(float(v) for v in text.replace(";", ",").split(","))
    except ValueError:
        raise InputDomainError(f"{name}: expected three comma-separated numbers, got {text!r}") from None
    if len(vals) != 3:
        raise InputDomainError(f"{name}: expected three values, got {len(vals)}")
    return vals


def load_config(path=None):
    cfg = RunConfig()
    if path is None:
        return cfg
    parser = configparser.ConfigParser()
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except FileNotFoundError:
        raise InputDomainError(f"config file {path} not found") from None
    except configparser.Error as exc:
        raise InputDomainError(f"{path}: {exc}") from None
    spec = {
        "model": {"kind": str, "gamma": float, "beta": float},
        "boundary": {"a0": "triple", "a_tau": "triple", "q0": "triple"},
        "run": {"objective": str, "tau": float, "step": float, "eps_max": float, "seed": int, "out": str},
        "optimizer": {"n_segments": int, "restarts": int, "iterations": int},
    }
    for section in parser.sections():
        if section not in spec:
            raise InputDomainError(f"{path}: unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in spec[section]:
                raise InputDomainError(f"{path}: unknown key {key!r} in [{section}]")
            conv = spec[section][key]
            if conv == "triple":
                setattr(cfg, key, _triple(raw, key))
                continue
            try:
                value = conv(raw)
            except ValueError:
                raise InputDomainError(f"{path}: [{section}] {key} = {raw!r} is not a valid {conv.__name__}") from None
            setattr(cfg, key, value)
    return cfg


def read_schedule(path, tau, step):
    """Held schedule from a CSV with columns ``t, eps`` and optional ``l0..l3``."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except FileNotFoundError:
        raise InputDomainError(f"schedule file {path} not found") from None
    if not rows:
        raise InputDomainError(f"{path}: empty schedule")
    header = [h.strip() for h in rows[0]]
    if "t" not in header or "eps" not in header:
        raise InputDomainError(f"{path}:1: header needs columns t and eps")
    cols = ["t", "eps", "l0", "l1", "l2", "l3"]
    idx = {c: header.index(c) for c in cols if c in header}
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        try:
            vals = [float(row[idx[c]]) if c in idx else 0.0 for c in cols]
        except (ValueError, IndexError):
            raise InputDomainError(f"{path}:{lineno}: malformed row {row!r}") from None
        if np.isnan(vals[1]) or not np.isfinite(vals[0]) or not np.all(np.isfinite(vals[2:])):
            raise InputDomainError(f"{path}:{lineno}: non-finite value")
        if data and vals[0] <= data[-1][0]:
            raise InputDomainError(f"{path}:{lineno}: times must increase")
        data.append(vals)
    if not data:
        raise InputDomainError(f"{path}: no schedule rows")
    arr = np.array(data)
    if arr[0, 0] != 0.0:
        raise InputDomainError(f"{path}:2: first row must start at t = 0")
    return ControlSchedule.piecewise(arr[:, 0], arr[:, 1], arr[:, 2:], t_final=tau, dt=step)


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")


def _envelope(cfg, command, **payload):
    return {"tool": "qoctl", "version": __version__, "command": command, "config": cfg.resolved(), **payload}


def cmd_simulate(cfg, schedule_file):
    model = cfg.model
    sched = read_schedule(schedule_file, cfg.tau, cfg.step)
    traj = integrate(sched, cfg.a0, model, q0=cfg.q0, objective=cfg.objective, eps_max=cfg.eps_max)
    traj.to_csv(os.path.join(cfg.out, "trajectory.csv"))
    h_stats = None
    if traj.q is not None:
        ph = conserved_K(traj, cfg.objective)
        h_stats = {"mean": ph.K, "stdev": ph.stdev, "max_deviation": ph.max_deviation}
    summary = _envelope(
        cfg, "simulate",
        final_state=traj.a[-1].tolist(),
        heat=traj.total_heat,
        pseudo_hamiltonian=h_stats,
        samples=int(traj.times.size),
    )
    _write_json(os.path.join(cfg.out, "summary.json"), summary)
    return EXIT_OK


def _synthesize(cfg):
    model = cfg.model
    if Objective(cfg.objective) is Objective.HEAT:
        return synthesize_heat_protocol(model, cfg.a0, cfg.a_tau, cfg.tau)
    return synthesize_time_protocol(model, cfg.a0, cfg.a_tau, eps_max=cfg.eps_max)


def cmd_synthesize(cfg):
    protocol = _synthesize(cfg)
    traj = simulate_protocol(protocol, dt=cfg.step, eps_max=cfg.eps_max)
    traj.to_csv(os.path.join(cfg.out, "verification.csv"))
    target = final_state(protocol, traj)
    if protocol.objective is Objective.HEAT:
        achieved = traj.total_heat
    else:
        tn = float(np.linalg.norm(cfg.a_tau))
        achieved = arrival_time(traj, tn) if protocol.duration > 0 else 0.0
        if achieved is None:
            achieved = protocol.duration
    pc = protocol.predicted_cost
    rel = abs(achieved - pc) / abs(pc) if pc != 0 else abs(achieved - pc)
    payload = _envelope(
        cfg, "synthesize",
        protocol=protocol.to_dict(),
        predicted_cost=pc,
        achieved_cost=float(achieved),
        relative_error=float(rel),
        final_state=target.tolist(),
    )
    _write_json(os.path.join(cfg.out, "protocol.json"), payload)
    return EXIT_OK


def cmd_verify(cfg, trajectory_file, K=None):
    traj = Trajectory.from_csv(trajectory_file, model=cfg.model, objective=cfg.objective)
    if traj.q is None:
        raise InputDomainError(f"{trajectory_file}: costate columns are empty")
    objective = Objective(cfg.objective)
    if K is None:
        K = conserved_K(traj, objective).K if objective is Objective.HEAT else 0.0
    ok = True
    worst = (0.0, None, None)
    path = os.path.join(cfg.out, "verify.jsonl")
    with open(path, "w") as fh:
        for k in range(traj.times.size):
            rep = residuals(traj.model, traj.a[k], traj.q[k], traj.eps[k], objective, K, traj.lam[k])
            for name, r in rep.residuals.items():
                fh.write(json.dumps({"sample": k, "t": float(traj.times[k]), "eq": name, "raw": r.raw, "relative": r.relative, "pass": r.passed}) + "\n")
                if abs(r.relative) > worst[0]:
                    worst = (abs(r.relative), k, name)
            ok &= rep.verdict
    _write_json(
        os.path.join(cfg.out, "verify_summary.json"),
        _envelope(cfg, "verify", K=K, verdict="pass" if ok else "fail", worst_relative=worst[0], worst_sample=worst[1], worst_condition=worst[2]),
    )
    return EXIT_OK if ok else EXIT_FAIL


def cmd_certify(cfg, threads=None):
    protocol = _synthesize(cfg)
    analytic = protocol.predicted_cost
    objective = Objective(cfg.objective)
    if cfg.restarts == 0:
        payload = _envelope(cfg, "certify", analytic_cost=analytic, verdict="skipped", margin=None, seeds=[])
        _write_json(os.path.join(cfg.out, "certify.json"), payload)
        return EXIT_OK
    horizon = cfg.tau if objective is Objective.HEAT else max(2.0 * analytic, cfg.tau)
    problem = Problem(cfg.model, objective, cfg.a0, cfg.a_tau, horizon, eps_max=cfg.eps_max)
    conf = SearchConfig(n_segments=cfg.n_segments, restarts=cfg.restarts, seed=cfg.seed, iterations=cfg.iterations)
    result = multistart_search(problem, conf, threads=threads)
    best = result.best_feasible
    if best is None:
        verdict, margin, best_cost = "inconclusive", None, None
    else:
        best_cost = best.cost
        scale = abs(analytic) if analytic != 0 else 1.0
        margin = (best_cost - analytic) / scale
        verdict = "analytic not beaten" if margin >= -CERTIFY_RTOL else "analytic beaten"
    payload = _envelope(
        cfg, "certify",
        analytic_cost=analytic,
        best_cost=best_cost,
        margin=margin,
        verdict=verdict,
        seeds=[[cfg.seed, i] for i in range(cfg.restarts)],
        feasible_restarts=sum(r.target_miss <= problem.target_tol for r in result.restarts),
        horizon=horizon,
    )
    _write_json(os.path.join(cfg.out, "certify.json"), payload)
    result.write_trace_csv(os.path.join(cfg.out, "certify_trace.csv"))
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="qoctl", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"qoctl {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI configuration file")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int)
    common.add_argument("--model", choices=["gibbs", "bosonic", "fermionic"])
    common.add_argument("--objective", choices=["heat", "time"])
    common.add_argument("--eps-max", type=float, dest="eps_max")
    common.add_argument("--step", type=float)
    common.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("simulate", parents=[common], help="integrate a control schedule")
    s.add_argument("schedule", help="CSV with columns t, eps[, l0, l1, l2, l3]")
    sub.add_parser("synthesize", parents=[common], help="build and re-simulate the optimal protocol")
    v = sub.add_parser("verify", parents=[common], help="PMP residuals along a trajectory CSV")
    v.add_argument("trajectory")
    v.add_argument("--K", type=float, default=None, help="conserved value (default: trajectory mean)")
    c = sub.add_parser("certify", parents=[common], help="compare the analytic cost with a multistart search")
    c.add_argument("--restarts", type=int)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        for key in ("out", "seed", "objective", "eps_max", "step"):
            if getattr(args, key, None) is not None:
                setattr(cfg, key, getattr(args, key))
        if args.model is not None:
            cfg.kind = args.model
        if getattr(args, "restarts", None) is not None:
            cfg.restarts = args.restarts
        cfg.validate()
        os.makedirs(cfg.out, exist_ok=True)
        if args.command == "simulate":
            return cmd_simulate(cfg, args.schedule)
        if args.command == "synthesize":
            return cmd_synthesize(cfg)
        if args.command == "verify":
            return cmd_verify(cfg, args.trajectory, args.K)
        return cmd_certify(cfg)
    except InfeasibleProblem as exc:
        print(f"qoctl: infeasible: {exc}", file=sys.stderr)
        out = getattr(locals().get("cfg"), "out", ".")
        try:
            _write_json(
                os.path.join(out, "infeasible.json"),
                _envelope(cfg, args.command, error=str(exc), minimal_time=exc.minimal_time),
            )
        except OSError:
            pass
        return EXIT_INFEASIBLE
    except (QoctlError, ValueError, OSError) as exc:
        print(f"qoctl: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
