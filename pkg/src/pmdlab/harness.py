"""Run tables, sweeps over target accuracies and seeds, and file emission."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .algo import AlgoConfig, RunResult, run_algorithm
from .analysis import extract_constants, remark_schedules
from .chain import BehaviorModel
from .errors import ValidationError
from .mdp import TabularMdp, policy_value, uniform_policy
from .oracle import OptimalSolution, value_iteration

RUN_COLUMNS = ("k", "eta_k", "b_k", "samples_cum", "subopt_V", "qstar_gap", "critic_gap", "omega_inf")
SUMMARY_COLUMNS = ("eps", "algo", "seeds", "mean_subopt", "total_samples")
SCHEDULE_KINDS = ("adaptive", "batch-q", "constant")


def fmt(x) -> str:
    """Fixed 17-significant-digit rendering, exact on round trip."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    return format(x, ".17g")


def to_csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def suboptimality(mdp: TabularMdp, opt: OptimalSolution, pi: np.ndarray) -> float:
    v, _ = policy_value(mdp, pi)
    return float(np.max(opt.v_star - v))


def run_table(mdp: TabularMdp, opt: OptimalSolution, run: RunResult) -> list[tuple]:
    """One row per recorded iterate, in ``RUN_COLUMNS`` order."""
    rows = []
    for rec in run.trace:
        v, q_pi = policy_value(mdp, rec.pi)
        omega = np.nan if rec.omega_bar is None else float(np.max(np.abs(rec.omega_bar)))
        rows.append((
            rec.k,
            rec.eta,
            rec.b,
            rec.samples_cumulative,
            float(np.max(opt.v_star - v)),
            float(np.max(np.abs(opt.q_star - rec.q))),
            float(np.max(np.abs(q_pi - rec.q))),
            omega,
        ))
    return rows


def run_summary(mdp: TabularMdp, opt: OptimalSolution, run: RunResult, config: AlgoConfig) -> dict:
    return {
        "algo": run.kind,
        "config": config.to_dict(),
        "hat_index": run.hat_index,
        "total_samples": run.total_samples,
        "sigma_floor": run.sigma_floor,
        "subopt_last": suboptimality(mdp, opt, run.pi_K),
        "subopt_hat": suboptimality(mdp, opt, run.pi_hat),
        "qstar_gap_last": float(np.max(np.abs(opt.q_star - run.q_K))),
        "policy_value_gap_last": float(np.max(np.abs(opt.q_star - policy_value(mdp, run.pi_K)[1]))),
    }


# -- sweeps ---------------------------------------------------------------------

@dataclass
class SweepSpec:
    """A grid of partial configs crossed with seeds and target accuracies.

    A grid entry may carry ``"schedule"`` (one of ``SCHEDULE_KINDS``); for each
    target accuracy its ``K``, step and batch sizes are then filled in from the
    matching schedule with constants estimated on the instance.  Without a
    schedule the entry runs as given and ``eps`` is reported as ``nan``.
    """

    grid: list
    seeds: list
    epsilons: list = field(default_factory=list)
    theta: float | None = None  # needed by the constant-step schedule
    sample_budget: int = 10**8  # per-run cap on scheduled samples

    def __post_init__(self):
        if not self.grid:
            raise ValidationError("grid: must be nonempty")
        if not self.seeds:
            raise ValidationError("seeds: must be nonempty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValidationError("seeds: must be distinct")
        for cell in self.grid:
            if not isinstance(cell, dict):
                raise ValidationError("grid: entries must be objects")
            sched = cell.get("schedule")
            if sched is not None and sched not in SCHEDULE_KINDS:
                raise ValidationError(f"schedule: expected one of {SCHEDULE_KINDS}, got {sched!r}")
            AlgoConfig.from_dict({k: v for k, v in cell.items() if k != "schedule"})
        if any(not e > 0 for e in self.epsilons):
            raise ValidationError("epsilons: must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "SweepSpec":
        known = {"grid", "seeds", "epsilons", "theta", "sample_budget"}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValidationError(f"{unknown[0]}: unknown sweep key")
        for key in ("grid", "seeds"):
            if key not in d:
                raise ValidationError(f"{key}: missing sweep key")
        return cls(grid=list(d["grid"]), seeds=[int(s) for s in d["seeds"]],
                   epsilons=[float(e) for e in d.get("epsilons", [])], theta=d.get("theta"),
                   sample_budget=int(d.get("sample_budget", 10**8)))


def scheduled_config(cell: dict, eps: float | None, mdp: TabularMdp, behavior: BehaviorModel,
                     opt: OptimalSolution, theta: float | None, sample_budget: float = math.inf) -> AlgoConfig:
    base = {k: v for k, v in cell.items() if k != "schedule"}
    cfg = AlgoConfig.from_dict(base)
    kind = cell.get("schedule")
    if kind is None or eps is None:
        return cfg
    pi0 = cfg.pi0 if cfg.pi0 is not None else uniform_policy(mdp.num_states, mdp.num_actions)
    inputs = extract_constants(mdp, behavior, cfg.map, pi0, opt.pi_star, alpha=cfg.alpha)
    sched = remark_schedules(eps, inputs, kind, theta=theta)
    if sched.total_samples > sample_budget:
        raise ValidationError(
            f"sample_budget: the {kind} schedule at eps={eps:g} needs {sched.total_samples} samples per run"
        )
    cfg.K = sched.K
    cfg.batch_schedule = sched.batch_schedule
    if kind == "adaptive":
        cfg.eta_mode, cfg.eta = "adaptive", sched.eta
    elif kind == "constant":
        cfg.eta_mode, cfg.eta = "constant", sched.eta
        cfg.theta = theta
    return cfg


def run_sweep(mdp: TabularMdp, behavior: BehaviorModel, spec: SweepSpec, out_dir: Path) -> list[tuple]:
    """Execute every (cell, eps, seed), write per-run CSVs and ``summary.csv``."""
    out_dir = Path(out_dir)
    runs_dir = out_dir / "runs"
    runs_dir.mkdir(parents=True, exist_ok=True)
    opt = value_iteration(mdp)
    eps_list = spec.epsilons or [None]
    summary = []
    for ci, cell in enumerate(spec.grid):
        for ei, eps in enumerate(eps_list):
            cfg_eps = scheduled_config(cell, eps, mdp, behavior, opt, spec.theta, spec.sample_budget)
            subopts, totals = [], set()
            for seed in spec.seeds:
                cfg = AlgoConfig.from_dict({**cfg_eps.to_dict(), "seed": seed, "run_id": ci})
                run = run_algorithm(mdp, behavior, cfg)
                name = f"cell{ci}_eps{ei}_seed{seed}.csv"
                (runs_dir / name).write_text(to_csv(RUN_COLUMNS, run_table(mdp, opt, run)))
                subopts.append(suboptimality(mdp, opt, run.pi_K))
                totals.add(run.total_samples)
            if len(totals) != 1:
                raise RuntimeError("executed schedules differ across seeds")
            summary.append((np.nan if eps is None else eps, cfg_eps.algo_kind, len(spec.seeds),
                            float(np.mean(subopts)), totals.pop()))
    rows = [(fmt(e), a, n, fmt(m), t) for e, a, n, m, t in summary]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    w.writerows(rows)
    (out_dir / "summary.csv").write_text(buf.getvalue())
    return summary
