"""Command line entry point.

Exit codes: 0 on success, 1 on invalid input (or a failed property check),
2 when an exploration or ergodicity assumption fails.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .algo import AlgoConfig, run_algorithm
from .analysis import bias_decomposition, run_property_suite
from .chain import behavior_model
from .errors import ExplorationFailure, NotErgodic, ValidationError
from .garnet import GarnetSpec, gen_garnet
from .harness import RUN_COLUMNS, SweepSpec, dump_json, run_sweep, run_summary, run_table, to_csv
from .mdp import TabularMdp, uniform_policy
from .mirror import MirrorMap
from .oracle import value_iteration

SEED_ENV = "PMDLAB_SEED"
DEFAULT_GARNET = GarnetSpec(num_states=10, num_actions=5, branching=3, seed=0, gamma=0.9)


def _read_json(path: str, what: str):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ValidationError(f"{what}: cannot read {path} ({exc.strerror})") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{what}: invalid JSON in {path} ({exc})") from None


def _seed(args) -> int | None:
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ValidationError(f"{SEED_ENV}: expected an integer, got {env!r}") from None
    return args.seed


def _load_mdp(args) -> TabularMdp:
    if args.mdp is None:
        return gen_garnet(DEFAULT_GARNET)
    return TabularMdp.from_dict(_read_json(args.mdp, "mdp"))


def _load_behavior(args, mdp: TabularMdp):
    if getattr(args, "behavior", None) is None:
        return behavior_model(mdp, uniform_policy(mdp.num_states, mdp.num_actions))
    return behavior_model(mdp, np.array(_read_json(args.behavior, "behavior"), dtype=float))


def _load_config(args) -> AlgoConfig:
    d = _read_json(args.config, "config") if args.config else {}
    if not isinstance(d, dict):
        raise ValidationError("config: expected a JSON object")
    seed = _seed(args)
    if seed is not None:
        d = {**d, "seed": seed}
    return AlgoConfig.from_dict(d)


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


# -- subcommands -------------------------------------------------------------

def cmd_gen(args) -> int:
    seed = _seed(args)
    spec = GarnetSpec(args.states, args.actions, args.branching, 0 if seed is None else seed, args.gamma)
    _write(Path(args.out), gen_garnet(spec).to_json() + "\n")
    return 0


def cmd_solve(args) -> int:
    mdp = _load_mdp(args)
    _write(Path(args.out), dump_json(value_iteration(mdp, tol=args.tol).to_dict()))
    return 0


def cmd_run(args) -> int:
    mdp = _load_mdp(args)
    behavior = _load_behavior(args, mdp)
    cfg = _load_config(args)
    run = run_algorithm(mdp, behavior, cfg)
    opt = value_iteration(mdp)
    out = Path(args.out_dir)
    _write(out / "run.csv", to_csv(RUN_COLUMNS, run_table(mdp, opt, run)))
    _write(out / "result.json", dump_json(run_summary(mdp, opt, run, cfg)))
    return 0


def cmd_sweep(args) -> int:
    mdp = _load_mdp(args)
    behavior = _load_behavior(args, mdp)
    d = _read_json(args.spec, "sweep")
    if not isinstance(d, dict):
        raise ValidationError("sweep: expected a JSON object")
    run_sweep(mdp, behavior, SweepSpec.from_dict(d), Path(args.out_dir))
    return 0


def cmd_check(args) -> int:
    mdp = _load_mdp(args)
    behavior = _load_behavior(args, mdp)
    seed = _seed(args)
    seeds = list(range(args.seeds)) if seed is None else [seed + i for i in range(args.seeds)]
    report = run_property_suite(mdp, behavior, MirrorMap.from_name(args.map), seeds)
    _write(Path(args.out), dump_json(report))
    for entry in report:
        status = "pass" if entry["pass"] else "FAIL"
        print(f"{status} {entry['lemma']}: measured {entry['measured']:.6g} <= bound {entry['bound']:.6g}")
    return 0 if all(e["pass"] for e in report) else 1


def cmd_decompose(args) -> int:
    mdp = _load_mdp(args)
    behavior = _load_behavior(args, mdp)
    cfg = _load_config(args)
    if cfg.algo_kind == "batch-q":
        raise ValidationError("algo_kind: decomposition needs an actor-critic run")
    if args.k > cfg.K:
        raise ValidationError(f"k: must be at most K={cfg.K}")
    if not 0 <= args.state < mdp.num_states:
        raise ValidationError(f"state: must lie in [0, {mdp.num_states})")
    run = run_algorithm(mdp, behavior, cfg)
    opt = value_iteration(mdp)
    dec = bias_decomposition(run, mdp, behavior, opt.pi_star, args.state, args.k)
    _write(Path(args.out), dump_json({
        "state": args.state,
        "k": args.k,
        "lhs": dec.lhs,
        "b0": dec.b0,
        "c": dec.c.tolist(),
        "d": dec.d.tolist(),
        "e": dec.e.tolist(),
        "f": dec.f.tolist(),
        "rhs": dec.rhs,
        "residual": dec.residual,
    }))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pmdlab", description="Policy mirror descent with TD critics.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, mdp=True, behavior=False):
        p.add_argument("--seed", type=int, default=None, help=f"random seed ({SEED_ENV} overrides)")
        if mdp:
            p.add_argument("--mdp", default=None, help="MDP JSON (default: built-in 10x5 Garnet)")
        if behavior:
            p.add_argument("--behavior", default=None, help="behavior policy JSON (default: uniform)")

    p = sub.add_parser("gen", help="generate a Garnet MDP")
    common(p, mdp=False)
    p.add_argument("--states", type=int, default=DEFAULT_GARNET.num_states)
    p.add_argument("--actions", type=int, default=DEFAULT_GARNET.num_actions)
    p.add_argument("--branching", type=int, default=DEFAULT_GARNET.branching)
    p.add_argument("--gamma", type=float, default=DEFAULT_GARNET.gamma)
    p.add_argument("--out", default="mdp.json")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("solve", help="solve an MDP by value iteration")
    common(p)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--out", default="solution.json")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("run", help="run one algorithm")
    common(p, behavior=True)
    p.add_argument("--config", default=None, help="JSON with AlgoConfig fields")
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run a grid over seeds and target accuracies")
    common(p, behavior=True)
    p.add_argument("--spec", required=True, help="sweep JSON: grid, seeds, epsilons, theta")
    p.add_argument("--out-dir", default="sweep")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("check", help="run the property suite")
    common(p, behavior=True)
    p.add_argument("--map", default="negative-entropy")
    p.add_argument("--seeds", type=int, default=3, help="number of seeds")
    p.add_argument("--out", default="report.json")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("decompose", help="verify the pathwise bias decomposition")
    common(p, behavior=True)
    p.add_argument("--config", default=None)
    p.add_argument("--state", type=int, default=0)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--out", default="decomp.json")
    p.set_defaults(func=cmd_decompose)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ExplorationFailure, NotErgodic) as exc:
        print(f"assumption failure: {exc}", file=sys.stderr)
        return 2
