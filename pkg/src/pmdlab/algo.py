"""Policy mirror descent with temporal-difference critics under Markov sampling.

Three drivers share one loop:

* ``expected``: off-policy tuples from a fixed behavior policy; the TD target
  averages the critic over the freshly updated target policy.
* ``approximate``: each tuple takes a behavior action, then a target-policy
  action at the next state; the TD target uses that sampled action.
* ``batch-q``: off-policy tuples with a max target and no explicit policy.

Every driver records, per iteration, the aggregated TD error and its
noise component, i.e. the part not explained by the exact weighted Bellman
increment.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .chain import BehaviorModel, MixedSampler, OffPolicySampler, check_ergodicity, stationary_dist
from .errors import ExplorationFailure, NotErgodic, ValidationError
from .mdp import (
    TabularMdp,
    bellman_q,
    greedy_policy,
    state_values,
    transition_matrix_s,
    transition_matrix_sa,
    uniform_policy,
)
from .mirror import MirrorMap, bregman, pmd_step
from .rng import make_rng

ALGO_KINDS = ("expected", "approximate", "batch-q")
ETA_MODES = ("constant", "adaptive", "qlearning-equiv")
ADAPTIVE_FLOOR = 1e-12


@dataclass
class AlgoConfig:
    algo_kind: str = "expected"
    map: MirrorMap = field(default_factory=MirrorMap.negative_entropy)
    K: int = 100
    alpha: float = 1.0
    eta_mode: str = "constant"
    eta: float = 1.0
    batch_schedule: int | Sequence[int] | Callable[[int], int] = 64
    theta: float = 1.0
    seed: int = 0
    run_id: int = 0
    noise_free: bool = False
    s0: int = 0
    pi0: np.ndarray | None = None

    def __post_init__(self):
        if self.algo_kind not in ALGO_KINDS:
            raise ValidationError(f"algo_kind: expected one of {ALGO_KINDS}, got {self.algo_kind!r}")
        if isinstance(self.map, str):
            self.map = MirrorMap.from_name(self.map)
        if self.eta_mode not in ETA_MODES:
            raise ValidationError(f"eta_mode: expected one of {ETA_MODES}, got {self.eta_mode!r}")
        if int(self.K) != self.K or self.K < 0:
            raise ValidationError("K: must be a nonnegative integer")
        self.K = int(self.K)
        if not 0 < self.alpha <= 1:
            raise ValidationError("alpha: must lie in (0, 1]")
        if not 0 <= self.theta <= 1:
            raise ValidationError("theta: must lie in [0, 1]")
        if not self.eta >= 0:
            raise ValidationError("eta: must be nonnegative")
        if isinstance(self.batch_schedule, (list, tuple, np.ndarray)):
            sched = [int(b) for b in self.batch_schedule]
            if len(sched) < self.K:
                raise ValidationError(f"batch_schedule: needs {self.K} entries, got {len(sched)}")
            self.batch_schedule = sched
        if self.pi0 is not None:
            self.pi0 = np.asarray(self.pi0, dtype=float)

    def batch_size(self, k: int) -> int:
        bs = self.batch_schedule
        if callable(bs):
            b = int(bs(k))
        elif isinstance(bs, list):
            b = bs[k]
        else:
            b = int(bs)
        if b < 1:
            raise ValidationError(f"batch_schedule: B_{k} = {b} is below 1")
        return b

    @classmethod
    def from_dict(cls, d: dict) -> "AlgoConfig":
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - names)
        if unknown:
            raise ValidationError(f"{unknown[0]}: unknown config key")
        return cls(**d)

    def to_dict(self) -> dict:
        bs = self.batch_schedule
        return {
            "algo_kind": self.algo_kind,
            "map": self.map.kind,
            "K": self.K,
            "alpha": self.alpha,
            "eta_mode": self.eta_mode,
            "eta": self.eta,
            "batch_schedule": bs if isinstance(bs, (int, list)) else [self.batch_size(k) for k in range(self.K)],
            "theta": self.theta,
            "seed": self.seed,
            "run_id": self.run_id,
            "noise_free": self.noise_free,
            "s0": self.s0,
            "pi0": None if self.pi0 is None else self.pi0.tolist(),
        }


@dataclass(eq=False)
class IterationRecord:
    k: int
    pi: np.ndarray  # pi_k
    q: np.ndarray  # Q^k
    eta: float  # eta_k used to form pi_{k+1}; nan on the final record
    b: int  # samples drawn in iteration k
    delta_bar: np.ndarray | None  # aggregated TD error
    omega_bar: np.ndarray | None  # its noise component
    samples_cumulative: int  # samples consumed to produce Q^k
    sigma: np.ndarray | None = None  # weights of the exact operator in iteration k


@dataclass(eq=False)
class RunResult:
    kind: str
    trace: list
    pi_K: np.ndarray
    pi_hat: np.ndarray
    hat_index: int
    sigma_floor: float  # behavior floor, or running minimum over the composed chains
    alpha: float = 1.0

    @property
    def q_K(self) -> np.ndarray:
        return self.trace[-1].q

    @property
    def total_samples(self) -> int:
        return self.trace[-1].samples_cumulative


# -- building blocks --------------------------------------------------------

def td_weights(B: int, theta: float) -> np.ndarray:
    """Geometric averaging weights ``c_t ∝ theta^(B-t-1)`` (``0^0 = 1``)."""
    return _td_weights(int(B), float(theta)).copy()


@lru_cache(maxsize=256)
def _td_weights(B: int, theta: float) -> np.ndarray:
    if B < 1:
        raise ValidationError("B: must be at least 1")
    if not 0 <= theta <= 1:
        raise ValidationError("theta: must lie in [0, 1]")
    if theta == 1:
        w = np.full(B, 1.0 / B)
        w.setflags(write=False)
        return w
    w = theta ** np.arange(B - 1, -1, -1, dtype=float)
    w /= w.sum()
    w.setflags(write=False)
    return w


def expected_td_error(q: np.ndarray, pi_target: np.ndarray, tup, gamma: float) -> np.ndarray:
    """Indicator-placed TD error with the target averaged over ``pi_target(.|s')``."""
    q = np.asarray(q, dtype=float)
    n_actions = pi_target.shape[1]
    qm = q.reshape(-1, n_actions)
    out = np.zeros_like(q)
    idx = tup.s * n_actions + tup.a
    out[idx] = tup.r + gamma * float(pi_target[tup.s_next] @ qm[tup.s_next]) - q[idx]
    return out


def approx_td_error(q: np.ndarray, tup, gamma: float, num_actions: int) -> np.ndarray:
    """Indicator-placed TD error with the target ``Q(s', a')`` of the sampled action."""
    q = np.asarray(q, dtype=float)
    out = np.zeros_like(q)
    idx = tup.s * num_actions + tup.a
    out[idx] = tup.r + gamma * q[tup.s_next * num_actions + tup.a_next] - q[idx]
    return out


def _weights(w) -> np.ndarray:
    return w.sigma if isinstance(w, BehaviorModel) else np.asarray(w, dtype=float)


def weighted_bellman(mdp: TabularMdp, pi: np.ndarray, weights, alpha: float, q: np.ndarray) -> np.ndarray:
    """``Q + alpha * Sigma (F^pi Q - Q)`` with ``Sigma = diag(weights)``."""
    sigma = _weights(weights)
    if np.any(sigma <= 0):
        raise ExplorationFailure("state-action weights must be strictly positive")
    q = np.asarray(q, dtype=float)
    return q + alpha * sigma * (bellman_q(mdp, pi, q) - q)


def weighted_operator_matrix(mdp: TabularMdp, pi: np.ndarray, weights, alpha: float) -> np.ndarray:
    """Linear part ``I - alpha Sigma (I - gamma P_SA^pi)`` of the weighted operator."""
    sigma = _weights(weights)
    n = sigma.size
    return np.eye(n) - alpha * sigma[:, None] * (np.eye(n) - mdp.gamma * transition_matrix_sa(mdp, pi))


def adaptive_eta(mmap: MirrorMap, pi_k: np.ndarray, q_k: np.ndarray, eta_base: float) -> float:
    """``eta_base * max_s D(greedy(.|s) || pi_k(.|s))``, floored at ``eta_base * 1e-12``."""
    greedy = greedy_policy(q_k, pi_k.shape[1])
    d = float(np.max(bregman(mmap, greedy, pi_k)))
    return eta_base * max(d, ADAPTIVE_FLOOR)


def value_gaps(q_k: np.ndarray, num_actions: int) -> np.ndarray:
    """Per-state gap between the best value and the best strictly smaller value."""
    qm = np.asarray(q_k, dtype=float).reshape(-1, num_actions)
    best = qm.max(axis=1, keepdims=True)
    below = np.where(qm < best, qm, -np.inf)
    second = below.max(axis=1)
    return np.where(np.isfinite(second), best[:, 0] - second, np.inf)


def qlearning_equiv_eta(q_k: np.ndarray, num_actions: int, eta_floor: float) -> float:
    """Step large enough that the squared-l2 step lands exactly on the greedy policy."""
    gaps = value_gaps(q_k, num_actions)
    return max(2.0 * float(np.max(1.0 / gaps)), eta_floor)


# -- drivers ----------------------------------------------------------------

class _ComposedWeights:
    """Stationary weights of behavior-then-target chains with an ergodicity cache."""

    def __init__(self, mdp: TabularMdp, pi_b: np.ndarray):
        self.mdp = mdp
        self.pi_b = pi_b
        self.p_b = transition_matrix_s(mdp, pi_b)
        self._ergodic = {}

    def __call__(self, pi: np.ndarray) -> np.ndarray:
        p = self.p_b @ transition_matrix_s(self.mdp, pi)
        key = np.packbits(p > 0).tobytes()
        ok = self._ergodic.get(key)
        if ok is None:
            ok = self._ergodic[key] = check_ergodicity(p)
        if not ok:
            raise NotErgodic("composed behavior/target chain is not irreducible and aperiodic")
        nu = stationary_dist(p, check=False)
        return (nu[:, None] * self.pi_b).reshape(-1)


def _choose_eta(config: AlgoConfig, pi: np.ndarray, q: np.ndarray) -> float:
    if config.eta_mode == "constant":
        return config.eta
    if config.eta_mode == "adaptive":
        return adaptive_eta(config.map, pi, q, config.eta)
    return qlearning_equiv_eta(q, pi.shape[1], config.eta)


def _run(mdp: TabularMdp, kind: str, pi_b: np.ndarray, sigma_b, config: AlgoConfig, rng) -> RunResult:
    S, A = mdp.num_states, mdp.num_actions
    if pi_b.min() <= 0:
        raise ExplorationFailure("behavior policy gives zero probability to some action")
    if rng is None:
        rng = make_rng(config.seed, config.run_id)
    gamma, alpha = mdp.gamma, config.alpha
    r, p_sa = mdp.r_vec, mdp.p_sa
    pi = uniform_policy(S, A) if config.pi0 is None else config.pi0.copy()
    if kind == "batch-q":
        # no actor; records carry the greedy policy of the previous critic
        pi = greedy_policy(np.zeros(S * A), A)
    q = np.zeros(S * A)
    if kind == "approximate":
        sampler = MixedSampler(mdp, pi_b)
        composed = _ComposedWeights(mdp, pi_b)
        sigma_floor = np.inf
    else:
        sampler = OffPolicySampler(mdp, pi_b)
        sigma_floor = float(sigma_b.min())
    state = int(config.s0)
    samples = 0
    trace = []
    theta = 1.0 if kind == "batch-q" else config.theta

    for k in range(config.K):
        qm = q.reshape(S, A)
        if kind == "batch-q":
            eta_k = np.nan
            pi_next = greedy_policy(q, A)
            v_next = qm.max(axis=1)
            sigma = sigma_b
        else:
            eta_k = _choose_eta(config, pi, qm)
            pi_next = pmd_step(config.map, pi, qm, eta_k)
            v_next = state_values(pi_next, qm)
            if kind == "approximate":
                sigma = composed(pi_next)
                sigma_floor = min(sigma_floor, float(sigma.min()))
            else:
                sigma = sigma_b
        increment = sigma * (r + gamma * (p_sa @ v_next) - q)
        if config.noise_free:
            b = 0
            delta_bar = increment
            omega_bar = np.zeros_like(q)
        else:
            b = config.batch_size(k)
            if kind == "approximate":
                batch, state = sampler.sample(pi_next, state, b, rng)
                target = q[batch.s_next * A + batch.a_next]
            else:
                batch, state = sampler.sample(state, b, rng)
                target = v_next[batch.s_next]
            idx = batch.s * A + batch.a
            td = batch.r + gamma * target - q[idx]
            delta_bar = np.bincount(idx, weights=_td_weights(b, theta) * td, minlength=S * A)
            omega_bar = delta_bar - increment
        trace.append(IterationRecord(k, pi, q, eta_k, b, delta_bar, omega_bar, samples, sigma))
        q = q + alpha * delta_bar
        pi = pi_next
        samples += b

    trace.append(IterationRecord(config.K, pi, q, np.nan, 0, None, None, samples, None))
    hat = int(rng.integers(0, config.K + 1))
    if not np.isfinite(sigma_floor):
        sigma_floor = float(composed(pi).min())
    return RunResult(kind, trace, pi, trace[hat].pi, hat, sigma_floor, alpha)


def run_expected_td_pmd(mdp: TabularMdp, behavior: BehaviorModel, config: AlgoConfig, rng=None) -> RunResult:
    return _run(mdp, "expected", behavior.pi_b, behavior.sigma, config, rng)


def run_approximate_td_pmd(mdp: TabularMdp, pi_b: np.ndarray, config: AlgoConfig, rng=None) -> RunResult:
    return _run(mdp, "approximate", np.asarray(pi_b, dtype=float), None, config, rng)


def run_batch_q_learning(mdp: TabularMdp, behavior: BehaviorModel, config: AlgoConfig, rng=None) -> RunResult:
    return _run(mdp, "batch-q", behavior.pi_b, behavior.sigma, config, rng)


def run_algorithm(mdp: TabularMdp, behavior: BehaviorModel, config: AlgoConfig, rng=None) -> RunResult:
    """Dispatch on ``config.algo_kind``."""
    if config.algo_kind == "expected":
        return run_expected_td_pmd(mdp, behavior, config, rng)
    if config.algo_kind == "approximate":
        return run_approximate_td_pmd(mdp, behavior.pi_b, config, rng)
    return run_batch_q_learning(mdp, behavior, config, rng)
