"""Finite discounted MDPs, Bellman operators and closed-form policy evaluation.

Layout convention used throughout the package: a Q vector has length
``|S|*|A|`` and is ordered first by state, then by action, so entry
``s*|A| + a`` holds ``Q(s, a)``.  Policies are ``(|S|, |A|)`` row-stochastic
arrays.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

PROB_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class TabularMdp:
    transitions: np.ndarray  # (S, A, S'), rows sum to one
    rewards: np.ndarray  # (S, A), values in [0, 1]
    gamma: float

    def __post_init__(self):
        p = np.array(self.transitions, dtype=float)
        r = np.array(self.rewards, dtype=float)
        if p.ndim != 3 or p.shape[0] != p.shape[2] or p.shape[0] < 1 or p.shape[1] < 1:
            raise ValidationError(f"transitions: expected shape (S, A, S), got {p.shape}")
        if r.shape != p.shape[:2]:
            raise ValidationError(f"rewards: expected shape {p.shape[:2]}, got {r.shape}")
        if not (np.all(np.isfinite(p)) and np.all(p >= 0)):
            raise ValidationError("transitions: entries must be finite and nonnegative")
        if np.max(np.abs(p.sum(axis=2) - 1.0)) > PROB_TOL:
            raise ValidationError("transitions: every (s, a) row must sum to 1")
        if not (np.all(np.isfinite(r)) and np.all(r >= 0) and np.all(r <= 1)):
            raise ValidationError("rewards: entries must lie in [0, 1]")
        g = float(self.gamma)
        if not 0.0 <= g < 1.0:
            raise ValidationError(f"gamma: must lie in [0, 1), got {g}")
        p.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "transitions", p)
        object.__setattr__(self, "rewards", r)
        object.__setattr__(self, "gamma", g)

    @property
    def num_states(self) -> int:
        return self.transitions.shape[0]

    @property
    def num_actions(self) -> int:
        return self.transitions.shape[1]

    @property
    def p_sa(self) -> np.ndarray:
        """Kernel as a ``(|S||A|, |S|)`` matrix."""
        return self.transitions.reshape(-1, self.num_states)

    @property
    def r_vec(self) -> np.ndarray:
        return self.rewards.reshape(-1)

    @property
    def v_max(self) -> float:
        return 1.0 / (1.0 - self.gamma)

    # -- serialization -------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "num_states": self.num_states,
            "num_actions": self.num_actions,
            "gamma": self.gamma,
            "transitions": self.transitions.tolist(),
            "rewards": self.rewards.tolist(),
        }

    def to_json(self) -> str:
        # json writes floats with repr, the shortest string that round-trips
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "TabularMdp":
        if not isinstance(d, dict):
            raise ValidationError("mdp: expected a JSON object")
        expected = {"num_states", "num_actions", "gamma", "transitions", "rewards"}
        for key in sorted(expected):
            if key not in d:
                raise ValidationError(f"{key}: missing field")
        extra = sorted(set(d) - expected)
        if extra:
            raise ValidationError(f"{extra[0]}: unknown field")
        try:
            p = np.array(d["transitions"], dtype=float)
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"transitions: not a numeric array ({exc})") from None
        try:
            r = np.array(d["rewards"], dtype=float)
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"rewards: not a numeric array ({exc})") from None
        if not isinstance(d["gamma"], (int, float)) or isinstance(d["gamma"], bool):
            raise ValidationError("gamma: must be a number")
        mdp = cls(p, r, d["gamma"])
        if mdp.num_states != d["num_states"]:
            raise ValidationError("num_states: does not match transitions shape")
        if mdp.num_actions != d["num_actions"]:
            raise ValidationError("num_actions: does not match transitions shape")
        return mdp

    @classmethod
    def from_json(cls, text: str) -> "TabularMdp":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"mdp: invalid JSON ({exc})") from None
        return cls.from_dict(d)


# -- policies -----------------------------------------------------------

def check_policy(pi: np.ndarray, num_states: int, num_actions: int) -> np.ndarray:
    pi = np.asarray(pi, dtype=float)
    if pi.shape != (num_states, num_actions):
        raise ValidationError(f"policy: expected shape {(num_states, num_actions)}, got {pi.shape}")
    if np.any(pi < 0) or np.max(np.abs(pi.sum(axis=1) - 1.0)) > PROB_TOL:
        raise ValidationError("policy: rows must be nonnegative and sum to 1")
    return pi


def uniform_policy(num_states: int, num_actions: int) -> np.ndarray:
    return np.full((num_states, num_actions), 1.0 / num_actions)


def greedy_policy(q: np.ndarray, num_actions: int) -> np.ndarray:
    """Deterministic greedy policy; ties go to the lowest action index."""
    qm = np.asarray(q, dtype=float).reshape(-1, num_actions)
    pi = np.zeros_like(qm)
    pi[np.arange(qm.shape[0]), np.argmax(qm, axis=1)] = 1.0
    return pi


def state_values(pi: np.ndarray, q: np.ndarray) -> np.ndarray:
    """``V(s) = <pi(.|s), Q(s,.)>``."""
    return np.sum(pi * np.asarray(q).reshape(pi.shape), axis=1)


# -- transition matrices ------------------------------------------------

def transition_matrix_s(mdp: TabularMdp, pi: np.ndarray) -> np.ndarray:
    """State kernel ``P_S^pi(s, s') = sum_a pi(a|s) P(s'|s,a)``."""
    return np.einsum("sa,sat->st", pi, mdp.transitions)


def transition_matrix_sa(mdp: TabularMdp, pi: np.ndarray) -> np.ndarray:
    """State-action kernel ``P((s,a),(s',a')) = P(s'|s,a) pi(a'|s')``."""
    n = mdp.num_states * mdp.num_actions
    return (mdp.p_sa[:, :, None] * pi[None, :, :]).reshape(n, n)


def compose_s(mdp: TabularMdp, pi_b: np.ndarray, pi: np.ndarray) -> np.ndarray:
    """Kernel of one behavior step followed by one target step."""
    return transition_matrix_s(mdp, pi_b) @ transition_matrix_s(mdp, pi)


# -- evaluation and operators ------------------------------------------

def policy_value(mdp: TabularMdp, pi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exact ``(V^pi, Q^pi)`` by a dense linear solve."""
    p_s = transition_matrix_s(mdp, pi)
    r_pi = np.sum(pi * mdp.rewards, axis=1)
    v = np.linalg.solve(np.eye(mdp.num_states) - mdp.gamma * p_s, r_pi)
    q = mdp.r_vec + mdp.gamma * (mdp.p_sa @ v)
    return v, q


def bellman_q(mdp: TabularMdp, pi: np.ndarray, q: np.ndarray) -> np.ndarray:
    return mdp.r_vec + mdp.gamma * (mdp.p_sa @ state_values(pi, q))


def optimal_bellman_q(mdp: TabularMdp, q: np.ndarray) -> np.ndarray:
    qm = np.asarray(q).reshape(mdp.num_states, mdp.num_actions)
    return mdp.r_vec + mdp.gamma * (mdp.p_sa @ qm.max(axis=1))


def bellman_v(mdp: TabularMdp, pi: np.ndarray, v: np.ndarray) -> np.ndarray:
    """State-value operator ``T^pi V = r^pi + gamma P_S^pi V``."""
    r_pi = np.sum(pi * mdp.rewards, axis=1)
    return r_pi + mdp.gamma * (transition_matrix_s(mdp, pi) @ v)


def visitation(mdp: TabularMdp, pi: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """Discounted state visitation ``(1-gamma) mu^T (I - gamma P_S^pi)^{-1}``."""
    a = np.eye(mdp.num_states) - mdp.gamma * transition_matrix_s(mdp, pi)
    return (1.0 - mdp.gamma) * np.linalg.solve(a.T, np.asarray(mu, dtype=float))


def perf_diff_check(mdp: TabularMdp, pi: np.ndarray, v: np.ndarray, mu: np.ndarray) -> float:
    """Absolute gap between the two sides of the performance difference identity."""
    v = np.asarray(v, dtype=float)
    v_pi, _ = policy_value(mdp, pi)
    lhs = float(mu @ (v_pi - v))
    d = visitation(mdp, pi, mu)
    rhs = float(d @ (bellman_v(mdp, pi, v) - v)) / (1.0 - mdp.gamma)
    return abs(lhs - rhs)
