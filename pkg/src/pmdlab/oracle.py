"""Exact solvers used as ground truth by the tests and bound checks."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .mdp import TabularMdp, bellman_q, greedy_policy, optimal_bellman_q, policy_value
from .mirror import MirrorMap, pmd_step


@dataclass
class OptimalSolution:
    q_star: np.ndarray
    v_star: np.ndarray
    pi_star: np.ndarray
    iterations: int
    residual: float
    iterates: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "q_star": self.q_star.tolist(),
            "v_star": self.v_star.tolist(),
            "pi_star": self.pi_star.tolist(),
            "residual": self.residual,
            "iterations": self.iterations,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def value_iteration(mdp: TabularMdp, tol: float = 1e-10, record: bool = False) -> OptimalSolution:
    """Iterate ``Q <- F Q`` from zero until ``||Q - Q*|| <= tol`` is guaranteed."""
    if not tol > 0:
        raise ValidationError("tol: must be positive")
    g = mdp.gamma
    stop = tol * (1.0 - g) / (2.0 * g) if g > 0 else np.inf
    q = np.zeros(mdp.num_states * mdp.num_actions)
    iterates = [q] if record else []
    it = 0
    while True:
        fq = optimal_bellman_q(mdp, q)
        it += 1
        step = np.max(np.abs(fq - q))
        q = fq
        if record:
            iterates.append(q)
        if step <= stop:
            break
    residual = float(np.max(np.abs(optimal_bellman_q(mdp, q) - q)))
    qm = q.reshape(mdp.num_states, mdp.num_actions)
    return OptimalSolution(
        q_star=q,
        v_star=qm.max(axis=1),
        pi_star=greedy_policy(q, mdp.num_actions),
        iterations=it,
        residual=residual,
        iterates=iterates,
    )


def exact_pmd(mdp: TabularMdp, mmap: MirrorMap, eta: float, K: int, pi0: np.ndarray):
    """PMD driven by the true critic; returns ``[(pi_k, Q^{pi_k}) for k = 0..K]``."""
    pi = np.asarray(pi0, dtype=float)
    out = []
    for k in range(K + 1):
        _, q = policy_value(mdp, pi)
        out.append((pi, q))
        if k < K:
            pi = pmd_step(mmap, pi, q.reshape(pi.shape), eta)
    return out


def exact_td_pmd(mdp: TabularMdp, mmap: MirrorMap, eta: float, K: int, pi0: np.ndarray):
    """PMD with a one-step Bellman critic ``Q^{k+1} = F^{pi_{k+1}} Q^k``, ``Q^0 = 0``.

    Returns ``[(pi_k, Q^k) for k = 0..K]``.
    """
    pi = np.asarray(pi0, dtype=float)
    q = np.zeros(mdp.num_states * mdp.num_actions)
    out = [(pi, q)]
    for _ in range(K):
        pi = pmd_step(mmap, pi, q.reshape(pi.shape), eta)
        q = bellman_q(mdp, pi, q)
        out.append((pi, q))
    return out
