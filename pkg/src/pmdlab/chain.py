"""Markov-chain analytics and seeded trajectory samplers."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numba import njit
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, shortest_path

from .errors import ExplorationFailure, NotErgodic, ValidationError
from .mdp import TabularMdp, check_policy, transition_matrix_s
from .rng import categorical_table

KAPPA_EPS = 1e-6
KAPPA_INFLATE = 1.05
# TV distances below this are indistinguishable from accumulated rounding in P^t.
TV_NOISE_FLOOR = 1e-13


def d_tv(p: np.ndarray, q: np.ndarray) -> float:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValidationError("d_tv: distributions must have equal length")
    return 0.5 * float(np.sum(np.abs(p - q)))


def check_ergodicity(p_s: np.ndarray) -> bool:
    """Irreducible and aperiodic, decided on the positive-entry digraph."""
    p_s = np.asarray(p_s, dtype=float)
    n = p_s.shape[0]
    graph = csr_matrix(p_s > 0)
    n_comp, _ = connected_components(graph, directed=True, connection="strong")
    if n_comp != 1:
        return False
    # period = gcd over edges (u, v) of level(u) + 1 - level(v), levels from BFS
    level = shortest_path(graph, unweighted=True, indices=0).astype(np.int64)
    u, v = np.nonzero(p_s > 0)
    period = int(np.gcd.reduce(np.abs(level[u] + 1 - level[v])))
    return n == 1 or period == 1


def stationary_dist(p_s: np.ndarray, check: bool = True) -> np.ndarray:
    """Left fixed vector of an ergodic stochastic matrix.

    A direct solve of the balance equations gives the starting point; power
    iteration then polishes it until ``||nu P - nu||_1 <= 1e-12``.
    """
    p_s = np.asarray(p_s, dtype=float)
    if check and not check_ergodicity(p_s):
        raise NotErgodic("transition matrix is not irreducible and aperiodic")
    n = p_s.shape[0]
    a = p_s.T - np.eye(n)
    a[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    nu = np.linalg.solve(a, b)
    nu = np.maximum(nu, 0.0)
    nu /= nu.sum()
    for _ in range(1000):
        nxt = nu @ p_s
        nxt /= nxt.sum()
        done = np.sum(np.abs(nxt - nu)) <= 1e-12
        nu = nxt
        if done:
            break
    return nu


@dataclass(frozen=True)
class MixingEstimate:
    m: float
    kappa: float
    horizon: int
    tv: np.ndarray  # e(t) for t = 0..horizon, as measured

    def envelope(self, t) -> np.ndarray:
        return self.m * self.kappa ** np.asarray(t, dtype=float)

    @property
    def lag(self) -> int:
        """``ceil(log_kappa(1/m))``: steps until the envelope drops below one."""
        return int(np.ceil(np.log(1.0 / self.m) / np.log(self.kappa) - 1e-12))

    @property
    def perturbation_constant(self) -> float:
        """Sensitivity of the stationary law to kernel perturbations."""
        return self.lag + 1.0 / (1.0 - self.kappa)


def tv_profile(p_s: np.ndarray, nu: np.ndarray, t_max: int) -> np.ndarray:
    """``e(t) = max_s d_TV(P^t(s, .), nu)`` for ``t = 0..t_max``."""
    n = p_s.shape[0]
    out = np.empty(t_max + 1)
    m = np.eye(n)
    for t in range(t_max + 1):
        out[t] = 0.5 * np.max(np.sum(np.abs(m - nu[None, :]), axis=1))
        m = m @ p_s
    return out


def estimate_mixing(p_s: np.ndarray, nu: np.ndarray | None = None, t_max: int = 200) -> MixingEstimate:
    """Fit a certified geometric envelope ``e(t) <= m * kappa^t`` on ``t <= t_max``.

    ``kappa`` is 1.05 times the largest per-step decay rate ``e(t)^(1/t)`` over the
    second half of the horizon that is still above the rounding floor, clamped to
    ``(1e-6, 1 - 1e-6)``; ``m`` is the smallest multiplier (at least one) that
    makes the envelope hold at every measured ``t``.
    """
    p_s = np.asarray(p_s, dtype=float)
    if t_max < 2:
        raise ValidationError("t_max: must be at least 2")
    if not check_ergodicity(p_s):
        raise NotErgodic("transition matrix is not irreducible and aperiodic")
    if nu is None:
        nu = stationary_dist(p_s, check=False)
    raw = tv_profile(p_s, np.asarray(nu, dtype=float), t_max)
    e = np.where(raw < TV_NOISE_FLOOR, 0.0, raw)
    e[0] = raw[0]
    positive = np.flatnonzero(e[1:] > 0) + 1
    if positive.size == 0:
        kappa = KAPPA_EPS
    else:
        t_eff = int(positive[-1])
        window = np.arange(max(1, (t_eff + 1) // 2), t_eff + 1)
        rate = np.max(e[window] ** (1.0 / window))
        kappa = float(np.clip(KAPPA_INFLATE * rate, KAPPA_EPS, 1.0 - KAPPA_EPS))
    t = np.arange(t_max + 1)
    with np.errstate(over="ignore", invalid="ignore"):
        ratios = np.where(e > 0, e / kappa**t, 0.0)
    m = float(max(1.0, np.max(ratios)))
    if not np.all(raw <= m * kappa**t * (1 + 1e-12) + TV_NOISE_FLOOR):
        raise RuntimeError("mixing envelope failed certification")
    return MixingEstimate(m=m, kappa=kappa, horizon=t_max, tv=raw)


# -- behavior policy ----------------------------------------------------

@dataclass(frozen=True, eq=False)
class BehaviorModel:
    pi_b: np.ndarray
    nu: np.ndarray
    sigma: np.ndarray  # flat, state-major: nu(s) * pi_b(a|s)
    p_s: np.ndarray

    @property
    def sigma_floor(self) -> float:
        return float(self.sigma.min())

    @property
    def pi_floor(self) -> float:
        return float(self.pi_b.min())

    @property
    def nu_floor(self) -> float:
        return float(self.nu.min())


def behavior_model(mdp: TabularMdp, pi_b: np.ndarray) -> BehaviorModel:
    pi_b = check_policy(pi_b, mdp.num_states, mdp.num_actions)
    if pi_b.min() <= 0:
        raise ExplorationFailure("behavior policy gives zero probability to some action")
    p_s = transition_matrix_s(mdp, pi_b)
    if not check_ergodicity(p_s):
        raise NotErgodic("behavior chain is not irreducible and aperiodic")
    nu = stationary_dist(p_s, check=False)
    sigma = (nu[:, None] * pi_b).reshape(-1)
    return BehaviorModel(pi_b=pi_b, nu=nu, sigma=sigma, p_s=p_s)


def composed_weights(mdp: TabularMdp, pi_b: np.ndarray, pi: np.ndarray, check: bool = True) -> np.ndarray:
    """``sigma(s,a) = nu(s) pi_b(a|s)`` with ``nu`` stationary for behavior-then-target steps."""
    p = transition_matrix_s(mdp, pi_b) @ transition_matrix_s(mdp, pi)
    if check and not check_ergodicity(p):
        raise NotErgodic("composed behavior/target chain is not irreducible and aperiodic")
    nu = stationary_dist(p, check=False)
    return (nu[:, None] * pi_b).reshape(-1)


# -- samplers -------------------------------------------------------------

class OffPolicyTuple(NamedTuple):
    s: int
    a: int
    r: float
    s_next: int


class MixedTuple(NamedTuple):
    s: int
    a: int
    r: float
    s_next: int
    a_next: int


@dataclass(frozen=True, eq=False)
class Batch:
    """Column-wise batch of transitions; ``a_next`` is set for mixed sampling."""

    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s_next: np.ndarray
    a_next: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.s)

    def tuples(self) -> list:
        if self.a_next is None:
            return [OffPolicyTuple(*x) for x in zip(self.s.tolist(), self.a.tolist(), self.r.tolist(), self.s_next.tolist())]
        return [
            MixedTuple(*x)
            for x in zip(self.s.tolist(), self.a.tolist(), self.r.tolist(), self.s_next.tolist(), self.a_next.tolist())
        ]


@njit(cache=True)
def _draw(cum, u):
    n = cum.shape[0]
    for j in range(n):
        if u < cum[j]:
            return j
    return n - 1


@njit(cache=True)
def _walk_offpolicy(cum_pi, cum_p, num_actions, s0, u, out_s, out_a, out_sn):
    s = s0
    for t in range(u.shape[0]):
        a = _draw(cum_pi[s], u[t, 0])
        sn = _draw(cum_p[s * num_actions + a], u[t, 1])
        out_s[t] = s
        out_a[t] = a
        out_sn[t] = sn
        s = sn
    return s


@njit(cache=True)
def _walk_mixed(cum_pi_b, cum_pi, cum_p, num_actions, s0, u, out_s, out_a, out_sn, out_an):
    s = s0
    for t in range(u.shape[0]):
        a = _draw(cum_pi_b[s], u[t, 0])
        sn = _draw(cum_p[s * num_actions + a], u[t, 1])
        an = _draw(cum_pi[sn], u[t, 2])
        out_s[t] = s
        out_a[t] = a
        out_sn[t] = sn
        out_an[t] = an
        s = _draw(cum_p[sn * num_actions + an], u[t, 3])
    return s


class OffPolicySampler:
    """Behavior-policy walk with precomputed inverse-CDF tables.

    Each step consumes exactly two uniforms (action, next state) from the stream.
    """

    def __init__(self, mdp: TabularMdp, pi_b: np.ndarray):
        self.mdp = mdp
        self.cum_pi = categorical_table(pi_b)
        self.cum_p = categorical_table(mdp.p_sa)

    def sample(self, s0: int, B: int, rng: np.random.Generator) -> tuple[Batch, int]:
        if B < 1:
            raise ValidationError("batch size must be at least 1")
        u = rng.random((B, 2))
        s = np.empty(B, dtype=np.int64)
        a = np.empty(B, dtype=np.int64)
        sn = np.empty(B, dtype=np.int64)
        last = _walk_offpolicy(self.cum_pi, self.cum_p, self.mdp.num_actions, int(s0), u, s, a, sn)
        return Batch(s, a, self.mdp.rewards[s, a], sn), int(last)


class MixedSampler:
    """Alternating behavior/target walk; four uniforms per recorded tuple."""

    def __init__(self, mdp: TabularMdp, pi_b: np.ndarray):
        self.mdp = mdp
        self.cum_pi_b = categorical_table(pi_b)
        self.cum_p = categorical_table(mdp.p_sa)

    def sample(self, pi_target: np.ndarray, s0: int, B: int, rng: np.random.Generator) -> tuple[Batch, int]:
        if B < 1:
            raise ValidationError("batch size must be at least 1")
        cum_pi = categorical_table(pi_target)
        u = rng.random((B, 4))
        s = np.empty(B, dtype=np.int64)
        a = np.empty(B, dtype=np.int64)
        sn = np.empty(B, dtype=np.int64)
        an = np.empty(B, dtype=np.int64)
        last = _walk_mixed(self.cum_pi_b, cum_pi, self.cum_p, self.mdp.num_actions, int(s0), u, s, a, sn, an)
        return Batch(s, a, self.mdp.rewards[s, a], sn, an), int(last)


def sample_offpolicy(mdp: TabularMdp, pi_b: np.ndarray, s0: int, B: int, rng: np.random.Generator):
    """``B`` tuples ``(s, a, r, s')`` under ``pi_b`` starting at ``s0``; also returns ``s_B``."""
    return OffPolicySampler(mdp, pi_b).sample(s0, B, rng)


def sample_mixed(mdp: TabularMdp, pi_b: np.ndarray, pi_target: np.ndarray, s0: int, B: int, rng: np.random.Generator):
    """``B`` tuples ``(s, a, r, s', a')``: behavior action, then a target action at ``s'``."""
    return MixedSampler(mdp, pi_b).sample(pi_target, s0, B, rng)
