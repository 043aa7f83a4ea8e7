"""Bound calculators, sample-size schedules and the pathwise bias decomposition.

All bounds here are evaluated with *estimated* mixing constants (see
``chain.estimate_mixing``); they are meant for inequality checks against
measured quantities, never for equality checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .algo import AlgoConfig, RunResult, run_algorithm, weighted_bellman
from .chain import (
    BehaviorModel,
    MixingEstimate,
    composed_weights,
    d_tv,
    estimate_mixing,
    stationary_dist,
)
from .errors import ExplorationFailure, ValidationError
from .mdp import (
    TabularMdp,
    bellman_q,
    compose_s,
    greedy_policy,
    optimal_bellman_q,
    policy_value,
    state_values,
    transition_matrix_s,
    transition_matrix_sa,
)
from .mirror import MirrorMap, bregman, pmd_step, reference_norm
from .oracle import exact_pmd, value_iteration

BOUND_KINDS = ("T1", "T2", "T3", "T4", "Cor1")


@dataclass(frozen=True)
class BoundInputs:
    gamma: float
    alpha: float
    lam: float
    card_A: int
    card_S: int
    sigma_floor: float
    mixing: MixingEstimate
    d0: float  # max_s D(pi*(.|s) || pi_0(.|s))

    def __post_init__(self):
        if not 0 <= self.gamma < 1:
            raise ValidationError("gamma: must lie in [0, 1)")
        if not 0 < self.alpha <= 1:
            raise ValidationError("alpha: must lie in (0, 1]")
        if not self.sigma_floor > 0:
            raise ExplorationFailure("sigma floor must be positive")
        if not 0 < self.kappa < 1:
            raise ValidationError("kappa: must lie in (0, 1)")
        if not self.m > 0 or not self.lam > 0:
            raise ValidationError("m and lam must be positive")
        if self.card_A < 1 or self.card_S < 1:
            raise ValidationError("card_S and card_A must be positive")

    @property
    def m(self) -> float:
        return self.mixing.m

    @property
    def kappa(self) -> float:
        return self.mixing.kappa

    @property
    def L(self) -> float:
        """Drift constant of the composed stationary weights."""
        return self.card_A * self.mixing.perturbation_constant

    @property
    def rho(self) -> float:
        """Contraction factor ``1 - (1-gamma) alpha sigma_floor`` of the weighted operator."""
        return 1.0 - (1.0 - self.gamma) * self.alpha * self.sigma_floor

    @property
    def noise_scale(self) -> float:
        """Per-sample noise constant: ``E||noise|| <= noise_scale / sqrt(B)``."""
        g = self.gamma
        return math.sqrt(4.0 * self.card_S * self.card_A / (1 - g) ** 2 * (1.0 + self.m / (1.0 - self.kappa)))


def _batch_list(batch_schedule, n: int) -> np.ndarray:
    if callable(batch_schedule):
        return np.array([batch_schedule(k) for k in range(n)], dtype=float)
    if np.ndim(batch_schedule) == 0:
        return np.full(n, float(batch_schedule))
    b = np.asarray(batch_schedule, dtype=float)
    if b.size < n:
        raise ValidationError(f"batch_schedule: needs {n} entries, got {b.size}")
    return b[:n]


# -- elementary pieces ----------------------------------------------------

def psi_bound(B: int, theta: float, m: float, kappa: float, gamma: float) -> float:
    """Bias of the geometrically weighted batch average under geometric mixing."""
    if not 0 < kappa < 1:
        raise ValidationError("kappa: must lie in (0, 1)")
    if not 0 <= theta <= 1:
        raise ValidationError("theta: must lie in [0, 1]")
    if B < 1:
        raise ValidationError("B: must be at least 1")
    scale = m / (1.0 - gamma)
    if theta == 1:
        return scale / (B * (1.0 - kappa))
    if theta < kappa:
        return scale * kappa**B / (kappa - theta)
    if theta == kappa:
        return scale * B * theta ** (B - 1)
    return scale * theta**B / (theta - kappa)


def xi(t: int, alpha: float, sigma_floor: float, gamma: float, batch_schedule) -> float:
    """``sum_{k<t} rho^(t-1-k) / sqrt(B_k)`` with ``rho = 1 - (1-gamma) alpha sigma_floor``."""
    if t < 0:
        raise ValidationError("t: must be nonnegative")
    if t == 0:
        return 0.0
    rho = 1.0 - (1.0 - gamma) * alpha * sigma_floor
    b = _batch_list(batch_schedule, t)
    powers = rho ** np.arange(t - 1, -1, -1, dtype=float)
    return float(np.sum(powers / np.sqrt(b)))


def _policy_coef(which: str, inputs: BoundInputs) -> float:
    return 6.0 if which == "T1" else 6.0 + 4.0 * inputs.L


def theorem_optimal_eta(which: str, inputs: BoundInputs, K: int) -> float:
    """Constant step minimizing the constant-step bound (T1 or T3)."""
    if which not in ("T1", "T3"):
        raise ValidationError("theorem-optimal step exists only for T1 and T3")
    if not inputs.d0 > 0:
        raise ValidationError("d0: optimal step needs a positive initial divergence")
    i = inputs
    c = _policy_coef(which, i)
    return math.sqrt(i.alpha * i.lam * i.sigma_floor**2 * (1 - i.gamma) ** 4 * i.d0 / (c * i.card_A**2 * (K + 1)))


def theorem_bound(
    which: str,
    inputs: BoundInputs,
    K: int,
    batch_schedule,
    eta: float | None = None,
    theta: float = 1.0,
) -> float:
    """Right-hand side of the selected convergence statement.

    ``T1``/``T3``: expected suboptimality of a uniformly drawn iterate under a
    constant step (constant batch, weights ``theta``); with ``eta=None`` the
    optimized closed form is returned.  ``T2``/``T4``: expected last-iterate
    policy error under the adaptive step with base ``eta``.  ``Cor1``: expected
    critic error of batch Q-learning.
    """
    if which not in BOUND_KINDS:
        raise ValidationError(f"which: expected one of {BOUND_KINDS}")
    if K < 0:
        raise ValidationError("K: must be nonnegative")
    i = inputs
    g, a, sf, A = i.gamma, i.alpha, i.sigma_floor, i.card_A
    if which in ("T1", "T3"):
        B = int(_batch_list(batch_schedule, 1)[0])
        c = _policy_coef(which, i)
        psi = psi_bound(B, theta, i.m, i.kappa, g)
        noise = 2.0 * psi / (sf * (1 - g) ** 2)
        warm = 3.0 / ((K + 1) * a * sf * (1 - g) ** 3)
        if eta is None:
            policy = 2.0 / math.sqrt(K + 1) * math.sqrt(c * A**2 * i.d0 / (a * i.lam * sf**2 * (1 - g) ** 6))
            return warm + policy + noise
        if not eta > 0:
            raise ValidationError("eta: must be positive")
        return warm + i.d0 / ((K + 1) * eta * (1 - g)) + c * A**2 * eta / (a * sf**2 * i.lam * (1 - g) ** 5) + noise
    rho = i.rho
    if which == "Cor1":
        return rho**K / (1 - g) + a * i.noise_scale * xi(K, a, sf, g, batch_schedule)
    if K < 1:
        raise ValidationError("K: adaptive bounds need K >= 1")
    if eta is None or not eta > 0:
        raise ValidationError("eta: adaptive bounds need a positive base step")
    b_last = _batch_list(batch_schedule, K)[K - 1]
    noise = i.noise_scale / (sf * (1 - g)) * (
        xi(K, a, sf, g, batch_schedule) + xi(K - 1, a, sf, g, batch_schedule) + b_last**-0.5
    )
    return 2.0 / (a * sf * (1 - g) ** 2) * rho ** (K - 1) + 2.0 * g / (a * eta * (1 - g) ** 2 * sf**2) + noise


# -- schedules ------------------------------------------------------------

@dataclass(frozen=True)
class Schedule:
    kind: str
    eps: float
    K: int
    eta: float
    batch_schedule: int | list  # constant B, or B_k for the K executed iterations
    sample_bound: float  # closed-form upper bound on the total

    @property
    def total_samples(self) -> int:
        if isinstance(self.batch_schedule, int):
            return self.K * self.batch_schedule
        return int(sum(self.batch_schedule))


def remark_schedules(target_eps: float, inputs: BoundInputs, kind: str = "adaptive", theta: float | None = None) -> Schedule:
    """Iteration count, step and batch sizes that make the selected bound at most ``eps``.

    ``adaptive``: last-iterate policy error under the adaptive step, geometric
    batches growing toward the end.  ``batch-q``: critic error of batch
    Q-learning.  ``constant``: constant step with a constant batch (needs
    ``0 < theta < kappa``).
    """
    eps = float(target_eps)
    if not eps > 0:
        raise ValidationError("target_eps: must be positive")
    i = inputs
    g, a, sf = i.gamma, i.alpha, i.sigma_floor
    rho = i.rho
    log_inv_rho = -math.log(rho)
    damp = (1.0 - math.sqrt(rho)) ** 2
    if kind == "adaptive":
        K = max(1, math.ceil(math.log(max(6.0 / (a * sf * (1 - g) ** 2 * eps), 1.0)) / log_inv_rho + 1))
        eta = 6.0 * g / (a * (1 - g) ** 2 * sf**2 * eps) if g > 0 else 1.0
        lead = 81.0 / (sf**2 * (1 - g) ** 2) * i.noise_scale**2 / damp / eps**2
        sizes = [math.ceil(lead * rho ** (K - k - 2)) for k in range(K)]
        bound = lead * rho**-2 / ((1 - g) * a * sf)
        return Schedule(kind, eps, K, eta, sizes, bound)
    if kind == "batch-q":
        K = max(1, math.ceil(math.log(max(2.0 / (eps * (1 - g)), 1.0)) / log_inv_rho))
        lead = 16.0 * a**2 * i.card_S * i.card_A / (eps**2 * (1 - g) ** 2) * (1 + i.m / (1 - i.kappa)) / damp
        sizes = [math.ceil(lead * rho ** (K - k - 1)) for k in range(K)]
        bound = lead / ((1 - g) * a * sf)
        return Schedule(kind, eps, K, math.inf, sizes, bound)
    if kind == "constant":
        if theta is None or not 0 < theta < i.kappa:
            raise ValidationError("theta: constant-step schedule needs 0 < theta < kappa")
        K = math.ceil(max(
            9.0 / (a * sf * (1 - g) ** 3 * eps),
            216.0 * i.card_A**2 * i.d0 / (a * i.lam * sf**2 * (1 - g) ** 6 * eps**2),
        ))
        B = max(1, math.ceil(math.log(6.0 / eps * i.m / (sf * (1 - g) ** 3 * (i.kappa - theta))) / -math.log(i.kappa)))
        eta = theorem_optimal_eta("T1", i, K)
        return Schedule(kind, eps, K, eta, B, float(K * B))
    raise ValidationError("kind: expected 'adaptive', 'batch-q' or 'constant'")


# -- constants --------------------------------------------------------------

def initial_divergence(mmap: MirrorMap, pi_star: np.ndarray, pi0: np.ndarray) -> float:
    return float(np.max(bregman(mmap, pi_star, pi0)))


def extract_constants(
    mdp: TabularMdp,
    behavior: BehaviorModel,
    mmap: MirrorMap,
    pi0: np.ndarray,
    pi_star: np.ndarray,
    alpha: float = 1.0,
    policies: Sequence[np.ndarray] | None = None,
    sigma_floor: float | None = None,
    t_max: int = 200,
    max_chains: int = 25,
) -> BoundInputs:
    """Collect the constants the bounds need.

    Without ``policies`` this describes the behavior chain.  With ``policies``
    (a realized target-policy sequence) it describes the composed
    behavior-then-target chains: the weight floor is the minimum over the
    sequence (or ``sigma_floor`` if given) and the mixing envelope is the
    pointwise worst over up to ``max_chains`` evenly spaced members.
    """
    if behavior.sigma_floor <= 0:
        raise ExplorationFailure("behavior weights have a zero entry")
    d0 = initial_divergence(mmap, pi_star, pi0)
    if policies is None:
        mix = estimate_mixing(behavior.p_s, behavior.nu, t_max)
        sf = behavior.sigma_floor
    else:
        policies = list(policies)
        picks = np.unique(np.linspace(0, len(policies) - 1, min(max_chains, len(policies))).round().astype(int))
        ests = [estimate_mixing(compose_s(mdp, behavior.pi_b, policies[j]), t_max=t_max) for j in picks]
        tv = np.max([e.tv for e in ests], axis=0)
        mix = MixingEstimate(max(e.m for e in ests), max(e.kappa for e in ests), t_max, tv)
        if sigma_floor is None:
            sigma_floor = min(float(composed_weights(mdp, behavior.pi_b, p).min()) for p in policies)
        sf = sigma_floor
    return BoundInputs(
        gamma=mdp.gamma,
        alpha=alpha,
        lam=mmap.lam,
        card_A=mdp.num_actions,
        card_S=mdp.num_states,
        sigma_floor=sf,
        mixing=mix,
        d0=d0,
    )


# -- pathwise bias decomposition -------------------------------------------

@dataclass
class BiasDecomposition:
    lhs: float
    b0: float
    c: np.ndarray
    d: np.ndarray
    e: np.ndarray
    f: np.ndarray

    @property
    def rhs(self) -> float:
        return self.b0 + float(np.sum(self.c + self.d + self.e - self.f))

    @property
    def residual(self) -> float:
        return abs(self.lhs - self.rhs)

    @property
    def relative_residual(self) -> float:
        return self.residual / (1.0 + abs(self.lhs))


def state_selector(s: int, num_states: int, num_actions: int) -> np.ndarray:
    """``J_s = E_s^T E_s``: the diagonal projector onto the rows of state ``s``."""
    e_s = np.zeros((num_actions, num_states * num_actions))
    e_s[:, s * num_actions : (s + 1) * num_actions] = np.eye(num_actions)
    return e_s.T @ e_s


def bias_decomposition(
    run: RunResult,
    mdp: TabularMdp,
    pi_b: np.ndarray | BehaviorModel,
    pi_star: np.ndarray,
    s: int,
    k: int,
) -> BiasDecomposition:
    """Split the critic bias at state ``s`` and iteration ``k`` into its five families.

    The left side is the inner product of ``pi* - pi_k`` with ``Q^{pi_k} - Q^k`` on
    the row of ``s``.  The right side is rebuilt from the iteration matrices
    ``A_j = I - alpha Sigma_j (I - gamma P_SA^{pi_j})`` and the recorded noise; the
    weights ``Sigma_j`` are the behavior weights for expected runs and the
    composed-chain weights of ``pi_j`` for approximate runs.
    """
    if run.kind not in ("expected", "approximate"):
        raise ValidationError(f"bias decomposition needs an actor-critic run, got {run.kind!r}")
    if not 0 <= k < len(run.trace):
        raise ValidationError(f"k={k} is outside the recorded trace of length {len(run.trace)}")
    if isinstance(pi_b, BehaviorModel):
        beh_sigma, pi_b = pi_b.sigma, pi_b.pi_b
    else:
        beh_sigma = None
        pi_b = np.asarray(pi_b, dtype=float)
        if run.kind == "expected":
            raise ValidationError("expected runs need the behavior model for their weights")
    S, A = mdp.num_states, mdp.num_actions
    n = S * A
    alpha, gamma = run.alpha, mdp.gamma
    recs = run.trace[: k + 1]
    pis = [r.pi for r in recs]
    qs = [r.q for r in recs]
    q_pi = [policy_value(mdp, p)[1] for p in pis]
    eye = np.eye(n)
    mats = []
    for p in pis:
        sigma = beh_sigma if run.kind == "expected" else composed_weights(mdp, pi_b, p)
        mats.append(eye - alpha * sigma[:, None] * (eye - gamma * transition_matrix_sa(mdp, p)))
    j_s = state_selector(s, S, A)

    def sel(pol):
        return j_s @ pol.reshape(-1)

    def power(mat, p):
        return np.linalg.matrix_power(mat, p)

    x = [q_pi[j] - qs[j] for j in range(k + 1)]
    lhs = float((pi_star[s] - pis[k][s]) @ (q_pi[k] - qs[k]).reshape(S, A)[s])
    b0 = float(power(mats[0], k).T @ sel(pi_star - pis[0]) @ x[0])
    c, d, e, f = (np.zeros(k) for _ in range(4))
    for j in range(1, k + 1):
        aj = power(mats[j], k - j + 1)
        c[j - 1] = aj.T @ sel(pi_star - pis[j]) @ (q_pi[j] - q_pi[j - 1])
        d[j - 1] = aj.T @ sel(pis[j - 1] - pis[j]) @ x[j - 1]
        e[j - 1] = (aj - power(mats[j - 1], k - j + 1)).T @ sel(pi_star - pis[j - 1]) @ x[j - 1]
        f[j - 1] = power(mats[j], k - j).T @ sel(pi_star - pis[j]) @ (alpha * run.trace[j - 1].omega_bar)
    return BiasDecomposition(lhs, b0, c, d, e, f)


def drift_term_bounds(inputs: BoundInputs, eta: float) -> tuple[float, float]:
    """Caps on the summed magnitudes of the policy-drift and critic-lag families."""
    i = inputs
    g = i.gamma
    base = i.card_A**2 * eta / (i.alpha * i.lam * i.sigma_floor)
    return 2 * g * base / (1 - g) ** 4, base / (1 - g) ** 3


def operator_drift_bound(inputs: BoundInputs, eta: float, mixed: bool = False) -> float:
    """Cap on the summed magnitude of the operator-drift family."""
    i = inputs
    g = i.gamma
    base = i.card_A**2 * eta / (i.alpha * i.lam * i.sigma_floor**2 * (1 - g) ** 4)
    return 2 * (2 * i.L + 1) * base if mixed else 2 * g * base


def noise_moment_bound(inputs: BoundInputs, B: int) -> float:
    return inputs.noise_scale / math.sqrt(B)


# -- property suite -----------------------------------------------------------

_SUITE_TOL = 1e-9


def _random_policy(rng, S: int, A: int) -> np.ndarray:
    return rng.dirichlet(np.ones(A), size=S)


def _entry(name: str, measured: float, bound: float, tol: float = _SUITE_TOL) -> dict:
    measured, bound = float(measured), float(bound)
    ok = bool(np.isfinite(measured) and measured <= bound + tol * max(1.0, abs(bound)))
    return {"lemma": name, "pass": ok, "measured": measured, "bound": bound}


def run_property_suite(
    mdp: TabularMdp,
    behavior: BehaviorModel,
    mmap: MirrorMap,
    seeds: Sequence[int],
    alpha: float = 1.0,
    K: int = 20,
    B: int = 16,
    eta: float = 0.5,
    probes: int = 50,
) -> list[dict]:
    """Check the structural inequalities of every module on one instance.

    Each entry reads ``measured <= bound`` (up to a relative 1e-9).  ``alpha``
    is passed to the stochastic runs without the usual range check so that a
    deliberately broken step size can be shown to trip the critic-range check.
    """
    seeds = list(seeds)
    if not seeds:
        raise ValidationError("seeds: need at least one seed")
    S, A, g = mdp.num_states, mdp.num_actions, mdp.gamma
    n = S * A
    vmax = mdp.v_max
    opt = value_iteration(mdp, tol=1e-12, record=True)
    pi0 = np.full((S, A), 1.0 / A)
    mixing = estimate_mixing(behavior.p_s, behavior.nu)
    acc: dict[str, list[tuple[float, float]]] = {}

    def add(name, measured, bound):
        acc.setdefault(name, []).append((float(measured), float(bound)))

    for seed in seeds:
        rng = np.random.default_rng(seed)
        # operators and values
        for _ in range(probes):
            q1, q2 = rng.normal(size=n) * vmax, rng.normal(size=n) * vmax
            pi, pi2 = _random_policy(rng, S, A), _random_policy(rng, S, A)
            dq = np.max(np.abs(q1 - q2))
            add("bellman-contraction", np.max(np.abs(bellman_q(mdp, pi, q1) - bellman_q(mdp, pi, q2))), g * dq)
            add("optimal-bellman-contraction", np.max(np.abs(optimal_bellman_q(mdp, q1) - optimal_bellman_q(mdp, q2))), g * dq)
            add(
                "weighted-bellman-contraction",
                np.max(np.abs(weighted_bellman(mdp, pi, behavior, 1.0, q1) - weighted_bellman(mdp, pi, behavior, 1.0, q2))),
                (1 - (1 - g) * behavior.sigma_floor) * dq,
            )
            v1, qp1 = policy_value(mdp, pi)
            _, qp2 = policy_value(mdp, pi2)
            add("value-lipschitz", np.max(np.abs(qp1 - qp2)), g * A / (1 - g) ** 2 * np.max(np.abs(pi - pi2)))
            add("value-range", np.max(np.abs(qp1 - vmax / 2)), vmax / 2)
            add("optimal-value-dominance", np.max(v1 - opt.v_star), 1e-10)
            pa, pb = transition_matrix_s(mdp, pi), transition_matrix_s(mdp, pi2)
            add("state-kernel-lipschitz", np.max(np.abs(pa - pb).sum(axis=1)), A * np.max(np.abs(pi - pi2)))
            psa = transition_matrix_sa(mdp, pi) - transition_matrix_sa(mdp, pi2)
            add("state-action-kernel-lipschitz", np.max(np.abs(psa).sum(axis=1)), A * np.max(np.abs(pi - pi2)))
            # mirror step
            step = float(rng.uniform(0.01, 5.0))
            q_rows = qp1.reshape(S, A)
            plus = pmd_step(mmap, pi, q_rows, step)
            p = _random_policy(rng, S, A)
            three = step * np.sum((plus - p) * q_rows, axis=1) - (
                bregman(mmap, plus, pi) + bregman(mmap, p, plus) - bregman(mmap, p, pi)
            )
            add("three-point-descent", -np.min(three), 1e-9)
            add("policy-shift", np.max(np.abs(plus - pi)), step / mmap.lam * np.max(np.abs(q_rows).sum(axis=1)))
            add(
                "strong-convexity",
                np.max(mmap.lam / 2 * reference_norm(mmap, p - pi) ** 2 - bregman(mmap, p, pi)),
                0.0,
            )

        # stationary law under small kernel perturbations
        for _ in range(3):
            pert = 0.95 * behavior.p_s + 0.05 * rng.dirichlet(np.ones(S), size=S)
            gap = np.max(np.abs(behavior.p_s - pert).sum(axis=1))
            add("stationary-perturbation", d_tv(behavior.nu, stationary_dist(pert)), mixing.perturbation_constant * gap + 1e-8)

        # exact solvers
        iters = exact_pmd(mdp, mmap, eta, min(K, 30), pi0)
        for (pa_, qa), (pb_, qb) in zip(iters, iters[1:]):
            add("exact-pmd-improvement", np.max(state_values(pa_, qa) - state_values(pb_, qb)), 1e-10)
        err0 = np.max(np.abs(opt.iterates[0] - opt.q_star))
        for k, qk in enumerate(opt.iterates[: 50]):
            add("value-iteration-decay", np.max(np.abs(qk - opt.q_star)), g**k * err0 + 1e-12)

        # stochastic runs
        for kind in ("expected", "approximate", "batch-q"):
            for mode in ("constant", "adaptive"):
                if kind == "batch-q" and mode == "adaptive":
                    continue
                cfg = AlgoConfig(algo_kind=kind, map=mmap, K=K, eta_mode=mode, eta=eta, batch_schedule=B, seed=seed)
                cfg.alpha = alpha  # bypasses the range check on purpose
                try:
                    run = run_algorithm(mdp, behavior, cfg)
                except (ExplorationFailure, ValidationError):
                    add("critic-range", np.inf, vmax / 2)
                    continue
                for rec in run.trace:
                    add("critic-range", np.max(np.abs(rec.q - vmax / 2)), vmax / 2)
                for rec, nxt in zip(run.trace, run.trace[1:]):
                    sigma = rec.sigma
                    expected_inc = weighted_bellman(mdp, nxt.pi, sigma, 1.0, rec.q) - rec.q
                    if kind == "batch-q":
                        expected_inc = sigma * (optimal_bellman_q(mdp, rec.q) - rec.q)
                    add("noise-identity", np.max(np.abs(rec.delta_bar - rec.omega_bar - expected_inc)), 1e-12 * max(1.0, vmax))
                    if kind == "batch-q":
                        continue
                    qn = rec.q.reshape(S, A)
                    add("policy-shift", np.max(np.abs(nxt.pi - rec.pi)), rec.eta / mmap.lam * np.max(np.abs(qn).sum(axis=1)))
                    if kind == "expected":
                        greedy = greedy_policy(rec.q, A)
                        drift = float(np.max(bregman(mmap, greedy, rec.pi)))
                        rho = 1 - (1 - g) * run.alpha * behavior.sigma_floor
                        add(
                            "critic-recursion",
                            np.max(np.abs(opt.q_star - nxt.q)),
                            rho * np.max(np.abs(opt.q_star - rec.q))
                            + run.alpha * g / rec.eta * drift
                            + run.alpha * np.max(np.abs(rec.omega_bar)),
                        )
                if kind == "batch-q" or not 0 < run.alpha <= 1:
                    continue
                pis = [r.pi for r in run.trace]
                try:
                    inputs = extract_constants(
                        mdp, behavior, mmap, pi0, opt.pi_star, alpha=run.alpha,
                        policies=None if kind == "expected" else pis, sigma_floor=run.sigma_floor,
                    )
                except (ExplorationFailure, ValidationError):
                    continue
                s = int(rng.integers(S))
                dec = bias_decomposition(run, mdp, behavior, opt.pi_star, s, K)
                add("telescoping-identity", dec.relative_residual, 1e-9)
                if kind == "expected" and mode == "constant" and eta > 0:
                    c_cap, d_cap = drift_term_bounds(inputs, eta)
                    add("policy-drift-terms", np.sum(np.abs(dec.c)), c_cap)
                    add("critic-lag-terms", np.sum(np.abs(dec.d)), d_cap)
                    add("operator-drift-terms", np.sum(np.abs(dec.e)), operator_drift_bound(inputs, eta))
                if mode == "constant":
                    omega = np.mean([np.max(np.abs(r.omega_bar)) for r in run.trace[:-1]])
                    add("noise-moment", omega, noise_moment_bound(inputs, B))

    report = []
    for name, pairs in acc.items():
        # worst case by slack
        worst = max(pairs, key=lambda mb: mb[0] - mb[1])
        report.append(_entry(name, *worst))
    return report
