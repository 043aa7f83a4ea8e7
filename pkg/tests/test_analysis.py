import math

import numpy as np
import pytest

from pmdlab.algo import AlgoConfig, run_algorithm
from pmdlab.analysis import (
    BoundInputs,
    bias_decomposition,
    extract_constants,
    drift_term_bounds,
    noise_moment_bound,
    psi_bound,
    remark_schedules,
    run_property_suite,
    state_selector,
    theorem_bound,
    theorem_optimal_eta,
    xi,
)
from pmdlab.chain import MixingEstimate, behavior_model
from pmdlab.errors import ExplorationFailure, ValidationError
from pmdlab.garnet import GarnetSpec, gen_garnet
from pmdlab.mdp import TabularMdp, uniform_policy
from pmdlab.mirror import MirrorMap
from pmdlab.oracle import value_iteration


def make_inputs(**kw):
    base = dict(gamma=0.8, alpha=0.9, lam=1.0, card_A=3, card_S=5, sigma_floor=0.04,
                mixing=MixingEstimate(1.5, 0.6, 200, np.zeros(201)), d0=math.log(3))
    mix = kw.pop("mixing", None)
    if "m" in kw or "kappa" in kw:
        mix = MixingEstimate(kw.pop("m", 1.5), kw.pop("kappa", 0.6), 200, np.zeros(201))
    if mix is not None:
        base["mixing"] = mix
    base.update(kw)
    return BoundInputs(**base)


class TestPsi:
    def test_arithmetic_mean_case(self):
        assert psi_bound(10, 1.0, 2.0, 0.5, 0.9) == pytest.approx(2.0 / (10 * 0.1 * 0.5))

    def test_last_sample_case(self):
        assert psi_bound(6, 0.0, 1.3, 0.4, 0.5) == pytest.approx(1.3 * 0.4**6 / (0.5 * 0.4))

    def test_equal_rates_case(self):
        assert psi_bound(4, 0.5, 1.0, 0.5, 0.5) == pytest.approx(1.0)

    def test_slow_weights_case(self):
        assert psi_bound(5, 0.8, 1.0, 0.5, 0.5) == pytest.approx(0.8**5 / (0.5 * 0.3))

    @pytest.mark.parametrize("args", [(0, 0.5, 1, 0.5, 0.5), (3, 1.2, 1, 0.5, 0.5), (3, 0.5, 1, 1.0, 0.5)])
    def test_domain(self, args):
        with pytest.raises(ValidationError):
            psi_bound(*args)


class TestXi:
    def test_empty(self):
        assert xi(0, 0.5, 0.1, 0.9, 4) == 0.0

    def test_constant_batch_closed_form(self):
        rho = 1 - 0.1 * 0.7 * 0.2
        assert xi(25, 0.7, 0.2, 0.9, 16) == pytest.approx(0.25 * (1 - rho**25) / (1 - rho), rel=1e-13)

    def test_geometric_schedule_term_by_term(self):
        rho = 1 - 0.2 * 1.0 * 0.3
        sched = lambda k: 4 * rho ** (-k)  # noqa: E731
        direct = 0.0
        for k in range(12):
            direct += rho ** (11 - k) / math.sqrt(sched(k))
        assert xi(12, 1.0, 0.3, 0.8, sched) == pytest.approx(direct, rel=1e-13)

    def test_list_schedule(self):
        assert xi(2, 1.0, 0.5, 0.0, [4, 16]) == pytest.approx(0.5 * 0.5 + 0.25)


def t1_transcription(i, K, B, theta):
    """Second, independent transcription of the constant-step bound with the tuned step."""
    g, A, sf = i.gamma, i.card_A, i.sigma_floor
    if theta < i.kappa:
        psi = i.m * i.kappa**B / ((1 - g) * (i.kappa - theta))
    else:
        raise NotImplementedError
    first = 3 / ((K + 1) * i.alpha * sf * (1 - g) ** 3)
    second = 2 * math.sqrt(6 * A * A * i.d0 / ((K + 1) * i.alpha * i.lam * sf * sf * (1 - g) ** 6))
    return first + second + 2 * psi / (sf * (1 - g) ** 2)


class TestTheoremBounds:
    def test_t1_matches_transcription(self):
        i = make_inputs()
        assert theorem_bound("T1", i, 500, 40, theta=0.3) == pytest.approx(t1_transcription(i, 500, 40, 0.3), rel=1e-12)

    def test_tuned_step_minimizes_explicit_form(self):
        i = make_inputs()
        for which in ("T1", "T3"):
            eta = theorem_optimal_eta(which, i, 300)
            best = theorem_bound(which, i, 300, 20, eta=eta, theta=0.5)
            for scale in (0.5, 0.9, 1.1, 2.0):
                assert best <= theorem_bound(which, i, 300, 20, eta=eta * scale, theta=0.5)

    def test_tuned_step_closed_form_dominates_explicit(self):
        # the closed form uses 2*sqrt(ab) >= the minimized sum of the two step terms
        i = make_inputs()
        eta = theorem_optimal_eta("T1", i, 300)
        closed = theorem_bound("T1", i, 300, 20, theta=0.5)
        explicit = theorem_bound("T1", i, 300, 20, eta=eta, theta=0.5)
        assert explicit <= closed * (1 + 1e-12)

    def test_t1_vanishes(self):
        i = make_inputs()
        assert theorem_bound("T1", i, 10**20, 10**4, theta=0.1) < 1e-4

    def test_t3_exceeds_t1(self):
        i = make_inputs()
        assert theorem_bound("T3", i, 100, 8) > theorem_bound("T1", i, 100, 8)

    def test_cor1_first_term(self):
        i = make_inputs()
        rho = 1 - 0.2 * 0.9 * 0.04
        huge = 10**30
        assert theorem_bound("Cor1", i, 50, huge) == pytest.approx(rho**50 / 0.2, rel=1e-9)

    def test_t2_structure(self):
        i = make_inputs(gamma=0.0)
        rho = 1 - 0.9 * 0.04
        # with gamma = 0 the step term vanishes
        expected = 2 * rho**9 / (0.9 * 0.04) + i.noise_scale / 0.04 * (
            xi(10, 0.9, 0.04, 0.0, 64) + xi(9, 0.9, 0.04, 0.0, 64) + 1 / 8
        )
        assert theorem_bound("T2", i, 10, 64, eta=1.0) == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("kw", [{"alpha": 1.2}, {"alpha": 0.0}, {"kappa": 1.0}, {"gamma": 1.0}])
    def test_domain_errors(self, kw):
        with pytest.raises(ValidationError):
            make_inputs(**kw)

    def test_unknown_statement(self):
        with pytest.raises(ValidationError):
            theorem_bound("T9", make_inputs(), 10, 4)

    def test_adaptive_needs_step(self):
        with pytest.raises(ValidationError):
            theorem_bound("T2", make_inputs(), 10, 4)

    def test_zero_floor_rejected(self):
        with pytest.raises(ExplorationFailure):
            make_inputs(sigma_floor=0.0)


class TestSchedules:
    def test_adaptive_batches_grow_geometrically(self):
        i = make_inputs()
        sched = remark_schedules(0.5, i, "adaptive")
        rho = i.rho
        lead = 81 / (i.sigma_floor**2 * (1 - i.gamma) ** 2) * i.noise_scale**2 / (1 - math.sqrt(rho)) ** 2 / 0.25
        assert sched.batch_schedule == [math.ceil(lead * rho ** (sched.K - k - 2)) for k in range(sched.K)]
        assert sched.total_samples == sum(sched.batch_schedule)

    def test_halving_eps_quadruples_closed_form_total(self):
        i = make_inputs()
        a, b = remark_schedules(0.2, i, "adaptive"), remark_schedules(0.1, i, "adaptive")
        assert b.sample_bound == pytest.approx(4 * a.sample_bound, rel=1e-12)

    def test_adaptive_sum_below_closed_form(self):
        i = make_inputs()
        s = remark_schedules(0.3, i, "adaptive")
        assert s.total_samples <= s.sample_bound + s.K

    def test_adaptive_step(self):
        i = make_inputs()
        s = remark_schedules(0.3, i, "adaptive")
        assert s.eta == pytest.approx(6 * 0.8 / (0.9 * 0.04**2 * 0.2**2 * 0.3))

    def test_adaptive_schedule_meets_its_bound(self):
        # plugging the schedule back into the last-iterate statement gives at most eps
        i = make_inputs()
        s = remark_schedules(0.25, i, "adaptive")
        assert theorem_bound("T2", i, s.K, s.batch_schedule, eta=s.eta) <= 0.25

    def test_batch_q_schedule_meets_its_bound(self):
        i = make_inputs()
        s = remark_schedules(0.1, i, "batch-q")
        assert theorem_bound("Cor1", i, s.K, s.batch_schedule) <= 0.1
        assert s.total_samples <= s.sample_bound + s.K

    def test_constant_schedule(self):
        i = make_inputs()
        s = remark_schedules(0.5, i, "constant", theta=0.3)
        assert isinstance(s.batch_schedule, int)
        assert s.total_samples == s.K * s.batch_schedule
        assert theorem_bound("T1", i, s.K, s.batch_schedule, theta=0.3) <= 0.5
        with pytest.raises(ValidationError):
            remark_schedules(0.5, i, "constant", theta=0.9)

    def test_invalid(self):
        with pytest.raises(ValidationError):
            remark_schedules(0.0, make_inputs())
        with pytest.raises(ValidationError):
            remark_schedules(0.1, make_inputs(), "cosine")


class TestConstants:
    def test_uniform_two_by_two(self):
        mdp = TabularMdp(np.full((2, 2, 2), 0.5), np.zeros((2, 2)), 0.5)
        beh = behavior_model(mdp, uniform_policy(2, 2))
        pi_star = np.array([[1.0, 0.0], [1.0, 0.0]])
        i = extract_constants(mdp, beh, MirrorMap.negative_entropy(), uniform_policy(2, 2), pi_star)
        assert i.sigma_floor == pytest.approx(0.25)
        assert i.d0 == pytest.approx(math.log(2))

    def test_garnet_snapshot(self):
        # recorded at the first verified build
        mdp = gen_garnet(GarnetSpec(5, 3, 3, seed=2, gamma=0.8))
        beh = behavior_model(mdp, uniform_policy(5, 3))
        opt = value_iteration(mdp, tol=1e-12)
        i = extract_constants(mdp, beh, MirrorMap.negative_entropy(), uniform_policy(5, 3), opt.pi_star)
        assert i.sigma_floor == pytest.approx(0.03722157557444861, rel=1e-12)
        assert i.m == pytest.approx(1.0)
        assert i.kappa == pytest.approx(0.2768792533751883, rel=1e-9)
        assert i.d0 == pytest.approx(math.log(3), rel=1e-12)
        assert i.L == pytest.approx(4.1486847307349315, rel=1e-9)

    def test_realized_sequence(self, garnet, garnet_behavior):
        run = run_algorithm(garnet, garnet_behavior, AlgoConfig(algo_kind="approximate", K=30, eta=2.0))
        opt = value_iteration(garnet)
        pis = [r.pi for r in run.trace]
        i = extract_constants(garnet, garnet_behavior, MirrorMap.negative_entropy(), pis[0], opt.pi_star,
                              policies=pis, sigma_floor=run.sigma_floor)
        assert i.sigma_floor == run.sigma_floor
        assert 0 < i.kappa < 1 and i.m >= 1


@pytest.fixture(scope="module")
def small_case():
    mdp = gen_garnet(GarnetSpec(3, 2, 3, seed=4, gamma=0.7))
    beh = behavior_model(mdp, uniform_policy(3, 2))
    return mdp, beh, value_iteration(mdp, tol=1e-12)


class TestBiasDecomposition:
    def test_selector(self):
        j = state_selector(1, 3, 2)
        assert np.array_equal(np.diag(j), [0, 0, 1, 1, 0, 0]) and np.count_nonzero(j) == 2

    def test_base_case(self, small_case):
        mdp, beh, opt = small_case
        run = run_algorithm(mdp, beh, AlgoConfig(K=5, eta=1.0, batch_schedule=4))
        dec = bias_decomposition(run, mdp, beh, opt.pi_star, 0, 0)
        assert dec.lhs == pytest.approx(dec.b0, abs=1e-14) and dec.c.size == 0

    def test_frozen_policy_noise_free(self, small_case):
        mdp, beh, opt = small_case
        run = run_algorithm(mdp, beh, AlgoConfig(K=8, eta=0.0, noise_free=True))
        dec = bias_decomposition(run, mdp, beh, opt.pi_star, 2, 8)
        for terms in (dec.c, dec.d, dec.e, dec.f):
            assert np.all(terms == 0)
        assert dec.lhs == pytest.approx(dec.b0, abs=1e-12)

    @pytest.mark.parametrize("kind", ["expected", "approximate"])
    @pytest.mark.parametrize("mmap", [MirrorMap.negative_entropy(), MirrorMap.squared_l2()], ids=["entropy", "l2"])
    def test_seeded_residual(self, small_case, kind, mmap):
        mdp, beh, opt = small_case
        run = run_algorithm(mdp, beh, AlgoConfig(algo_kind=kind, map=mmap, K=5, eta=0.8, batch_schedule=6, seed=3))
        for s in range(3):
            dec = bias_decomposition(run, mdp, beh, opt.pi_star, s, 5)
            assert dec.residual <= 1e-10

    def test_drift_term_caps(self, garnet, garnet_behavior):
        opt = value_iteration(garnet)
        eta = 0.3
        run = run_algorithm(garnet, garnet_behavior, AlgoConfig(K=15, eta=eta, batch_schedule=8, alpha=0.7, seed=1))
        i = extract_constants(garnet, garnet_behavior, MirrorMap.negative_entropy(), uniform_policy(6, 3),
                              opt.pi_star, alpha=0.7)
        c_cap, d_cap = drift_term_bounds(i, eta)
        for s in range(6):
            dec = bias_decomposition(run, garnet, garnet_behavior, opt.pi_star, s, 15)
            assert np.abs(dec.c).sum() <= c_cap and np.abs(dec.d).sum() <= d_cap

    def test_errors(self, small_case):
        mdp, beh, opt = small_case
        run = run_algorithm(mdp, beh, AlgoConfig(K=3))
        with pytest.raises(ValidationError):
            bias_decomposition(run, mdp, beh, opt.pi_star, 0, 4)
        q = run_algorithm(mdp, beh, AlgoConfig(algo_kind="batch-q", K=3))
        with pytest.raises(ValidationError):
            bias_decomposition(q, mdp, beh, opt.pi_star, 0, 2)


class TestNoiseMoment:
    def test_mean_below_bound(self, small_case):
        mdp, beh, opt = small_case
        i = extract_constants(mdp, beh, MirrorMap.negative_entropy(), uniform_policy(3, 2), opt.pi_star)
        norms = [
            np.max(np.abs(run_algorithm(mdp, beh, AlgoConfig(K=3, batch_schedule=16, seed=s)).trace[2].omega_bar))
            for s in range(200)
        ]
        assert np.mean(norms) <= noise_moment_bound(i, 16)


class TestPropertySuite:
    def test_all_pass_on_default_instance(self, garnet, garnet_behavior):
        report = run_property_suite(garnet, garnet_behavior, MirrorMap.negative_entropy(), [0, 1])
        assert all(e["pass"] for e in report), [e for e in report if not e["pass"]]
        names = [e["lemma"] for e in report]
        assert len(names) == len(set(names))
        assert set(report[0]) == {"lemma", "pass", "measured", "bound"}

    def test_overlarge_critic_step_is_caught(self, garnet, garnet_behavior):
        report = run_property_suite(garnet, garnet_behavior, MirrorMap.squared_l2(), [0], alpha=3.0, B=1)
        failed = {e["lemma"] for e in report if not e["pass"]}
        assert "critic-range" in failed

    def test_needs_seeds(self, garnet, garnet_behavior):
        with pytest.raises(ValidationError):
            run_property_suite(garnet, garnet_behavior, MirrorMap.squared_l2(), [])
