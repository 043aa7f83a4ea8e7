import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pmdlab.errors import ValidationError
from pmdlab.mirror import MirrorMap, bregman, pmd_step, project_simplex, reference_norm

MAPS = [MirrorMap.negative_entropy(), MirrorMap.squared_l2()]
MAP_IDS = ["entropy", "l2"]


def bisection_projection(v, iters=200):
    """Independent oracle: find tau with sum(max(v - tau, 0)) = 1 by bisection."""
    lo, hi = v.min() - 1.0, v.max()
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if np.maximum(v - mid, 0).sum() > 1:
            lo = mid
        else:
            hi = mid
    return np.maximum(v - 0.5 * (lo + hi), 0)


def interior_rows(n):
    return arrays(np.float64, n, elements=st.floats(0.05, 1.0)).map(lambda x: x / x.sum())


values = st.floats(-20, 20, allow_nan=False)


class TestMaps:
    def test_names(self):
        assert MirrorMap.from_name("kl") == MirrorMap.negative_entropy()
        assert MirrorMap.from_name("Euclidean") == MirrorMap.squared_l2()
        with pytest.raises(ValidationError, match="map"):
            MirrorMap.from_name("tsallis")

    def test_kl_closed_form(self):
        p, q = np.array([0.5, 0.5]), np.array([0.25, 0.75])
        expected = 0.5 * np.log(2) + 0.5 * np.log(2 / 3)
        assert bregman(MirrorMap.negative_entropy(), p, q) == pytest.approx(expected, abs=1e-15)

    def test_kl_infinite_off_support(self):
        assert bregman(MirrorMap.negative_entropy(), np.array([0.5, 0.5]), np.array([1.0, 0.0])) == np.inf

    def test_l2_closed_form(self):
        assert bregman(MirrorMap.squared_l2(), np.array([1.0, 0.0]), np.array([0.5, 0.5])) == pytest.approx(0.25)

    def test_rowwise(self):
        p = np.array([[0.5, 0.5], [1.0, 0.0]])
        out = bregman(MirrorMap.squared_l2(), p, np.full((2, 2), 0.5))
        assert out.shape == (2,)


class TestStep:
    def test_entropy_step_is_softmax(self):
        pi = np.array([0.2, 0.3, 0.5])
        q = np.array([1.0, -1.0, 0.5])
        w = pi * np.exp(0.7 * q)
        assert pmd_step(MirrorMap.negative_entropy(), pi, q, 0.7) == pytest.approx(w / w.sum(), abs=1e-15)

    @pytest.mark.parametrize("mmap", MAPS, ids=MAP_IDS)
    def test_zero_step_is_identity(self, mmap):
        pi = np.array([0.2, 0.3, 0.5])
        out = pmd_step(mmap, pi, np.array([3.0, 1.0, 2.0]), 0.0)
        assert np.array_equal(out, pi) and out is not pi

    def test_entropy_stays_interior_for_huge_steps(self):
        out = pmd_step(MirrorMap.negative_entropy(), np.full(3, 1 / 3), np.array([0.0, 1.0, 0.5]), 1e6)
        assert np.all(out > 0) and out[1] == 1.0

    def test_l2_large_step_is_exact_vertex(self):
        out = pmd_step(MirrorMap.squared_l2(), np.array([0.3, 0.3, 0.4]), np.array([0.0, 1.0, 0.2]), 10.0)
        assert np.array_equal(out, [0.0, 1.0, 0.0])

    def test_l2_vertex_at_exact_boundary(self):
        # margin exactly 1 between the leader and the rest: the projection is the vertex
        out = project_simplex(np.array([1.1, 0.1, 0.1]))
        assert np.array_equal(out, [1.0, 0.0, 0.0])

    def test_entropy_rejects_boundary_policy(self):
        with pytest.raises(ValidationError):
            pmd_step(MirrorMap.negative_entropy(), np.array([1.0, 0.0]), np.zeros(2), 1.0)

    def test_negative_step_rejected(self):
        with pytest.raises(ValidationError):
            pmd_step(MirrorMap.squared_l2(), np.array([0.5, 0.5]), np.zeros(2), -1.0)

    @pytest.mark.parametrize("mmap", MAPS, ids=MAP_IDS)
    def test_stacked_rows_match_single_rows(self, mmap):
        rng = np.random.default_rng(0)
        pi = rng.dirichlet(np.ones(4), size=5)
        q = rng.normal(size=(5, 4))
        stacked = pmd_step(mmap, pi, q, 1.3)
        for s in range(5):
            assert np.array_equal(stacked[s], pmd_step(mmap, pi[s], q[s], 1.3))


class TestProjection:
    @settings(max_examples=200, deadline=None)
    @given(arrays(np.float64, st.integers(1, 8), elements=values))
    def test_matches_bisection_oracle(self, v):
        out = project_simplex(v)
        assert np.all(out >= 0) and out.sum() == pytest.approx(1.0, abs=1e-12)
        assert out == pytest.approx(bisection_projection(v), abs=1e-9)

    @settings(max_examples=200, deadline=None)
    @given(arrays(np.float64, st.integers(1, 8), elements=values))
    def test_idempotent(self, v):
        once = project_simplex(v)
        assert project_simplex(once) == pytest.approx(once, abs=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(st.integers(1, 8).flatmap(lambda n: st.tuples(arrays(np.float64, n, elements=values),
                                                       arrays(np.float64, n, elements=values))))
    def test_nonexpansive(self, pair):
        u, v = pair
        assert np.linalg.norm(project_simplex(u) - project_simplex(v)) <= np.linalg.norm(u - v) + 1e-12

    def test_rejects_non_finite(self):
        with pytest.raises(ValidationError):
            project_simplex(np.array([np.inf, 0.0]))


@st.composite
def step_problems(draw):
    n = draw(st.integers(2, 6))
    pi = draw(interior_rows(n))
    p = draw(interior_rows(n))
    q = draw(arrays(np.float64, n, elements=st.floats(-10, 10)))
    eta = draw(st.floats(1e-3, 10))
    return pi, p, q, eta


class TestStepProperties:
    @pytest.mark.parametrize("mmap", MAPS, ids=MAP_IDS)
    @settings(max_examples=200, deadline=None)
    @given(step_problems())
    def test_three_point_descent(self, mmap, prob):
        pi, p, q, eta = prob
        plus = pmd_step(mmap, pi, q, eta)
        assume(np.all(plus > 1e-12) or mmap.kind == "squared-l2")
        lhs = eta * (plus - p) @ q
        rhs = bregman(mmap, plus, pi) + bregman(mmap, p, plus) - bregman(mmap, p, pi)
        assert lhs >= rhs - 1e-9

    @pytest.mark.parametrize("mmap", MAPS, ids=MAP_IDS)
    @settings(max_examples=300, deadline=None)
    @given(step_problems())
    def test_strong_convexity(self, mmap, prob):
        pi, p, _, _ = prob
        assert bregman(mmap, p, pi) >= mmap.lam / 2 * reference_norm(mmap, p - pi) ** 2 - 1e-15

    @pytest.mark.parametrize("mmap", MAPS, ids=MAP_IDS)
    @settings(max_examples=200, deadline=None)
    @given(step_problems())
    def test_policy_shift_bounded_by_step(self, mmap, prob):
        pi, _, q, eta = prob
        plus = pmd_step(mmap, pi, q, eta)
        assert np.max(np.abs(plus - pi)) <= eta * np.abs(q).sum() / mmap.lam + 1e-12

    @pytest.mark.parametrize("mmap", MAPS, ids=MAP_IDS)
    @settings(max_examples=100, deadline=None)
    @given(step_problems())
    def test_step_maximizes_objective(self, mmap, prob):
        pi, p, q, eta = prob
        plus = pmd_step(mmap, pi, q, eta)

        def objective(x):
            return eta * x @ q - bregman(mmap, x, pi)

        assert objective(plus) >= objective(p) - 1e-9
