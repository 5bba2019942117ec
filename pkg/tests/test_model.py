import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dyadicflow.model import (
    Constants,
    DomainError,
    DyadicState,
    InvalidInputError,
    ModelParams,
    Tail,
    UnsupportedConventionError,
    coercivity_constant,
    cs_constant,
    default_goodbad_threshold,
    dissipation,
    dissipation_direct,
    dissipation_limit,
    dissipation_matrix,
    rhs_full,
    rhs_inviscid,
    slopes,
    telescoped_sum,
    weighted_slopes,
    xs_norm,
)
from conftest import random_monotone_array, random_monotone_state


def state(a, t=0.0):
    return DyadicState(t=t, a=np.asarray(a, dtype=float))


monotone_states = st.builds(
    lambda incs, a0: state(np.concatenate([[a0], a0 + np.cumsum(incs)])),
    st.lists(st.floats(0.0, 1.0), min_size=2, max_size=40),
    st.floats(0.0, 1.0),
)


class TestTypes:
    def test_params_validation(self):
        ModelParams(alpha=0.0, trunc_k=2)
        with pytest.raises(DomainError):
            ModelParams(alpha=-0.1, trunc_k=4)
        with pytest.raises(DomainError):
            ModelParams(alpha=0.25, trunc_k=1)
        with pytest.raises(DomainError):
            ModelParams(alpha=0.25, trunc_k=8, norm_s=0.0)

    def test_state_rejects_nonfinite(self):
        with pytest.raises(InvalidInputError):
            state([0.0, np.nan, 1.0])
        with pytest.raises(InvalidInputError):
            state([0.0, np.inf])

    def test_state_immutable(self):
        s = state([0.0, 1.0, 2.0])
        with pytest.raises(ValueError):
            s.a[0] = 5.0

    def test_dimension_mismatch_is_invalid_input(self):
        p = ModelParams(alpha=0.25, trunc_k=3)
        with pytest.raises(InvalidInputError):
            dissipation(p, state([0.0, 1.0, 1.0]))

    def test_constants_bundle(self):
        c = Constants.for_model(s=1.0, alpha=0.25, delta=0.5)
        assert c.c_s == pytest.approx(0.5)
        assert c.c_alpha > 0
        assert (c.c_goodbad + 1.0) ** -2 * 2.0**1.5 > 1.0
        with pytest.raises(DomainError):
            Constants(c_s=0.5, c_alpha=1.0, delta=0.5, c_goodbad=10.0)

    def test_default_goodbad_threshold_rule(self):
        for delta in (0.25, 0.5, 0.75):
            c = default_goodbad_threshold(delta)
            assert (1.0 + c) ** 2 == pytest.approx(0.9 * 2.0 ** (delta + 1.0))


class TestDissipation:
    def test_zero_input(self):
        p = ModelParams(alpha=0.25, trunc_k=3)
        out = dissipation(p, state([0, 0, 0, 0]))
        np.testing.assert_array_equal(out, np.zeros(4))

    @pytest.mark.parametrize("c", [1.0, -2.5, 0.37])
    def test_constant_sequence(self, c):
        p = ModelParams(alpha=0.3, trunc_k=4)
        out = dissipation(p, state([c] * 5))
        np.testing.assert_allclose(out, np.zeros(5), atol=1e-14)

    def test_worked_example_plateau(self):
        # alpha=0.25, K=2, a=[0,1,1]: k=0 tail sums to -1; k=1 and k=2 give 1.
        p = ModelParams(alpha=0.25, trunc_k=2)
        s = state([0.0, 1.0, 1.0])
        np.testing.assert_allclose(dissipation(p, s), [-1.0, 1.0, 1.0], atol=1e-14)
        np.testing.assert_allclose(dissipation_direct(p, s), [-1.0, 1.0, 1.0])

    def test_fast_equals_direct_random(self, rng):
        for kmax in (2, 3, 17, 128, 1024):
            for alpha in (0.05, 0.15, 0.25, 0.35, 0.45):
                for tail in (Tail.PLATEAU, Tail.ZERO):
                    a = random_monotone_array(rng, kmax)
                    p = ModelParams(alpha=alpha, trunc_k=kmax, tail=tail)
                    s = state(a)
                    f = dissipation(p, s)
                    d = dissipation_direct(p, s)
                    scale = np.max(np.abs(d))
                    assert np.max(np.abs(f - d)) <= 1e-12 * scale

    def test_fast_equals_direct_deepest_truncation(self, rng):
        # at K = 2048 the operator values overflow float64 once
        # 2*alpha*K exceeds ~1020, so the equivalence domain is alpha <= 1/4
        for alpha in (0.05, 0.15, 0.24):
            a = random_monotone_array(rng, 2048)
            p = ModelParams(alpha=alpha, trunc_k=2048)
            s = state(a)
            f = dissipation(p, s)
            d = dissipation_direct(p, s)
            assert np.all(np.isfinite(d))
            assert np.max(np.abs(f - d)) <= 1e-12 * np.max(np.abs(d))

    def test_matrix_matches_operator(self, rng):
        for tail in (Tail.PLATEAU, Tail.ZERO):
            p = ModelParams(alpha=0.35, trunc_k=12, tail=tail)
            m = dissipation_matrix(p)
            a = random_monotone_array(rng, 12)
            d = dissipation_direct(p, state(a))
            np.testing.assert_allclose(m @ a, d, rtol=1e-12, atol=1e-14)
            # constants in the kernel: row sums vanish
            np.testing.assert_allclose(m @ np.ones(13), np.zeros(13), atol=1e-10)

    def test_zero_tail_drops_tail_sum(self):
        p0 = ModelParams(alpha=0.25, trunc_k=2, tail=Tail.ZERO)
        s = state([0.0, 1.0, 1.0])
        # k=0: only the in-range part of the upper sum: -(1/2) - (1/4)
        np.testing.assert_allclose(dissipation(p0, s), [-0.75, 1.0, 1.0], atol=1e-14)


class TestRhs:
    def test_inviscid_examples(self):
        np.testing.assert_allclose(rhs_inviscid(state([0, 1, 1])), [0, -2, 0])
        np.testing.assert_array_equal(rhs_inviscid(state([0, 0, 0])), [0, 0, 0])
        np.testing.assert_allclose(
            rhs_inviscid(state([0, 0.5, 0.75])), [0, -0.5, -0.25]
        )

    def test_inviscid_zero_component_is_exact(self, rng):
        out = rhs_inviscid(random_monotone_state(rng, 9))
        assert out[0] == 0.0

    def test_full_combines_terms(self):
        p = ModelParams(alpha=0.25, trunc_k=2)
        np.testing.assert_allclose(
            rhs_full(p, state([0, 1, 1])), [1.0, -3.0, -1.0], atol=1e-14
        )
        np.testing.assert_allclose(
            rhs_full(p, state([0, 0, 0])), [0, 0, 0], atol=1e-15
        )

    def test_constant_state_is_equilibrium(self):
        p = ModelParams(alpha=0.4, trunc_k=5)
        np.testing.assert_allclose(
            rhs_full(p, state([0.7] * 6)), np.zeros(6), atol=1e-14
        )

    def test_flat_zero_is_inviscid_equilibrium(self):
        np.testing.assert_array_equal(rhs_inviscid(state([0.0] * 7)), np.zeros(7))

    def test_full_requires_positive_alpha(self):
        p = ModelParams(alpha=0.0, trunc_k=2)
        with pytest.raises(DomainError):
            rhs_full(p, state([0, 1, 1]))


class TestNormsAndSlopes:
    def test_xs_norm_examples(self):
        assert xs_norm(state([0, 0, 0]), 1.7) == 0.0
        assert xs_norm(state([0, 1, 1.5]), 1.0) == pytest.approx(3.5)
        # sup|a| = 1 plus the k=1 difference 1 * 2**2 = 4
        assert xs_norm(state([0, 1, 1]), 2.0) == pytest.approx(5.0)

    def test_xs_norm_requires_positive_s(self):
        with pytest.raises(DomainError):
            xs_norm(state([0, 1]), 0.0)

    def test_slopes_examples(self):
        np.testing.assert_allclose(slopes(state([0, 0.5, 0.75])).b, [0, 1, 1])
        np.testing.assert_array_equal(slopes(state([0, 0, 0])).b, [0, 0, 0])
        np.testing.assert_allclose(slopes(state([0, 1, 1])).b, [0, 2, 0])

    def test_weighted_slopes_examples(self):
        s = state([0, 0.5, 0.75])
        np.testing.assert_allclose(weighted_slopes(s, 1.0).bs, slopes(s).b)
        np.testing.assert_allclose(weighted_slopes(s, 2.0).bs, [0, 2, 4])
        np.testing.assert_array_equal(
            weighted_slopes(state([0, 0, 0]), 2.0).bs, [0, 0, 0]
        )

    def test_weighted_slope_cross_consistency(self, rng):
        for s_idx in (1.0, 1.5, 2.0):
            st_ = random_monotone_state(rng, 20)
            b = slopes(st_).b
            bs = weighted_slopes(st_, s_idx).bs
            karr = np.arange(21, dtype=float)
            expect = b * np.exp2((s_idx - 1.0) * karr)
            np.testing.assert_allclose(bs, expect, rtol=1e-14)


class TestConstants:
    def test_cs_values(self):
        assert cs_constant(1.0) == pytest.approx(0.5, abs=1e-15)
        assert cs_constant(2.0) == pytest.approx(3.0 / 14.0, abs=1e-15)

    def test_cs_monotone_decay(self):
        vals = [cs_constant(s) for s in (1.0, 2.0, 4.0, 8.0)]
        assert all(x > y for x, y in zip(vals, vals[1:]))
        assert vals[-1] < 0.01

    def test_coercivity_value(self):
        c = coercivity_constant(0.25)
        assert c == pytest.approx(2.0**-0.5 / (2.0**0.5 - 1.0))
        assert c == pytest.approx(1.70711, abs=1e-5)

    @pytest.mark.parametrize("k", [3, 5, 9])
    def test_coercivity_identity_small_k(self, k):
        alpha = 0.25
        ta = 2 * alpha
        lhs = (2.0 ** (ta * (k - 1)) - 1.0) / (2.0**ta - 1.0)
        rhs = coercivity_constant(alpha) * (2.0 ** (ta * k) - 2.0**ta)
        assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_coercivity_identity_random_k(self, rng):
        for _ in range(50):
            alpha = float(rng.uniform(0.02, 0.48))
            k = int(rng.integers(2, 31))
            ta = 2 * alpha
            lhs = (2.0 ** (ta * (k - 1)) - 1.0) / (2.0**ta - 1.0)
            rhs = coercivity_constant(alpha) * (2.0 ** (ta * k) - 2.0**ta)
            assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_coercivity_domain(self):
        with pytest.raises(DomainError):
            coercivity_constant(0.0)
        with pytest.raises(DomainError):
            coercivity_constant(0.5)
        # pole near zero is documented, values just above the bound are valid
        assert coercivity_constant(1e-6) > 1e5


class TestTelescopedIdentity:
    def test_worked_example_exact_zero(self):
        p = ModelParams(alpha=0.25, trunc_k=2)
        assert telescoped_sum(p, state([0, 1, 1])) == 0.0

    def test_constant_state(self):
        p = ModelParams(alpha=0.3, trunc_k=6)
        assert telescoped_sum(p, state([2.0] * 7)) == 0.0

    def test_random_monotone_states(self, rng):
        for alpha in (0.1, 0.25, 0.4):
            for _ in range(100):
                kmax = int(rng.integers(2, 40))
                s = random_monotone_state(rng, kmax)
                p = ModelParams(alpha=alpha, trunc_k=kmax)
                bound = 1e-10 * (1.0 + xs_norm(s, 1.0))
                assert abs(telescoped_sum(p, s)) <= bound

    def test_zero_tail_refused(self):
        p = ModelParams(alpha=0.25, trunc_k=2, tail=Tail.ZERO)
        with pytest.raises(UnsupportedConventionError):
            telescoped_sum(p, state([0, 1, 1]))


class TestDissipationLimit:
    def test_constant(self):
        p = ModelParams(alpha=0.25, trunc_k=4)
        assert dissipation_limit(p, state([1.0] * 5)) == 0.0

    def test_worked_example(self):
        p = ModelParams(alpha=0.25, trunc_k=2)
        assert dissipation_limit(p, state([0, 1, 1])) == pytest.approx(1.0)

    def test_monotone_nonnegative(self, rng):
        p = ModelParams(alpha=0.35, trunc_k=15)
        for _ in range(20):
            assert dissipation_limit(p, random_monotone_state(rng, 15)) >= 0.0

    def test_zero_tail_refused(self):
        p = ModelParams(alpha=0.25, trunc_k=2, tail=Tail.ZERO)
        with pytest.raises(UnsupportedConventionError):
            dissipation_limit(p, state([0, 1, 1]))


class TestCoercivityInequality:
    """Operator-difference lower bound at indices with a dominant slope."""

    @staticmethod
    def engineered_state(rng, kmax, k_dom, s):
        # random small increments plus one dominant increment at k_dom,
        # boosted until b_{k,s} > c_s * ||a||_{X^s}
        inc = rng.random(kmax) * 0.2 * 2.0 ** (-s * np.arange(1, kmax + 1))
        cs = cs_constant(s)
        for _ in range(60):
            a = np.concatenate([[0.0], np.cumsum(inc)])
            st_ = state(a)
            bks = weighted_slopes(st_, s).bs[k_dom]
            norm = xs_norm(st_, s)
            if bks > cs * norm * 1.000001:
                return st_
            inc[k_dom - 1] *= 1.7
        raise AssertionError("failed to engineer dominance")

    def test_difference_inequality(self, rng):
        for s in (1.0, 1.5):
            for alpha in (0.15, 0.3, 0.45):
                for _ in range(25):
                    kmax = int(rng.integers(4, 16))
                    k = int(rng.integers(2, kmax + 1))
                    st_ = self.engineered_state(rng, kmax, k, s)
                    p = ModelParams(alpha=alpha, trunc_k=kmax)
                    op = dissipation(p, st_)
                    lhs = (op[k] - op[k - 1]) * 2.0 ** (s * k)
                    bks = weighted_slopes(st_, s).bs[k]
                    ta = 2 * alpha
                    rhs = coercivity_constant(alpha) * (2.0 ** (ta * k) - 2.0**ta) * bks
                    assert lhs >= rhs - 1e-10


@settings(max_examples=60, deadline=None)
@given(s=monotone_states, alpha=st.sampled_from([0.1, 0.25, 0.4]))
def test_property_telescoped_identity(s, alpha):
    p = ModelParams(alpha=alpha, trunc_k=s.k)
    bound = 1e-10 * (1.0 + xs_norm(s, 1.0))
    assert abs(telescoped_sum(p, s)) <= bound


@settings(max_examples=60, deadline=None)
@given(s=monotone_states, alpha=st.sampled_from([0.05, 0.25, 0.45]))
def test_property_fast_equals_direct(s, alpha):
    p = ModelParams(alpha=alpha, trunc_k=s.k)
    f = dissipation(p, s)
    d = dissipation_direct(p, s)
    scale = max(np.max(np.abs(d)), 1e-300)
    assert np.max(np.abs(f - d)) <= 1e-12 * scale


@settings(max_examples=40, deadline=None)
@given(s=monotone_states)
def test_property_constant_shift_invariance(s):
    # adding a constant leaves the operator unchanged (constants in kernel)
    p = ModelParams(alpha=0.3, trunc_k=s.k)
    shifted = DyadicState(t=0.0, a=s.a + 1.0)
    d0 = dissipation(p, s)
    d1 = dissipation(p, shifted)
    scale = 1.0 + np.max(np.abs(d0))
    assert np.max(np.abs(d0 - d1)) <= 1e-9 * scale
