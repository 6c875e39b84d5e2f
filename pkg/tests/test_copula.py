from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from collateral_cds.copula import (
    CopulaFamily,
    CopulaSpec,
    evaluate,
    log_evaluate,
    partial,
    partial2,
    subset_partial,
)

from oracles import clayton_c, fd_partial, mp_partial

interior = st.floats(min_value=1e-3, max_value=0.999)
alphas = st.floats(min_value=0.05, max_value=8.0)


def clayton(alpha, dim):
    return CopulaSpec.clayton(alpha, dim)


class TestSpec:
    def test_rejects_negative_alpha(self):
        with pytest.raises(ValueError):
            CopulaSpec.clayton(-0.1, 3)

    def test_rejects_small_dim(self):
        with pytest.raises(ValueError):
            CopulaSpec.clayton(1.0, 1)

    def test_string_family(self):
        assert CopulaSpec("Clayton", 1.0, 2).family is CopulaFamily.CLAYTON

    def test_tiny_alpha_is_product(self):
        assert CopulaSpec.clayton(1e-13, 2).is_product
        assert not CopulaSpec.clayton(1e-6, 2).is_product


class TestEvaluate:
    def test_uniform_margin(self):
        assert evaluate(clayton(2.0, 3), [0.37, 1, 1]) == pytest.approx(0.37, rel=1e-15)

    def test_two_dim_value(self):
        assert evaluate(clayton(1.0, 2), [0.5, 0.5]) == pytest.approx(1 / 3, rel=1e-15)

    def test_product_limit(self):
        assert evaluate(clayton(1e-6, 3), [0.3, 0.6, 0.9]) == pytest.approx(0.162, abs=1e-6)

    def test_product_family(self):
        assert evaluate(CopulaSpec.product(3), [0.3, 0.6, 0.9]) == pytest.approx(0.162, rel=1e-15)

    @pytest.mark.parametrize("u", [[0.0, 0.5], [1.2, 0.5], [-0.1, 0.5]])
    def test_domain(self, u):
        with pytest.raises(ValueError):
            evaluate(clayton(1.0, 2), u)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            evaluate(clayton(1.0, 3), [0.5, 0.5])

    def test_vectorised(self):
        u = np.array([[0.5, 0.5], [0.2, 0.9]])
        got = evaluate(clayton(1.5, 2), u)
        assert got == pytest.approx([clayton_c(r, 1.5) for r in u], rel=1e-14)

    def test_extreme_arguments_stay_finite(self):
        # long maturities push survival probabilities far below 1e-8
        u = np.array([1e-300, 1e-200, 0.5])
        val = log_evaluate(clayton(3.0, 3), np.log(u))
        assert np.isfinite(val)
        assert val <= np.log(1e-300) + 1e-9

    @given(st.lists(interior, min_size=2, max_size=5), alphas)
    def test_matches_textbook_formula(self, u, alpha):
        assert evaluate(clayton(alpha, len(u)), u) == pytest.approx(clayton_c(u, alpha), rel=1e-11)

    @given(st.lists(interior, min_size=2, max_size=5), alphas)
    def test_frechet_upper_bound(self, u, alpha):
        c = evaluate(clayton(alpha, len(u)), u)
        assert 0 < c <= min(u) * (1 + 1e-14)

    @given(st.lists(interior, min_size=2, max_size=4), alphas, st.integers(0, 3))
    def test_monotone(self, u, alpha, i):
        i %= len(u)
        up = list(u)
        up[i] = min(1.0, up[i] + 1e-3)
        spec = clayton(alpha, len(u))
        assert evaluate(spec, up) >= evaluate(spec, u)

    @pytest.mark.parametrize("dim", [2, 3, 4])
    def test_groundedness(self, dim):
        grid = [0.1, 0.3, 0.5, 0.7, 0.9]
        for alpha in (0.5, 2.0):
            full, low = clayton(alpha, dim), clayton(alpha, dim - 1) if dim > 2 else None
            for pts in itertools.product(grid, repeat=dim - 1):
                for pos in range(dim):
                    u = list(pts)
                    u.insert(pos, 1.0)
                    want = pts[0] if low is None else evaluate(low, list(pts))
                    assert evaluate(full, u) == pytest.approx(want, rel=1e-13)

    def test_continuity_in_alpha(self):
        rng = np.random.default_rng(7)
        u = rng.uniform(0.01, 1.0, size=(500, 3))
        assert np.max(np.abs(evaluate(clayton(1e-8, 3), u) - u.prod(axis=1))) <= 1e-6

    def test_small_alpha_no_cancellation(self):
        u = [0.3, 0.6, 0.9]
        for alpha in (1e-11, 1e-9, 1e-6, 1e-4):
            got = evaluate(clayton(alpha, 3), u)
            # first-order expansion around independence
            logs = np.log(u)
            approx = np.prod(u) * np.exp(alpha * (0.5 * (logs.sum() ** 2 - (logs ** 2).sum())))
            assert got == pytest.approx(approx, rel=10 * alpha ** 2 + 1e-14)


class TestPartials:
    def test_corner(self):
        for alpha in (0.5, 1.0, 3.0):
            assert partial(clayton(alpha, 2), [1, 1], 0) == pytest.approx(1.0, rel=1e-15)

    def test_two_dim_first(self):
        assert partial(clayton(1.0, 2), [0.5, 0.5], 0) == pytest.approx(4 / 9, rel=1e-15)

    def test_first_product_limit(self):
        assert partial(clayton(1e-6, 2), [0.3, 0.6], 0) == pytest.approx(0.6, abs=1e-5)

    def test_two_dim_second(self):
        assert partial2(clayton(1.0, 2), [0.5, 0.5], 0, 1) == pytest.approx(32 / 27, rel=1e-15)

    def test_second_product(self):
        assert partial2(CopulaSpec.product(3), [0.3, 0.6, 0.9], 0, 1) == pytest.approx(0.9, rel=1e-15)

    def test_second_same_index(self):
        with pytest.raises(ValueError):
            partial2(clayton(1.0, 3), [0.4, 0.7, 0.8], 1, 1)

    @pytest.mark.parametrize("spec", [CopulaSpec.clayton(0.7, 3), CopulaSpec.clayton(3.0, 3),
                                      CopulaSpec.product(3)])
    def test_second_finite_difference(self, spec):
        u = [0.4, 0.7, 0.8]
        for i, j in itertools.permutations(range(3), 2):
            fd = fd_partial(lambda x: float(partial(spec, x, j)), u, i)
            assert partial2(spec, u, i, j) == pytest.approx(fd, rel=1e-5)

    @given(st.lists(interior, min_size=2, max_size=4), alphas, st.integers(0, 3))
    def test_first_high_precision(self, u, alpha, i):
        i %= len(u)
        want = mp_partial(u, alpha, i)
        assert partial(clayton(alpha, len(u)), u, i) == pytest.approx(want, rel=1e-10)

    @pytest.mark.parametrize("alpha", [0.25, 1.0, 4.0])
    def test_ratio_identities(self, alpha):
        rng = np.random.default_rng(11)
        u = rng.uniform(1e-3, 1.0, size=(1000, 3))
        spec = clayton(alpha, 3)
        c = evaluate(spec, u)
        for i in range(3):
            lhs = u[:, i] * partial(spec, u, i) / c
            np.testing.assert_allclose(lhs, (c / u[:, i]) ** alpha, rtol=1e-12)
            for j in range(3):
                if i != j:
                    lhs2 = u[:, i] * partial2(spec, u, i, j) / partial(spec, u, j)
                    np.testing.assert_allclose(lhs2, (1 + alpha) * (c / u[:, i]) ** alpha, rtol=1e-12)


class TestSubsetPartial:
    def test_singleton(self):
        spec = clayton(1.7, 3)
        u = [0.3, 0.5, 0.8]
        assert subset_partial(spec, u, {0}) == pytest.approx(float(partial(spec, u, 0)), rel=1e-15)

    def test_pair(self):
        spec = clayton(1.7, 3)
        u = [0.3, 0.5, 0.8]
        assert subset_partial(spec, u, {0, 2}) == pytest.approx(float(partial2(spec, u, 0, 2)),
                                                                rel=1e-15)

    def test_nested_finite_difference(self):
        spec = clayton(1.0, 3)
        u = [0.5, 0.5, 0.5]

        def d2(x):
            return fd_partial(lambda y: clayton_c(y, 1.0), x, 2, h=1e-4)

        fd = fd_partial(d2, u, 1, h=1e-4)
        assert subset_partial(spec, u, {1, 2}) == pytest.approx(fd, rel=1e-4)

    def test_third_order(self):
        spec = clayton(0.8, 4)
        u = [0.4, 0.6, 0.7, 0.9]
        fd = fd_partial(lambda x: float(subset_partial(spec, x, {0, 1})), u, 3, h=1e-6)
        assert subset_partial(spec, u, {0, 1, 3}) == pytest.approx(fd, rel=1e-6)

    def test_product(self):
        assert subset_partial(CopulaSpec.product(3), [0.2, 0.5, 0.8], {0, 1}) == pytest.approx(0.8)

    def test_empty_and_full_rejected(self):
        spec = clayton(1.0, 3)
        with pytest.raises(ValueError):
            subset_partial(spec, [0.5] * 3, set())
        with pytest.raises(ValueError):
            subset_partial(spec, [0.5] * 3, {0, 1, 2})
