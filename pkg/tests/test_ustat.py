import math
from fractions import Fraction
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clt_lab.errors import BadParams, DomainError, TooManySubsets
from clt_lab.generators import MomentProfile
from clt_lab.seeding import child_rng
from clt_lab.ustat import (KERNELS, UKernel, projection_variance, q_nr,
                           u_statistic)


def enumerate_oracle(z, kernel):
    z = np.atleast_2d(np.asarray(z, dtype=float).T).T
    acc = None
    for idx in combinations(range(z.shape[0]), kernel.r):
        v = np.atleast_1d(kernel.eval(z[list(idx)]))
        acc = v if acc is None else acc + v
    return acc / math.comb(z.shape[0], kernel.r)


class TestUStatistic:
    def test_variance_kernel_is_sample_variance(self):
        """The order-2 variance kernel averages to var with ddof=1 exactly."""
        rng = child_rng(3, "uvar")
        z = rng.standard_normal((40, 3))
        got = u_statistic(z, KERNELS["variance"])
        np.testing.assert_allclose(got, z.var(axis=0, ddof=1), atol=1e-12)

    def test_pair_mean_kernel_is_mean(self):
        rng = child_rng(4)
        z = rng.standard_normal(25)
        assert u_statistic(z, KERNELS["pair-mean"])[0] == pytest.approx(
            z.mean(), abs=1e-12)

    def test_order_one_kernel(self):
        z = np.array([1.0, 2.0, 6.0])
        assert u_statistic(z, KERNELS["mean"])[0] == pytest.approx(3.0)

    def test_subbag_mean_identity(self):
        # average of subset means weights every point equally
        rng = child_rng(5)
        z = rng.standard_normal(12)
        assert u_statistic(z, KERNELS["subbag-3"])[0] == pytest.approx(
            z.mean(), abs=1e-12)

    @pytest.mark.parametrize("name", ["variance", "pair-mean", "subbag-3"])
    def test_matches_enumeration(self, name):
        rng = child_rng(6, name)
        z = rng.standard_normal((9, 2))
        np.testing.assert_allclose(u_statistic(z, KERNELS[name]),
                                   enumerate_oracle(z, KERNELS[name]),
                                   atol=1e-12)

    def test_non_broadcasting_kernel_falls_back(self):
        def stacked(z):
            z = np.asarray(z)          # fails on the broadcast tuple
            return 0.5 * (z[0] - z[1]) ** 2

        k = UKernel(r=2, eval=stacked, name="stacked-variance")
        rng = child_rng(7)
        z = rng.standard_normal((30, 2))
        np.testing.assert_allclose(u_statistic(z, k),
                                   u_statistic(z, KERNELS["variance"]),
                                   atol=1e-12)

    @given(st.integers(0, 500))
    @settings(max_examples=30, deadline=None)
    def test_permutation_invariance(self, key):
        rng = np.random.default_rng(key)
        z = rng.standard_normal(12)
        perm = rng.permutation(12)
        a = u_statistic(z, KERNELS["variance"])
        b = u_statistic(z[perm], KERNELS["variance"])
        np.testing.assert_allclose(a, b, rtol=1e-12)

    def test_needs_enough_points(self):
        with pytest.raises(BadParams):
            u_statistic(np.ones(2), KERNELS["subbag-3"])

    def test_enumeration_cap(self):
        with pytest.raises(TooManySubsets):
            u_statistic(np.zeros(400), KERNELS["subbag-3"])


class TestProjectionVariance:
    def test_gaussian_variance_kernel(self):
        # E[h(z, Z')|z] = (z^2+1)/2, so Var = (E z^4 - 1)/4 = 1/2
        pv = projection_variance(KERNELS["variance"], MomentProfile("gaussian"),
                                 4000, 64, 5)
        assert pv.entries[0, 0] == pytest.approx(0.5, abs=0.12)

    def test_exponential_variance_kernel(self):
        # fourth central moment 9 gives (9-1)/4 = 2
        pv = projection_variance(KERNELS["variance"],
                                 MomentProfile("centered-exponential"),
                                 6000, 64, 6)
        assert pv.entries[0, 0] == pytest.approx(2.0, rel=0.15)

    def test_order_one_kernel_recovers_variance(self):
        pv = projection_variance(KERNELS["mean"], MomentProfile("gaussian"),
                                 4000, 2, 7)
        assert pv.entries[0, 0] == pytest.approx(1.0, abs=0.1)

    def test_deterministic(self):
        a = projection_variance(KERNELS["variance"], MomentProfile("gaussian"),
                                50, 8, 1)
        b = projection_variance(KERNELS["variance"], MomentProfile("gaussian"),
                                50, 8, 1)
        np.testing.assert_array_equal(a.entries, b.entries)

    def test_bad_args(self):
        with pytest.raises(BadParams):
            projection_variance(KERNELS["variance"], MomentProfile("gaussian"),
                                1, 8, 0)


class TestQnr:
    @pytest.mark.parametrize("n,r", [(3, 2), (5, 2), (7, 2), (5, 3), (9, 3),
                                     (7, 4)])
    def test_matches_subset_counting(self, n, r):
        """Q(n,r) = n * #(ordered subset pairs sharing exactly one element)
        / C(n,r)^2, counted by brute force."""
        subsets = list(combinations(range(n), r))
        count = sum(1 for a in subsets for b in subsets
                    if len(set(a) & set(b)) == 1)
        want = Fraction(n * count, math.comb(n, r) ** 2)
        assert q_nr(n, r) == float(want)

    def test_small_closed_forms(self):
        assert q_nr(3, 2) == 2.0
        assert q_nr(4, 2) == float(Fraction(8, 3))

    def test_limit_is_r_squared(self):
        assert q_nr(10_000, 3) == pytest.approx(9.0, abs=0.01)
        assert q_nr(10_000, 2) == pytest.approx(4.0, abs=0.01)

    def test_domain(self):
        with pytest.raises(DomainError):
            q_nr(4, 3)
        with pytest.raises(DomainError):
            q_nr(5, 0)
