import itertools
import math

import numpy as np
import pytest

from clt_lab.errors import (BadParams, BadSetting, BudgetExceeded,
                            NonPositiveEstimates, TooFewPoints)
from clt_lab.markov_exact import FiniteChain, stationary_dist
from clt_lab.rates import (RateCurve, RatePoint, clt_distance_curve,
                           estimate_dependence_functional, fit_rate,
                           theoretical_exponent)


class TestTheoreticalExponent:
    def test_independent_and_local(self):
        assert theoretical_exponent("indep_w1", delta=1.0) == -0.5
        assert theoretical_exponent("indep_w1", delta=0.4) == -0.2
        assert theoretical_exponent("local_w1", delta=1.0) == -0.5

    def test_blockwise_wp(self):
        assert theoretical_exponent("mdep_wp", p=2.0, q=2.0) == -0.25
        assert theoretical_exponent("markov_wp", p=3.0, q=1.0) == pytest.approx(
            -0.2)

    def test_markov_w1_with_third_moments(self):
        assert theoretical_exponent("markov_w1", delta=2.0) == -0.5

    @pytest.mark.parametrize("setting,params", [
        ("indep_w1", {"delta": 0.0}),
        ("indep_w1", {"delta": 1.5}),
        ("mdep_wp", {"p": 1.5, "q": 2.0}),
        ("mdep_wp", {"p": 2.0, "q": 3.0}),
        ("markov_w1", {"delta": 1.0}),
        ("nope", {}),
    ])
    def test_domain(self, setting, params):
        with pytest.raises(BadSetting):
            theoretical_exponent(setting, **params)


def synthetic_points(slope, c=2.0, noise=0.0, reps=None, seed=0,
                     grid=(16, 32, 64, 128, 256)):
    rng = np.random.default_rng(seed)
    pts = []
    for n in grid:
        mean = c * n ** slope
        if reps:
            vals = rng.normal(mean, noise * mean, size=reps)
            pts.append(RatePoint(n=n, estimate=float(vals.mean()),
                                 stderr=float(vals.std(ddof=1) / math.sqrt(reps)),
                                 per_rep=vals))
        else:
            pts.append(RatePoint(n=n, estimate=mean,
                                 stderr=max(noise * mean, 1e-12)))
    return pts


class TestFitRate:
    def test_recovers_exact_power_law(self):
        fit = fit_rate(synthetic_points(-0.5))
        assert fit.slope == pytest.approx(-0.5, abs=1e-9)
        assert fit.intercept == pytest.approx(math.log(2.0), abs=1e-9)
        assert fit.ci[0] <= fit.slope <= fit.ci[1]

    def test_accepts_tuples(self):
        fit = fit_rate([(n, 2.0 * n ** -0.25, 1e-12) for n in (8, 16, 32, 64)])
        assert fit.slope == pytest.approx(-0.25, abs=1e-9)

    def test_too_few_points(self):
        with pytest.raises(TooFewPoints):
            fit_rate(synthetic_points(-0.5, grid=(4, 8, 16)))

    def test_nonpositive_estimate_without_noise_scale(self):
        pts = synthetic_points(-0.5, grid=(8, 16, 32, 64))
        pts[1] = RatePoint(n=16, estimate=-0.1, stderr=0.0)
        with pytest.raises(NonPositiveEstimates):
            fit_rate(pts)

    def test_flooring_and_exclusion(self):
        pts = synthetic_points(-0.5, noise=0.01, grid=(8, 16, 32, 64, 128))
        pts[4] = RatePoint(n=128, estimate=-0.001, stderr=0.02)
        kept = fit_rate(pts)
        dropped = fit_rate(pts, exclude_flagged=True)
        assert kept.slope != dropped.slope
        assert dropped.slope == pytest.approx(-0.5, abs=0.01)
        # dropping below four points is an error again
        with pytest.raises(TooFewPoints):
            fit_rate([pts[0], pts[1], pts[2], pts[4]], exclude_flagged=True)

    def test_deterministic(self):
        pts = synthetic_points(-0.5, noise=0.1, reps=32, seed=3)
        a = fit_rate(pts, seed=9)
        b = fit_rate(pts, seed=9)
        assert a == b

    def test_bootstrap_ci_covers_truth(self):
        """Nominal 95% CI over per-rep resamples; demand >= 88/100 hits."""
        rng = np.random.default_rng(2025)
        hits = 0
        for t in range(100):
            pts = []
            for n in (16, 32, 64, 128, 256):
                mean = 2.0 * n ** -0.5
                vals = rng.normal(mean, 0.15 * mean, size=64)
                pts.append(RatePoint(n=n, estimate=float(vals.mean()),
                                     stderr=float(vals.std(ddof=1) / 8.0),
                                     per_rep=vals))
            fit = fit_rate(pts, seed=t, bootstrap=200)
            hits += fit.ci[0] <= -0.5 <= fit.ci[1]
        assert hits >= 88


class TestRateCurve:
    def test_invariants(self):
        pts = tuple(synthetic_points(-0.5))
        with pytest.raises(BadParams):
            RateCurve(setting="x", points=pts[::-1], slope=-0.5,
                      slope_ci=(-0.6, -0.4), theoretical_exponent=None)
        with pytest.raises(BadParams):
            RateCurve(setting="x", points=pts, slope=-0.5,
                      slope_ci=(-0.45, -0.4), theoretical_exponent=None)
        bad = pts[:4] + (RatePoint(n=512, estimate=-1.0, stderr=0.01),)
        with pytest.raises(BadParams):
            RateCurve(setting="x", points=bad, slope=-0.5,
                      slope_ci=(-0.6, -0.4), theoretical_exponent=None)

    def test_to_dict_shape(self):
        pts = tuple(synthetic_points(-0.5))
        c = RateCurve(setting="demo", points=pts, slope=-0.5,
                      slope_ci=(-0.6, -0.4), theoretical_exponent=-0.5,
                      meta={"m": 64})
        doc = c.to_dict()
        assert doc["setting"] == "demo" and doc["meta"] == {"m": 64}
        assert [p["n"] for p in doc["points"]] == [16, 32, 64, 128, 256]
        assert set(doc["points"][0]) == {"n", "estimate", "stderr", "floored"}


class CurveConfig:
    """Bare config object; the dataclass version lives in clt_lab.config."""

    generator = {"kind": "iid", "family": "rademacher"}
    p = 1.0
    n_grid = [16, 64, 256, 1024]
    reps = 16
    m = 16384
    pool = 65536
    debias = False
    seed = 42
    exponent_setting = "indep_w1"
    exponent_params = {"delta": 1.0}
    name = "unit-rate"
    budget_secs = None
    threads = 1


class TestCltDistanceCurve:
    def test_iid_rademacher_w1_rate(self):
        curve = clt_distance_curve(CurveConfig())
        assert curve.theoretical_exponent == -0.5
        assert curve.slope == pytest.approx(-0.5, abs=0.12)
        assert [pt.n for pt in curve.points] == [16, 64, 256, 1024]
        assert all(not pt.floored for pt in curve.points)

    def test_reruns_identically(self):
        a = clt_distance_curve(CurveConfig()).to_dict()
        b = clt_distance_curve(CurveConfig()).to_dict()
        assert a == b

    def test_budget(self):
        cfg = CurveConfig()
        cfg.budget_secs = 0.0
        with pytest.raises(BudgetExceeded):
            clt_distance_curve(cfg)

    def test_unknown_generator_kind(self):
        cfg = CurveConfig()
        cfg.generator = {"kind": "sde"}
        with pytest.raises(BadParams):
            clt_distance_curve(cfg)


def w2sq_discrete(atoms_a, probs_a, atoms_b, probs_b):
    """Quantile-coupling W2^2 between two finite 1-d laws."""
    ia, ib = np.argsort(atoms_a), np.argsort(atoms_b)
    xa, pa = np.asarray(atoms_a)[ia], np.asarray(probs_a)[ia]
    xb, pb = np.asarray(atoms_b)[ib], np.asarray(probs_b)[ib]
    i = j = 0
    ra, rb = pa[0], pb[0]
    cost = 0.0
    while i < len(xa) and j < len(xb):
        step = min(ra, rb)
        cost += step * (xa[i] - xb[j]) ** 2
        ra -= step
        rb -= step
        if ra <= 1e-15:
            i += 1
            ra = pa[i] if i < len(xa) else 0.0
        if rb <= 1e-15:
            j += 1
            rb = pb[j] if j < len(xb) else 0.0
    return cost


def exact_chain_functional(chain, n):
    """Brute force over all s^n paths: sum_i E[|U_i| W2^2(L(W), L(W|x_i))]."""
    pi = stationary_dist(chain)
    hbar = (chain.obs - pi @ chain.obs)[:, 0]
    P = chain.kernel
    paths = list(itertools.product(range(chain.s), repeat=n))
    probs = np.array([pi[p[0]] * np.prod([P[p[t], p[t + 1]]
                                          for t in range(n - 1)])
                      for p in paths])
    W = np.array([hbar[list(p)].sum() for p in paths]) / math.sqrt(n)
    total = 0.0
    for i in range(n):
        for s in range(chain.s):
            mask = np.array([p[i] == s for p in paths])
            cond = probs[mask] / probs[mask].sum()
            w2 = w2sq_discrete(W, probs, W[mask], cond)
            total += probs[mask].sum() * abs(hbar[s]) / math.sqrt(n) * w2
    return total


class TestDependenceFunctional:
    def test_zero_observation_gives_zero(self):
        flat = FiniteChain(kernel=[[0.9, 0.1], [0.2, 0.8]], obs=[3.0, 3.0])
        out = estimate_dependence_functional(flat, 4, outer_reps=4,
                                             inner_m=64, seed=1)
        assert out.value == 0.0

    def test_single_rademacher_summand(self):
        # conditioning on the only summand: W2^2(delta_{x}, Rademacher) = 2;
        # the same-law baseline subtraction eats ~4 E|K-K'|/m of it
        out = estimate_dependence_functional(
            {"kind": "iid", "family": "rademacher"}, 1, outer_reps=32,
            inner_m=256, seed=5)
        assert out.value == pytest.approx(2.0, abs=0.4)
        assert out.value > 1.2

    def test_two_state_matches_path_enumeration(self, two_state):
        oracle = exact_chain_functional(two_state, 4)
        assert oracle == pytest.approx(18.6965, abs=0.0005)
        mc = estimate_dependence_functional(two_state, 4, outer_reps=16,
                                            inner_m=256, seed=77)
        assert mc.value == pytest.approx(oracle, abs=4 * mc.stderr)
        assert abs(mc.value - oracle) / oracle < 0.35

    def test_deterministic(self):
        args = ({"kind": "iid", "family": "gaussian"}, 8)
        a = estimate_dependence_functional(*args, outer_reps=4, inner_m=64,
                                           seed=3)
        b = estimate_dependence_functional(*args, outer_reps=4, inner_m=64,
                                           seed=3)
        assert a == b

    def test_domain_guards(self, two_state):
        with pytest.raises(BadParams):
            estimate_dependence_functional(two_state, 512, 4, 64, 0)
        with pytest.raises(BadParams):
            estimate_dependence_functional(two_state, 4, 0, 64, 0)
        with pytest.raises(BadParams):
            estimate_dependence_functional({"kind": "ma1", "family": "gaussian"},
                                           4, 4, 64, 0)

    def test_budget(self, two_state):
        with pytest.raises(BudgetExceeded):
            estimate_dependence_functional(two_state, 8, outer_reps=4,
                                           inner_m=64, seed=0, budget_secs=0.0)
