"""Headline acceptance checks, one test per criterion.

Each test pins a single end-to-end property of the laboratory at desk scale:
solver exactness, the Gaussian W2 oracle, convergence-rate slope windows for
the i.i.d. / heavy-tail / moving-average / Markov / U-statistic experiments,
regeneration structure of the split chain, block decompositions, and the
conditional-coupling diagnostic. Every test asserts its own wall-clock budget
(fixtures charge their build time to each consumer). Seeds are fixed so the
whole file is deterministic; nothing here adapts to the data it sees.

These runs are heavier than the unit tests (tens of minutes total, single
core). Run them explicitly: pytest tests/test_acceptance.py -v
"""

import math
import time
from fractions import Fraction
from types import SimpleNamespace

import numpy as np
import pytest

from clt_lab.blocks import block_partition, block_sums, optimal_block_length
from clt_lab.cli import selftest_rows
from clt_lab.generators import MomentProfile, gen_m_dependent
from clt_lab.linalg_gauss import gaussian_spec, gaussian_w2_closed_form, sample_gaussian
from clt_lab.markov_exact import exact_covariances, poisson_solve, simulate_chain_sums, stationary_dist
from clt_lab.rates import clt_distance_curve, estimate_dependence_functional
from clt_lab.regeneration import build_minorization, cycle_increments, cycle_tail_fit, kn_concentration, simulate_split_chain_batch
from clt_lab.transport import PointCloud, estimate_wp_to_gaussian
from clt_lab.ustat import q_nr


class Curve:
    """Bare config for clt_distance_curve; defaults mirror ExperimentConfig."""

    budget_secs = None
    threads = 1
    debias = False
    exponent_setting = None
    exponent_params: dict = {}
    name = "acceptance"

    def __init__(self, **kw):
        self.__dict__.update(kw)


def loglog_slope(ns, vals) -> float:
    return float(np.polyfit(np.log(np.asarray(ns, dtype=float)),
                            np.log(np.asarray(vals, dtype=float)), 1)[0])


# ---------------------------------------------------------------------------
# shared expensive artifacts


@pytest.fixture(scope="module")
def exp_rate_curve():
    """d=1 centered-exponential W1 curve, reused by the regime-separation test."""
    t0 = time.monotonic()
    curve = clt_distance_curve(Curve(
        generator={"kind": "iid", "family": "centered-exponential", "d": 1},
        p=1.0, n_grid=[2 ** k for k in range(6, 14)], reps=200,
        m=2 ** 19, pool=2 ** 20, seed=814003))
    return SimpleNamespace(curve=curve, secs=time.monotonic() - t0)


@pytest.fixture(scope="module")
def split_data(two_state):
    """64 split-chain traces long enough for K_n at n = 2^14, ~3e5 cycles."""
    t0 = time.monotonic()
    minor = build_minorization(two_state, two_state.small_set, 1)
    traces = simulate_split_chain_batch(two_state, minor, 2 ** 14 + 600, 64,
                                        seed=814009)
    return SimpleNamespace(minor=minor, traces=traces,
                           secs=time.monotonic() - t0)


# ---------------------------------------------------------------------------
# criteria


def test_c01_assignment_matches_bruteforce():
    t0 = time.monotonic()
    rows = selftest_rows(seed=814001, count=100)
    secs = time.monotonic() - t0
    assert len(rows) == 100
    worst = max(r["abs_diff"] for r in rows)
    assert worst <= 1e-9, f"assignment vs brute force worst diff {worst:.3g}"
    assert secs < 10.0


def test_c02_gaussian_w2_oracle():
    t0 = time.monotonic()
    cov = np.diag([1.0, 4.0])
    oracle = gaussian_w2_closed_form(cov, np.eye(2))
    assert abs(oracle - 1.0) < 1e-12
    pool = sample_gaussian(gaussian_spec(cov), 16384, seed=814002)
    est = estimate_wp_to_gaussian(pool, gaussian_spec(np.eye(2)), p=2.0,
                                  m=2048, reps=32, debias=True, seed=8140021)
    secs = time.monotonic() - t0
    assert abs(est.raw_value - oracle) <= 3.0 * est.stderr, (
        f"debiased W2 {est.raw_value:.4f} +- {est.stderr:.4f} vs oracle 1")
    assert secs < 120.0


def test_c03_iid_w1_rate(exp_rate_curve):
    curve = exp_rate_curve.curve
    assert -0.62 <= curve.slope <= -0.38, f"slope {curve.slope:.4f}"
    assert exp_rate_curve.secs < 300.0


def test_c04_heavy_tail_regime(exp_rate_curve):
    t0 = time.monotonic()
    curve = clt_distance_curve(Curve(
        generator={"kind": "iid", "family": "symmetrized-pareto",
                   "params": {"alpha": 2.55}, "d": 1},
        p=1.0, n_grid=[2 ** k for k in range(6, 14)], reps=200,
        m=2 ** 16, pool=2 ** 18, seed=814004))
    secs = time.monotonic() - t0
    assert -0.40 <= curve.slope <= -0.12, f"slope {curve.slope:.4f}"
    # separation: the heavy tail decays strictly slower than the light tail
    assert curve.slope > exp_rate_curve.curve.slope - 0.05, (
        f"heavy {curve.slope:.4f} vs light {exp_rate_curve.curve.slope:.4f}")
    assert secs < 480.0


def test_c05_ma1_multivariate_w1_rate():
    t0 = time.monotonic()
    curve = clt_distance_curve(Curve(
        generator={"kind": "ma1", "family": "centered-exponential", "d": 2},
        p=1.0, n_grid=[2 ** k for k in range(7, 14)], reps=20,
        m=4096, pool=2 ** 14, debias=True, seed=814005))
    secs = time.monotonic() - t0
    assert secs < 900.0
    assert -0.65 <= curve.slope <= -0.35, f"slope {curve.slope:.4f}"


def test_c06_ma1_w2_decay():
    t0 = time.monotonic()
    curve = clt_distance_curve(Curve(
        generator={"kind": "ma1", "family": "centered-exponential", "d": 2},
        p=2.0, n_grid=[2 ** k for k in range(7, 14)], reps=32,
        m=3072, pool=2 ** 14, debias=True, seed=814005))
    secs = time.monotonic() - t0
    assert secs < 900.0
    assert curve.slope <= -0.20, f"slope {curve.slope:.4f}"


def test_c07_markov_w1_rate(three_state):
    t0 = time.monotonic()
    curve = clt_distance_curve(Curve(
        generator={"kind": "markov", "chain": three_state},
        p=1.0, n_grid=[2 ** k for k in range(6, 14)], reps=64,
        m=2 ** 17, pool=2 ** 18, seed=814007))
    secs = time.monotonic() - t0
    assert -0.65 <= curve.slope <= -0.35, f"slope {curve.slope:.4f}"
    assert secs < 600.0


def test_c08_covariance_gap_order(three_state):
    t0 = time.monotonic()
    ns = [2 ** k for k in range(4, 13)]
    sigma_inf = exact_covariances(three_state, 1).sigma_infty.entries
    gaps = [np.linalg.norm(exact_covariances(three_state, n).sigma_n.entries
                           - sigma_inf) for n in ns]
    slope = loglog_slope(ns, gaps)
    secs = time.monotonic() - t0
    assert -1.15 <= slope <= -0.85, f"slope {slope:.4f}"
    assert secs < 10.0


def test_c09_regeneration_tails(split_data):
    t0 = time.monotonic()
    fit = cycle_tail_fit(split_data.traces)
    fit_all = cycle_tail_fit(split_data.traces, include_first=True)
    secs = split_data.secs + (time.monotonic() - t0)
    assert fit.num_cycles >= 10 ** 4
    assert fit.r_squared >= 0.95, f"R^2 {fit.r_squared:.4f}"
    assert fit.rho_hat < 1.0
    assert abs(fit.rho_hat - fit_all.rho_hat) < 0.05, (
        f"first-cycle sensitivity {abs(fit.rho_hat - fit_all.rho_hat):.4f}")
    assert secs < 60.0


def test_c10_cycle_increment_structure(split_data, two_state):
    t0 = time.monotonic()
    g = poisson_solve(two_state)
    pi = stationary_dist(two_state)
    hbar = two_state.obs - pi @ two_state.obs
    n = 2 ** 14
    lag_a, lag_b, pooled = [], [], []
    for tr in split_data.traces:
        ci = cycle_increments(tr, g, two_state, n)
        s_direct = hbar[tr.states[:n]].sum(axis=0)
        err = np.abs(s_direct - (ci.boundary + ci.M_n)).max()
        assert err <= 1e-9, f"sum identity off by {err:.3g}"
        tm = ci.tilde_M[1:, 0]          # cycles i >= 2: identically distributed
        pooled.append(tm)
        lag_a.append(tm[:-2])
        lag_b.append(tm[2:])
    pooled = np.concatenate(pooled)
    assert len(pooled) >= 10 ** 4
    corr = np.corrcoef(np.concatenate(lag_a), np.concatenate(lag_b))[0, 1]
    secs = split_data.secs + (time.monotonic() - t0)
    assert abs(corr) <= 0.05, f"lag-2 correlation {corr:.4f}"
    mean = pooled.mean()
    stderr = pooled.std(ddof=1) / math.sqrt(len(pooled))
    assert abs(mean) <= 3.0 * stderr, f"mean {mean:.4g} +- {stderr:.4g}"
    assert secs < 120.0


def test_c11_kn_concentration(split_data):
    t0 = time.monotonic()
    rows = kn_concentration(split_data.traces, [2 ** k for k in range(8, 15)])
    ratios = [r["ratio"] for r in rows]
    secs = split_data.secs + (time.monotonic() - t0)
    assert max(ratios) / min(ratios) <= 3.0, f"ratios {ratios}"
    assert secs < 120.0


def test_c12_ustat_pair_count_and_rate():
    t0 = time.monotonic()
    for n in range(3, 10 ** 4 + 1):
        expected = float(Fraction(4) - Fraction(4, n - 1))
        assert q_nr(n, 2) == expected, f"q_nr({n},2)"
    curve = clt_distance_curve(Curve(
        generator={"kind": "ustat-variance", "family": "gaussian", "d": 1},
        p=1.0, n_grid=[2 ** k for k in range(6, 12)], reps=200,
        m=2 ** 16, pool=2 ** 17, seed=814012))
    secs = time.monotonic() - t0
    assert -0.65 <= curve.slope <= -0.35, f"slope {curve.slope:.4f}"
    assert secs < 600.0


def test_c13_block_decomposition():
    t0 = time.monotonic()
    rng = np.random.default_rng(814013)
    families = [("gaussian", {}), ("centered-exponential", {}),
                ("rademacher", {}), ("symmetrized-pareto", {"alpha": 2.55})]
    for i in range(100):
        n = int(rng.integers(8, 500))
        M = int(rng.integers(0, 4))
        lo = max(M, 1)
        ell = int(rng.integers(lo, max(lo + 1, min(n - M, 40) + 1)))
        if ell + M > n:
            ell = lo
        fam, params = families[i % 4]
        sample = gen_m_dependent(n, int(rng.integers(1, 3)), M,
                                 MomentProfile(fam, params), seed=814100 + i)
        res = block_sums(sample, block_partition(n, M, ell))
        assert np.abs(res["A"] + res["Delta"] - res["S_n"]).max() <= 1e-9
        assert res["two_way_error"] <= 1e-9

    assert optimal_block_length(1024, 1, 2, 2) == 96

    # adjacent big blocks are separated by gaps of length M=1, hence
    # independent for the moving average: empirical cross-correlation ~ 0
    part = block_partition(248, 1, 30)
    prof = MomentProfile("gaussian", {})
    first, second = [], []
    for r in range(3000):
        u = block_sums(gen_m_dependent(248, 1, 1, prof, seed=814500 + r),
                       part)["U"][:, 0]
        first.append(u[:-1])
        second.append(u[1:])
    corr = np.corrcoef(np.concatenate(first), np.concatenate(second))[0, 1]
    npairs = 3000 * (part.k - 1)
    secs = time.monotonic() - t0
    assert abs(corr) <= 3.5 / math.sqrt(npairs), f"cross-corr {corr:.4f}"
    assert secs < 60.0


def test_c14_dependence_functional_dominates(two_state):
    t0 = time.monotonic()
    ns = [16, 32, 64, 128]
    fun = [estimate_dependence_functional(two_state, n, outer_reps=4,
                                          inner_m=1024, seed=814014)
           for n in ns]
    vals = [f.value for f in fun]
    assert all(a > b for a, b in zip(vals, vals[1:])), f"not decreasing: {vals}"

    w1 = []
    for n in ns:
        data = PointCloud(simulate_chain_sums(two_state, n, 2 ** 17,
                                              seed=8141400 + n))
        target = gaussian_spec(exact_covariances(two_state, n).sigma_n.entries)
        est = estimate_wp_to_gaussian(data, target, p=1.0, m=2 ** 15, reps=48,
                                      debias=True, seed=8141500 + n)
        w1.append(est.raw_value)

    # one constant, fitted at the smallest n with 10% slack, must dominate
    # the measured distance on the rest of the grid
    c = 1.1 * w1[0] / vals[0]
    secs = time.monotonic() - t0
    for n, f, w in zip(ns, vals, w1):
        assert c * f >= w, f"n={n}: {c:.3f} * {f:.4f} < {w:.4f}"
    assert secs < 1200.0
