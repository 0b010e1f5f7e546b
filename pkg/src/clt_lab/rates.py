"""Experiment engine: distance curves over n-grids, slope fits, exponents.

A rate experiment, for each n in a grid: draws a pool of S_n/sqrt(n)
realizations from the configured generator or chain, normalizes against
N(0, Sigma_n) with the *analytic* Sigma_n (never estimated from the same
data), estimates the Wasserstein distance by repeated cloud comparisons, and
finally fits a weighted log-log slope with a bootstrap confidence interval.

Estimator floors: in d >= 2 the cloud-vs-cloud estimate of a distance below
the m-point sampling floor is not resolvable; debiasing subtracts the floor's
mean but cannot recover sub-floor signal. Points whose debiased mean straddles
zero are floored at stderr/2 and flagged before the log fit.
"""
from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import (BadParams, BadSetting, BudgetExceeded, NonPositiveEstimates,
                     TooFewPoints)
from .generators import (MomentProfile, draw_innovations, exact_sigma_n_ma,
                         sum_cloud_iid, sum_cloud_ma1)
from .linalg_gauss import GaussianSpec, PsdMatrix, gaussian_spec
from .markov_exact import (FiniteChain, exact_covariances, simulate_chain_sums,
                           stationary_dist, time_reversal)
from .seeding import child_rng, child_seed
from .transport import PointCloud, estimate_wp_to_gaussian, wp_assignment


@dataclass(frozen=True)
class RatePoint:
    n: int
    estimate: float            # raw mean (may be slightly negative if debiased)
    stderr: float
    floored: bool = False
    per_rep: np.ndarray = field(default=None, repr=False)


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    ci: tuple


@dataclass(frozen=True)
class RateCurve:
    setting: str
    points: tuple
    slope: float
    slope_ci: tuple
    theoretical_exponent: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        ns = [p.n for p in self.points]
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise BadParams("n-grid must be strictly increasing")
        for p in self.points:
            if p.estimate < -3.0 * p.stderr - 1e-12:
                raise BadParams(f"estimate at n={p.n} below -3*stderr; "
                                "debiasing noise floor exceeded")
        if not (self.slope_ci[0] - 1e-12 <= self.slope <= self.slope_ci[1] + 1e-12):
            raise BadParams("slope must lie inside its own CI")

    def to_dict(self) -> dict:
        return {
            "setting": self.setting,
            "points": [{"n": p.n, "estimate": p.estimate, "stderr": p.stderr,
                        "floored": p.floored} for p in self.points],
            "slope": self.slope,
            "slope_ci": list(self.slope_ci),
            "theoretical_exponent": self.theoretical_exponent,
            "meta": self.meta,
        }


@dataclass(frozen=True)
class DependenceFunctional:
    n: int
    value: float
    stderr: float


def theoretical_exponent(setting: str, **params) -> float:
    """Rate exponent a (distance = O(n^a)) for the supported regimes."""
    if setting == "indep_w1" or setting == "local_w1":
        delta = params.get("delta")
        if delta is None or not (0 < delta <= 1):
            raise BadSetting(f"{setting} needs delta in (0, 1], got {delta}")
        return -delta / 2.0
    if setting == "mdep_wp" or setting == "markov_wp":
        p, q = params.get("p"), params.get("q")
        if p is None or q is None or p < 2 or not (0 < q <= 2):
            raise BadSetting(f"{setting} needs p >= 2 and q in (0, 2]")
        return -(p + q - 2.0) / (2.0 * (2.0 * p + q - 2.0))
    if setting == "markov_w1":
        delta = params.get("delta")
        if delta is None or delta <= 1:
            raise BadSetting("markov_w1 needs delta > 1 (third moments)")
        return -0.5
    raise BadSetting(f"unknown setting {setting!r}")


def fit_rate(points, seed=0, bootstrap: int = 500,
             exclude_flagged: bool = False) -> FitResult:
    """Weighted least squares on (log n, log estimate).

    Non-positive estimates are floored at stderr/2 (flagged); weights are
    1/relative-variance. The CI is a nonparametric bootstrap over each point's
    per-rep values (>= `bootstrap` resamples); points without per-rep data
    fall back to a Gaussian resample of (estimate, stderr).
    """
    pts = [p if isinstance(p, RatePoint) else
           RatePoint(n=int(p[0]), estimate=float(p[1]), stderr=float(p[2]))
           for p in points]
    work = []
    for p in pts:
        if p.estimate <= 0.0:
            if p.stderr <= 0.0:
                raise NonPositiveEstimates(
                    f"estimate at n={p.n} is non-positive with zero stderr")
            if exclude_flagged:
                continue
            work.append((p, max(p.estimate, p.stderr / 2.0), True))
        else:
            work.append((p, p.estimate, p.floored))
    if len(work) < 4:
        raise TooFewPoints(f"{len(work)} usable points, need >= 4")

    def wls(values, stderrs):
        ln = np.log([w[0].n for w in work])
        floored_vals = np.maximum(values, np.asarray(stderrs) / 2.0)
        floored_vals = np.maximum(floored_vals, 1e-300)
        relvar = np.maximum((np.asarray(stderrs) / floored_vals) ** 2, 1e-12)
        w = 1.0 / relvar
        A = np.vstack([ln, np.ones_like(ln)]).T
        AW = A * w[:, None]
        beta = np.linalg.solve(A.T @ AW, AW.T @ np.log(floored_vals))
        return beta

    slope, intercept = wls([w[1] for w in work], [w[0].stderr for w in work])
    rng = child_rng(seed, "rate-bootstrap")
    slopes = np.empty(bootstrap)
    for b in range(bootstrap):
        vals, ses = [], []
        for p, v, _ in work:
            if p.per_rep is not None and len(p.per_rep) > 0:
                res = p.per_rep[rng.integers(0, len(p.per_rep), len(p.per_rep))]
                mv = float(res.mean())
                se = float(res.std(ddof=1) / math.sqrt(len(res))) \
                    if len(res) > 1 else p.stderr
            else:
                mv = v + p.stderr * rng.standard_normal()
                se = p.stderr
            vals.append(max(mv, se / 2.0) if mv <= 0 else mv)
            ses.append(se)
        slopes[b] = wls(vals, ses)[0]
    lo, hi = np.percentile(slopes, [2.5, 97.5])
    # degenerate bootstrap (zero-noise points) collapses to the point estimate
    lo, hi = min(lo, slope), max(hi, slope)
    return FitResult(slope=float(slope), intercept=float(intercept),
                     ci=(float(lo), float(hi)))


# ---------------------------------------------------------------------------
# pool construction per generator kind


def _ustat_variance_pool(profile: MomentProfile, n: int, size: int,
                         rng) -> np.ndarray:
    """size draws of sqrt(n) (U_n - 1)/2 for the order-2 variance kernel.

    U_n over pairs of (z - z')^2/2 equals the unbiased sample variance,
    computed by the O(n) identity (n sum z^2 - (sum z)^2 - sum z^2)/(n(n-1));
    the O(n^2) enumeration is the unit-test oracle.
    """
    out = np.empty(size)
    rows = max(1, (1 << 24) // n)
    i = 0
    while i < size:
        j = min(size, i + rows)
        z = draw_innovations(profile, (j - i, n), rng)
        s1 = z.sum(axis=1)
        s2 = (z * z).sum(axis=1)
        u = (n * s2 - s1 * s1 - s2) / (n * (n - 1.0))
        out[i:j] = u
        i = j
    return (math.sqrt(n) * (out - 1.0) / 2.0)[:, None]


_KERNEL_FOURTH_MOMENT = {"gaussian": 3.0, "centered-exponential": 9.0}


def _coerce_chain(doc) -> FiniteChain:
    if isinstance(doc, FiniteChain):
        return doc
    if isinstance(doc, str):
        return FiniteChain.from_json(doc)
    import json
    return FiniteChain.from_json(json.dumps(doc))


def _pool_and_target(gen: dict, n: int, pool: int, seed):
    """(pool cloud, GaussianSpec target N(0, Sigma_n)) for one grid point."""
    kind = gen["kind"]
    rng = child_rng(seed, "pool", kind, n)
    d = int(gen.get("d", 1))
    if kind == "iid":
        profile = MomentProfile(gen["family"], gen.get("params", {}))
        data = sum_cloud_iid(profile, n, pool, d, rng)
        sigma = np.eye(d)
    elif kind == "ma1":
        profile = MomentProfile(gen["family"], gen.get("params", {}))
        data = sum_cloud_ma1(profile, n, pool, d, rng)
        sigma = exact_sigma_n_ma(n, 1, 1.0) * np.eye(d)
    elif kind == "markov":
        chain = _coerce_chain(gen["chain"])
        data = simulate_chain_sums(chain, n, pool, child_seed(seed, "mk", n))
        sigma = exact_covariances(chain, n).sigma_n.entries
        d = chain.d
    elif kind == "ustat-variance":
        profile = MomentProfile(gen["family"], gen.get("params", {}))
        if profile.family not in _KERNEL_FOURTH_MOMENT:
            raise BadParams("variance-kernel experiments need a finite, known "
                            "fourth moment (gaussian or centered-exponential)")
        data = _ustat_variance_pool(profile, n, pool, rng)
        proj_var = (_KERNEL_FOURTH_MOMENT[profile.family] - 1.0) / 4.0
        sigma = np.array([[proj_var]])
        d = 1
    elif kind == "control":
        sigma = np.asarray(gen.get("sigma", np.eye(d)), dtype=float)
        spec = gaussian_spec(sigma)
        from .linalg_gauss import sample_gaussian
        data = sample_gaussian(spec, pool, rng).points
        return PointCloud(data), spec
    else:
        raise BadParams(f"unknown generator kind {kind!r}")
    return PointCloud(data), gaussian_spec(sigma)


def clt_distance_curve(config) -> RateCurve:
    """Distance-to-Gaussian curve over an n-grid, with slope fit.

    `config` is an ExperimentConfig or any object with the same fields
    (generator, p, n_grid, reps, m, pool, debias, seed, and optionally
    exponent_setting/exponent_params, budget_secs, threads).
    """
    gen = config.generator
    n_grid = list(config.n_grid)
    if sorted(n_grid) != n_grid:
        raise BadParams("n_grid must be sorted ascending")
    budget = getattr(config, "budget_secs", None)
    threads = max(1, int(getattr(config, "threads", 1) or 1))
    t0 = time.time()

    def one_point(n: int) -> RatePoint:
        samples, target = _pool_and_target(gen, n, config.pool, config.seed)
        est = estimate_wp_to_gaussian(samples, target, config.p, config.m,
                                      config.reps, config.debias,
                                      child_seed(config.seed, "est", n))
        return RatePoint(n=n, estimate=est.raw_value, stderr=est.stderr,
                         floored=bool(est.raw_value <= 0.0),
                         per_rep=est.per_rep)

    points = []
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool_ex:
            futures = {n: pool_ex.submit(one_point, n) for n in n_grid}
            points = [futures[n].result() for n in n_grid]
    else:
        for n in n_grid:
            if budget is not None and time.time() - t0 > budget:
                raise BudgetExceeded(f"budget {budget}s exhausted before n={n}")
            points.append(one_point(n))

    fit = fit_rate(points, seed=config.seed)
    exponent = None
    exp_setting = getattr(config, "exponent_setting", None)
    if exp_setting:
        exponent = theoretical_exponent(exp_setting,
                                        **getattr(config, "exponent_params", {}))
    return RateCurve(
        setting=getattr(config, "name", gen["kind"]),
        points=tuple(points),
        slope=fit.slope, slope_ci=fit.ci,
        theoretical_exponent=exponent,
        meta={"p": config.p, "m": config.m, "reps": config.reps,
              "pool": config.pool, "debias": bool(config.debias),
              "seed": config.seed},
    )


# ---------------------------------------------------------------------------
# dependence functional (conditional-coupling diagnostic)


def _w2sq_between(cond: np.ndarray, unc_pool: np.ndarray, inner_m: int, rng,
                  debias: bool = True) -> float:
    """Plug-in W2^2 between a conditional cloud and the unconditional pool.

    Subtracts a same-law baseline (two disjoint unconditional subsamples) so
    the m-point sampling floor does not accumulate across the sum over i.
    """
    idx = rng.choice(unc_pool.shape[0], size=3 * inner_m, replace=False)
    unc = unc_pool[idx[:inner_m]]
    w2 = wp_assignment(PointCloud(cond), PointCloud(unc), p=2)
    val = w2 * w2
    if debias:
        b1, b2 = unc_pool[idx[inner_m:2 * inner_m]], unc_pool[idx[2 * inner_m:]]
        wb = wp_assignment(PointCloud(b1), PointCloud(b2), p=2)
        val -= wb * wb
    return val


def _conditional_chain_cloud(chain: FiniteChain, rev: FiniteChain, i: int,
                             n: int, state: int, size: int, rng,
                             hbar: np.ndarray) -> np.ndarray:
    """size draws of W = S_n/sqrt(n) given x_i = state (stationary law).

    The segment before i runs backward from state via the time-reversed
    kernel; the segment after i runs forward via P. Exact for finite chains.
    """
    total = np.tile(hbar[state], (size, 1)).astype(float)
    for kernel_chain, steps in ((rev, i), (chain, n - 1 - i)):
        if steps <= 0:
            continue
        cum = np.cumsum(kernel_chain.kernel, axis=1)
        states = np.full(size, state, dtype=np.int64)
        for _ in range(steps):
            u = rng.random(size)
            states = (u[:, None] > cum[states]).sum(axis=1)
            total += hbar[states]
    return total / math.sqrt(n)


def estimate_dependence_functional(target, n: int, outer_reps: int,
                                   inner_m: int, seed,
                                   budget_secs: float = None) -> DependenceFunctional:
    """sum_i E[ ||U_i|| * W2^2(L(W), L(W | x_i)) ] by nested Monte Carlo.

    `target` is a FiniteChain (conditioning on the state x_i, stationary
    start) or a dict {"kind": "iid", "family": ...} (conditioning on the
    normalized summand U_i; exchangeability makes every i identical in law,
    so one index is simulated and multiplied by n).
    """
    if n > 256:
        raise BadParams("nested Monte Carlo is restricted to n <= 256")
    if outer_reps < 1 or inner_m < 2:
        raise BadParams("need outer_reps >= 1 and inner_m >= 2")
    t0 = time.time()
    rng = child_rng(seed, "depfun", n)
    pool_size = max(4 * inner_m, 4096)

    if isinstance(target, FiniteChain):
        chain = target
        pi = stationary_dist(chain)
        hbar = chain.obs - pi @ chain.obs
        rev = time_reversal(chain)
        unc_pool = simulate_chain_sums(chain, n, pool_size,
                                       child_seed(seed, "depfun-unc", n))
        total = 0.0
        var_acc = 0.0
        for i in range(n):
            if budget_secs is not None and time.time() - t0 > budget_secs:
                raise BudgetExceeded(f"dependence functional budget at i={i}")
            draws = np.empty(outer_reps)
            for j in range(outer_reps):
                s = int(np.searchsorted(np.cumsum(pi), rng.random()))
                cond = _conditional_chain_cloud(chain, rev, i, n, s, inner_m,
                                                rng, hbar)
                u_norm = float(np.linalg.norm(hbar[s])) / math.sqrt(n)
                draws[j] = u_norm * _w2sq_between(cond, unc_pool, inner_m, rng)
            total += draws.mean()
            if outer_reps > 1:
                var_acc += draws.var(ddof=1) / outer_reps
        return DependenceFunctional(n=n, value=max(total, 0.0),
                                    stderr=math.sqrt(var_acc))

    gen = dict(target)
    if gen.get("kind") != "iid":
        raise BadParams("dependence functional supports FiniteChain or iid dicts")
    profile = MomentProfile(gen["family"], gen.get("params", {}))
    d = int(gen.get("d", 1))
    unc_pool = sum_cloud_iid(profile, n, pool_size, d,
                             child_rng(seed, "depfun-unc", n))
    draws = np.empty(outer_reps)
    for j in range(outer_reps):
        x0 = draw_innovations(profile, (1, d), rng)[0]
        if n == 1:
            cond = np.tile(x0, (inner_m, 1)).astype(float)
        else:
            rest = sum_cloud_iid(profile, n - 1, inner_m, d, rng)
            cond = (rest * math.sqrt(n - 1) + x0) / math.sqrt(n)
        u_norm = float(np.linalg.norm(x0)) / math.sqrt(n)
        draws[j] = u_norm * _w2sq_between(cond, unc_pool, inner_m, rng)
    # exchangeability: each of the n indices contributes the same expectation
    value = n * draws.mean()
    stderr = n * draws.std(ddof=1) / math.sqrt(outer_reps) if outer_reps > 1 else 0.0
    return DependenceFunctional(n=n, value=max(value, 0.0), stderr=stderr)
