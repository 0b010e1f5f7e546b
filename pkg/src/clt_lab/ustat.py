"""U-statistics: exact enumeration, projection variance, and the
pair-overlap combinatorial factor.

Kernels are registered by name so experiment configs can refer to them. The
rate experiments use the variance kernel, whose exact value reduces to the
unbiased sample variance — an O(n) identity kept in rates; the O(n^2)
enumeration here is the oracle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations

import numpy as np

from .errors import BadParams, DomainError, TooManySubsets
from .generators import MomentProfile, draw_innovations
from .linalg_gauss import PsdMatrix
from .seeding import child_rng

ENUMERATION_CAP = 10_000_000


@dataclass(frozen=True)
class UKernel:
    """Symmetric kernel of order r mapping r points (rows) to R^d."""

    r: int
    eval: callable
    name: str


def _variance_kernel(z):
    # h(z, z') = (z - z')^2 / 2 per coordinate
    return 0.5 * (z[0] - z[1]) ** 2


def _pair_mean_kernel(z):
    return 0.5 * (z[0] + z[1])


def _mean_kernel(z):
    return z[0]


def _subbag_kernel(z):
    # subsample-mean base learner: the prediction of the bagged regressor
    # trained on this subset is the subset mean, independent of query point
    return np.mean(z, axis=0)


KERNELS = {
    "variance": UKernel(r=2, eval=_variance_kernel, name="variance"),
    "pair-mean": UKernel(r=2, eval=_pair_mean_kernel, name="pair-mean"),
    "mean": UKernel(r=1, eval=_mean_kernel, name="mean"),
    "subbag-3": UKernel(r=3, eval=_subbag_kernel, name="subbag-3"),
}


def u_statistic(data, kernel: UKernel) -> np.ndarray:
    """Exact average of the kernel over all C(n, r) subsets.

    r=1 and r=2 are evaluated vectorized; r >= 3 enumerates subsets up to
    the cap and errors beyond it (incomplete U-statistics would confound the
    rate experiments with subsampling noise).
    """
    z = np.asarray(data, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    n = z.shape[0]
    r = kernel.r
    if n < r:
        raise BadParams(f"need n >= r={r}, got n={n}")
    if r == 1:
        return np.atleast_1d(np.mean([kernel.eval(z[i:i + 1]) for i in range(n)],
                                     axis=0))
    if r == 2:
        try:
            return _u_stat_pairs_vectorized(z, kernel)
        except (TypeError, ValueError):
            acc = None
            for i, j in combinations(range(n), 2):
                v = kernel.eval(z[[i, j]])
                acc = v if acc is None else acc + v
            return np.atleast_1d(acc / math.comb(n, 2))
    return _u_stat_enumerate(z, kernel)


def _u_stat_pairs_vectorized(z, kernel):
    """Blocked i<j evaluation for broadcasting-friendly order-2 kernels."""
    n = z.shape[0]
    total = None
    count = 0
    block = 512
    for i0 in range(0, n, block):
        zi = z[i0:min(i0 + block, n)]
        for j0 in range(i0, n, block):
            zj = z[j0:min(j0 + block, n)]
            vals = kernel.eval((zi[:, None, :], zj[None, :, :]))
            vals = np.asarray(vals)
            if vals.shape[:2] != (zi.shape[0], zj.shape[0]):
                raise ValueError("kernel did not broadcast")
            ii = np.arange(i0, i0 + zi.shape[0])
            jj = np.arange(j0, j0 + zj.shape[0])
            mask = ii[:, None] < jj[None, :]
            s = (vals * mask[..., None] if vals.ndim == 3
                 else vals * mask).sum(axis=(0, 1))
            total = s if total is None else total + s
            count += int(mask.sum())
    return np.atleast_1d(total / count)


def _u_stat_enumerate(z, kernel):
    n, r = z.shape[0], kernel.r
    if math.comb(n, r) > ENUMERATION_CAP:
        raise TooManySubsets(f"C({n},{r}) exceeds the enumeration cap; "
                             "use a subsampled variant")
    acc = None
    for idx in combinations(range(n), r):
        v = kernel.eval(z[list(idx)])
        acc = v if acc is None else acc + v
    return np.atleast_1d(acc / math.comb(n, r))


def projection_variance(kernel: UKernel, profile: MomentProfile, reps: int,
                        inner: int, seed, d: int = 1) -> PsdMatrix:
    """Nested Monte Carlo estimate of Var(E[h(Z_0..Z_{r-1}) | Z_0]).

    Outer draws Z_0; the inner loop averages the kernel over fresh
    Z_1..Z_{r-1}. The naive variance of inner means is biased upward by
    (inner-sample variance)/inner; that jackknife-style correction is
    subtracted here, which is the "bias note" attached to this estimator.
    """
    if reps < 2 or inner < 2:
        raise BadParams("need reps >= 2 and inner >= 2")
    rng = child_rng(seed, "projvar")
    r = kernel.r
    means = []
    inner_vars = []
    for _ in range(reps):
        z0 = draw_innovations(profile, (1, d), rng)
        if r == 1:
            vals = np.atleast_2d(kernel.eval(z0))
        else:
            rest = draw_innovations(profile, (inner, r - 1, d), rng)
            vals = np.stack([np.atleast_1d(kernel.eval(
                np.concatenate([z0, rest[i]], axis=0))) for i in range(inner)])
        means.append(vals.mean(axis=0))
        inner_vars.append(vals.var(axis=0, ddof=1) if r > 1 else np.zeros(vals.shape[1]))
    means = np.asarray(means)
    cov = np.cov(means.T, ddof=1)
    cov = np.atleast_2d(cov)
    if r > 1 and inner > 1:
        correction = np.diag(np.mean(inner_vars, axis=0) / inner)
        cov = cov - correction
    # clamp tiny negative diagonal from the correction
    w, v = np.linalg.eigh(0.5 * (cov + cov.T))
    cov = (v * np.clip(w, 0.0, None)) @ v.T
    return PsdMatrix(cov)


def q_nr(n: int, r: int) -> float:
    """Exact Q(n,r) = n^2 C(n,r)^{-2} C(n-1,r-1) C(n-r,r-1); tends to r^2.

    Evaluated in exact rational arithmetic, returned as float.
    """
    if r < 1 or n < 2 * r - 1:
        raise DomainError(f"need r >= 1 and n >= 2r-1, got n={n}, r={r}")
    q = (Fraction(n * n) / (math.comb(n, r) ** 2)
         * math.comb(n - 1, r - 1) * math.comb(n - r, r - 1))
    return float(q)
