"""Wasserstein-p distances between point clouds and to Gaussian targets.

For equal-size uniform clouds the optimal coupling is a permutation, so the
exact distance is a linear assignment problem; in one dimension the sorted
(monotone) pairing is optimal and costs a sort. The statistical estimator
compares an empirical cloud against freshly drawn Gaussian clouds, optionally
subtracting a same-law Gaussian-vs-Gaussian baseline: in d >= 2 the plug-in
estimate of a small distance is dominated by the m-point sampling floor, and
the subtraction keeps that floor from masquerading as signal. The subtraction
happens in W_p^p units (costs are additive there), then a signed p-th root is
taken per repetition.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from .errors import BadParams, DimMismatch, InsufficientSamples, SizeMismatch
from .linalg_gauss import GaussianSpec, sample_gaussian
from .seeding import child_rng

# exactness over scale: the O(m^3) assignment stays exact up to this size
ASSIGNMENT_M_CAP = 4096


@dataclass(frozen=True)
class PointCloud:
    """m uniform-weight points in R^d (rows)."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise SizeMismatch(f"need an m x d array with m >= 1, got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise BadParams("cloud contains non-finite coordinates")
        object.__setattr__(self, "points", pts)

    @property
    def m(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class WpEstimate:
    """Monte Carlo estimate of a W_p distance.

    value is clamped at zero when debiasing drives the mean slightly negative;
    raw_value keeps the unclamped mean and per_rep the individual repetitions
    (used downstream for bootstrap confidence intervals).
    """

    value: float
    stderr: float
    p: float
    m: int
    debiased: bool
    raw_value: float
    per_rep: np.ndarray = field(repr=False)


def _check_pair(x: PointCloud, y: PointCloud):
    if x.m != y.m:
        raise SizeMismatch(f"cloud sizes differ: {x.m} vs {y.m}")
    if x.d != y.d:
        raise DimMismatch(f"cloud dims differ: {x.d} vs {y.d}")


def wp_assignment(x: PointCloud, y: PointCloud, p: float,
                  m_cap: int = ASSIGNMENT_M_CAP) -> float:
    """Exact W_p between equal-size uniform clouds via linear assignment.

    Returns ((1/m) sum_i ||x_i - y_{sigma*(i)}||^p)^(1/p) minimized over
    permutations sigma.
    """
    if p < 1:
        raise BadParams(f"p must be >= 1, got {p}")
    _check_pair(x, y)
    if x.m > m_cap:
        raise BadParams(f"assignment solve capped at m={m_cap}, got {x.m}")
    cost = cdist(x.points, y.points)
    if p != 1:
        cost = cost ** p
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].mean() ** (1.0 / p))


def wp_bruteforce(x: PointCloud, y: PointCloud, p: float,
                  m_cap: int = 8) -> float:
    """Reference W_p minimizing over all m! permutations.

    The independent second route behind the assignment solver; feasible only
    for tiny clouds, so m is hard-capped.
    """
    if p < 1:
        raise BadParams(f"p must be >= 1, got {p}")
    _check_pair(x, y)
    if x.m > m_cap:
        raise BadParams(f"brute force capped at m={m_cap}, got {x.m}")
    cost = cdist(x.points, y.points) ** p
    best = math.inf
    for perm in itertools.permutations(range(x.m)):
        total = cost[range(x.m), perm].sum()
        if total < best:
            best = total
    return float((best / x.m) ** (1.0 / p))


def wp_sorted_1d(x: PointCloud, y: PointCloud, p: float) -> float:
    """Exact 1-D W_p via the monotone (sorted) coupling."""
    if p < 1:
        raise BadParams(f"p must be >= 1, got {p}")
    _check_pair(x, y)
    if x.d != 1:
        raise DimMismatch(f"wp_sorted_1d needs d=1, got d={x.d}")
    xs = np.sort(x.points[:, 0])
    ys = np.sort(y.points[:, 0])
    diff = np.abs(xs - ys)
    if p == 1:
        return float(diff.mean())
    return float((diff ** p).mean() ** (1.0 / p))


def _wp(x: PointCloud, y: PointCloud, p: float) -> float:
    if x.d == 1:
        return wp_sorted_1d(x, y, p)
    return wp_assignment(x, y, p)


def estimate_wp_to_gaussian(samples: PointCloud, target: GaussianSpec, p: float,
                            m: int, reps: int, debias: bool, seed) -> WpEstimate:
    """Estimate W_p between the law behind `samples` and the Gaussian target.

    Each repetition subsamples m points without replacement, draws an m-point
    Gaussian cloud, and computes the exact cloud distance (sorted coupling in
    d=1, assignment otherwise). With debias=True the same-rep distance between
    two independent Gaussian m-clouds is subtracted in W_p^p units before a
    signed p-th root.
    """
    if reps < 1:
        raise BadParams("reps must be >= 1")
    if samples.m < m:
        raise InsufficientSamples(f"pool of {samples.m} points, requested m={m}")
    if samples.d != target.d:
        raise DimMismatch(f"samples d={samples.d} vs target d={target.d}")
    vals = np.empty(reps)
    for r in range(reps):
        rng = child_rng(seed, "wp-rep", r)
        idx = rng.choice(samples.m, size=m, replace=False)
        x = PointCloud(samples.points[idx])
        g = sample_gaussian(target, m, rng)
        v = _wp(x, g, p)
        if debias:
            g1 = sample_gaussian(target, m, rng)
            g2 = sample_gaussian(target, m, rng)
            base = _wp(g1, g2, p)
            delta = v ** p - base ** p
            vals[r] = np.sign(delta) * np.abs(delta) ** (1.0 / p)
        else:
            vals[r] = v
    raw = float(vals.mean())
    stderr = float(vals.std(ddof=1) / np.sqrt(reps)) if reps > 1 else 0.0
    return WpEstimate(value=max(raw, 0.0), stderr=stderr, p=p, m=m,
                      debiased=debias, raw_value=raw, per_rep=vals)
