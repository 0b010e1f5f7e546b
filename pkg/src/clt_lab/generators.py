"""Seeded generators for every dependence structure the rate experiments use.

All profiles are centered with unit variance so that normalization is carried
entirely by the analytic long-run variance (exact_sigma_n_ma or the chain
covariances), never estimated from the same data being tested.

Besides the literal sequence generators, this module provides equal-in-law
shortcut samplers for the partial sums S_n/sqrt(n) of specific constructions
(Gamma/Binomial identities). Rate experiments need clouds of ~10^6 partial-sum
realizations at n up to 2^13; drawing each sum literally would cost ~10^10
innovations. Every shortcut is tested against the brute-force sum.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BadParams, BadProfileParams
from .seeding import child_rng

FAMILIES = ("gaussian", "centered-exponential", "symmetrized-pareto", "rademacher")


@dataclass(frozen=True)
class MomentProfile:
    """Centered unit-variance innovation family with a controllable tail.

    symmetrized-pareto(alpha) has E|X|^s < infinity iff s < alpha; the scale
    x0 = sqrt((alpha-2)/alpha) makes the variance 1, which requires alpha > 2.
    """

    family: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise BadProfileParams(f"unknown family {self.family!r}")
        if self.family == "symmetrized-pareto":
            alpha = self.params.get("alpha")
            if alpha is None or alpha <= 2.0:
                raise BadProfileParams(
                    "symmetrized-pareto needs alpha > 2 for a finite variance")

    @property
    def alpha(self) -> float:
        return float(self.params["alpha"])


def draw_innovations(profile: MomentProfile, shape, rng: np.random.Generator) -> np.ndarray:
    """i.i.d. centered unit-variance innovations with the profile's tail."""
    if profile.family == "gaussian":
        return rng.standard_normal(shape)
    if profile.family == "centered-exponential":
        return rng.standard_exponential(shape) - 1.0
    if profile.family == "rademacher":
        return rng.integers(0, 2, size=shape) * 2.0 - 1.0
    # symmetrized Pareto: sign * x0 * U^(-1/alpha)
    alpha = profile.alpha
    x0 = math.sqrt((alpha - 2.0) / alpha)
    u = rng.random(shape)
    sign = rng.integers(0, 2, size=shape) * 2.0 - 1.0
    return sign * x0 * u ** (-1.0 / alpha)


@dataclass(frozen=True)
class DependencyGraph:
    """Undirected dependence graph; non-adjacent index sets are independent."""

    n: int
    edges: frozenset

    def __post_init__(self):
        norm = set()
        for e in self.edges:
            i, j = sorted(e)
            if i == j:
                raise BadParams(f"self-loop at vertex {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise BadParams(f"edge {e} out of range for n={self.n}")
            norm.add((i, j))
        object.__setattr__(self, "edges", frozenset(norm))

    def neighborhoods(self):
        """Closed neighborhoods N[i] = {i} + neighbors."""
        nbhd = [{i} for i in range(self.n)]
        for i, j in self.edges:
            nbhd[i].add(j)
            nbhd[j].add(i)
        return [sorted(s) for s in nbhd]

    @property
    def max_degree_plus_one(self) -> int:
        deg = [0] * self.n
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return 1 + (max(deg) if deg else 0)


def path_graph(n: int) -> DependencyGraph:
    return DependencyGraph(n, frozenset((i, i + 1) for i in range(n - 1)))


def cycle_graph(n: int) -> DependencyGraph:
    edges = {(i, (i + 1) % n) for i in range(n)}
    return DependencyGraph(n, frozenset(edges))


def grid_graph(rows: int, cols: int) -> DependencyGraph:
    edges = set()
    for r in range(rows):
        for c in range(cols):
            v = r * cols + c
            if c + 1 < cols:
                edges.add((v, v + 1))
            if r + 1 < rows:
                edges.add((v, v + cols))
    return DependencyGraph(rows * cols, frozenset(edges))


def band_graph(n: int, k: int) -> DependencyGraph:
    """Vertices i ~ j iff 0 < |i-j| <= k (the M-dependent neighborhood graph)."""
    edges = {(i, j) for i in range(n) for j in range(i + 1, min(i + k + 1, n))}
    return DependencyGraph(n, frozenset(edges))


@dataclass(frozen=True)
class SequenceSample:
    """n observations in R^d with dependence confined to lag <= M."""

    data: np.ndarray
    M: int
    meta: str = ""

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        object.__setattr__(self, "data", arr)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]


def gen_iid(n: int, d: int, profile: MomentProfile, seed) -> SequenceSample:
    if n < 1:
        raise BadParams("n must be >= 1")
    rng = child_rng(seed, "iid")
    return SequenceSample(draw_innovations(profile, (n, d), rng), M=0,
                          meta=f"iid {profile.family}")


def gen_m_dependent(n: int, d: int, M: int, profile: MomentProfile, seed) -> SequenceSample:
    """Moving average X_i = sum_{j=0}^{M} Z_{i+j} / sqrt(M+1), exactly M-dependent."""
    if M < 0:
        raise BadParams("M must be >= 0")
    rng = child_rng(seed, "ma", M)
    z = draw_innovations(profile, (n + M, d), rng)
    if M == 0:
        x = z
    else:
        c = np.cumsum(z, axis=0)
        x = np.empty((n, d))
        x[0] = c[M]
        x[1:] = c[M + 1:] - c[:n - 1]
        x /= math.sqrt(M + 1)
    return SequenceSample(x, M=M, meta=f"ma({M}) {profile.family}")


def gen_local_graph(graph: DependencyGraph, d: int, profile: MomentProfile,
                    seed) -> SequenceSample:
    """X_i = sum over the closed neighborhood of vertex innovations, normalized."""
    rng = child_rng(seed, "graph")
    z = draw_innovations(profile, (graph.n, d), rng)
    x = np.empty((graph.n, d))
    for i, nb in enumerate(graph.neighborhoods()):
        x[i] = z[nb].sum(axis=0) / math.sqrt(len(nb))
    # M only meaningful for banded graphs; report the hull width
    width = max((max(abs(i - j) for j in nb) for i, nb in
                 enumerate(graph.neighborhoods())), default=0)
    return SequenceSample(x, M=2 * width,
                          meta=f"graph D={graph.max_degree_plus_one} {profile.family}")


def exact_sigma_n_ma(n: int, M: int, innovation_var: float) -> float:
    """Closed-form (1/n) Var(S_n) for the moving-average construction (per coordinate).

    Cov(X_i, X_{i+h}) = var * (M+1-h)/(M+1) for 0 <= h <= M, so
    sigma_n = var * [1 + 2 sum_{h=1}^{min(M,n-1)} (1 - h/n)(M+1-h)/(M+1)].
    """
    if n < 1 or M < 0:
        raise BadParams("need n >= 1 and M >= 0")
    total = 1.0
    for h in range(1, min(M, n - 1) + 1):
        total += 2.0 * (1.0 - h / n) * (M + 1 - h) / (M + 1)
    return innovation_var * total


# ---------------------------------------------------------------------------
# Equal-in-law shortcut samplers for S_n / sqrt(n)


def sum_cloud_iid(profile: MomentProfile, n: int, size: int, d: int,
                  rng: np.random.Generator) -> np.ndarray:
    """size draws of S_n/sqrt(n) for i.i.d. innovations, (size, d) array.

    Gaussian sums are Gaussian; exponential sums are Gamma(n) - n; Rademacher
    sums are 2*Binomial(n, 1/2) - n. The Pareto family has no reduction and
    falls back to chunked brute force.
    """
    if profile.family == "gaussian":
        return rng.standard_normal((size, d))
    if profile.family == "centered-exponential":
        return (rng.gamma(n, size=(size, d)) - n) / math.sqrt(n)
    if profile.family == "rademacher":
        s = 2.0 * rng.binomial(n, 0.5, size=(size, d)) - n
        return s / math.sqrt(n)
    return _sum_cloud_bruteforce(profile, n, size, d, rng)


def _sum_cloud_bruteforce(profile: MomentProfile, n: int, size: int, d: int,
                          rng: np.random.Generator,
                          chunk_elems: int = 1 << 24) -> np.ndarray:
    out = np.empty((size, d))
    rows = max(1, chunk_elems // n)
    i = 0
    while i < size:
        j = min(size, i + rows)
        z = draw_innovations(profile, (j - i, n, d), rng)
        out[i:j] = z.sum(axis=1)
        i = j
    return out / math.sqrt(n)


def sum_cloud_ma1(profile: MomentProfile, n: int, size: int, d: int,
                  rng: np.random.Generator) -> np.ndarray:
    """size draws of S_n/sqrt(n) for the M=1 moving average.

    S_n = [Z_0 + 2(Z_1 + ... + Z_{n-1}) + Z_n] / sqrt(2); the middle block is a
    sum of n-1 i.i.d. innovations, so the i.i.d. shortcuts apply to it. Needs
    n >= 2. Coordinates are independent.
    """
    if n < 2:
        raise BadParams("ma1 shortcut needs n >= 2")
    if profile.family == "centered-exponential":
        mid = rng.gamma(n - 1, size=(size, d)) - (n - 1)
    elif profile.family == "gaussian":
        mid = rng.standard_normal((size, d)) * math.sqrt(n - 1)
    else:
        z = draw_innovations(profile, (size, n - 1, d), rng)
        mid = z.sum(axis=1)
    z0 = draw_innovations(profile, (size, d), rng)
    zn = draw_innovations(profile, (size, d), rng)
    return (2.0 * mid + z0 + zn) / math.sqrt(2.0) / math.sqrt(n)


def sum_cloud_ma1_bruteforce(profile: MomentProfile, n: int, size: int, d: int,
                             rng: np.random.Generator) -> np.ndarray:
    """Literal MA(1) sums, the oracle for sum_cloud_ma1."""
    out = np.empty((size, d))
    for i in range(size):
        z = draw_innovations(profile, (n + 1, d), rng)
        x = (z[:-1] + z[1:]) / math.sqrt(2.0)
        out[i] = x.sum(axis=0)
    return out / math.sqrt(n)
