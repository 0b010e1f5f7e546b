"""Exact finite-state Markov chain computations.

Everything here is deterministic linear algebra on small kernels: stationary
distribution (GTH elimination, no subtractions), drift-condition verification,
the Poisson equation, exact finite-horizon and asymptotic covariances of the
observation partial sums, time reversal, plus one stochastic routine — the
per-step maximal coupling used to sample meeting times.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BadParams, DimMismatch, Reducible
from .linalg_gauss import PsdMatrix
from .seeding import child_rng


@dataclass(frozen=True)
class FiniteChain:
    """Row-stochastic kernel + per-state observation, Lyapunov V, small set.

    obs may be an (s, d) array for a homogeneous observation h, or a list of
    such arrays for time-varying h_t (cycled when the horizon exceeds the
    list).
    """

    kernel: np.ndarray
    obs: object
    lyapunov: np.ndarray = None
    small_set: tuple = ()

    def __post_init__(self):
        P = np.asarray(self.kernel, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise BadParams(f"kernel must be square, got {P.shape}")
        if P.min() < 0 or np.abs(P.sum(axis=1) - 1.0).max() > 1e-12:
            raise BadParams("kernel rows must be nonnegative and sum to 1 (1e-12)")
        s = P.shape[0]
        object.__setattr__(self, "obs", self._classify_obs(self.obs, s))
        V = self.lyapunov
        V = np.ones(s) if V is None else np.asarray(V, dtype=float)
        if V.shape != (s,) or V.min() < 1.0:
            raise BadParams("lyapunov must be an s-vector with V >= 1")
        object.__setattr__(self, "kernel", P)
        object.__setattr__(self, "lyapunov", V)
        object.__setattr__(self, "small_set", tuple(int(i) for i in self.small_set))

    @staticmethod
    def _coerce_obs(h, s):
        h = np.asarray(h, dtype=float)
        if h.ndim == 1:
            h = h[:, None]
        if h.ndim != 2 or h.shape[0] != s or not np.all(np.isfinite(h)):
            raise BadParams(f"obs must be finite with {s} rows; time-varying "
                            "observations are a list of (s, d) arrays")
        return h

    @classmethod
    def _classify_obs(cls, obs, s):
        """Homogeneous (s, d) array, or list of per-step (s, d) arrays.

        1-D and 2-D inputs are homogeneous; a 3-D array or a ragged sequence
        of 2-D arrays is time-varying.
        """
        try:
            arr = np.asarray(obs, dtype=float)
        except (ValueError, TypeError):
            return [cls._coerce_obs(h, s) for h in obs]
        if arr.ndim <= 2:
            return cls._coerce_obs(arr, s)
        if arr.ndim == 3:
            return [cls._coerce_obs(h, s) for h in arr]
        raise BadParams(f"obs has unsupported ndim {arr.ndim}")

    @property
    def s(self) -> int:
        return self.kernel.shape[0]

    @property
    def d(self) -> int:
        h = self.obs[0] if isinstance(self.obs, list) else self.obs
        return h.shape[1]

    @property
    def homogeneous(self) -> bool:
        return not isinstance(self.obs, list)

    def to_json(self) -> str:
        obs = self.obs.tolist() if self.homogeneous else [h.tolist() for h in self.obs]
        doc = {"kernel": self.kernel.tolist(), "obs": obs,
               "V": self.lyapunov.tolist(), "small_set": list(self.small_set)}
        return json.dumps(doc, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "FiniteChain":
        doc = json.loads(text)
        return FiniteChain(kernel=np.array(doc["kernel"], dtype=float),
                           obs=doc["obs"], lyapunov=np.array(doc["V"], dtype=float),
                           small_set=tuple(doc.get("small_set", ())))


@dataclass(frozen=True)
class PoissonSolution:
    """g with (I - P) g = h - pi(h), normalized to pi . g = 0."""

    g: np.ndarray
    residual: float


@dataclass(frozen=True)
class CovariancePair:
    sigma_n: PsdMatrix
    sigma_infty: PsdMatrix
    n: int


@dataclass(frozen=True)
class DriftReport:
    holds: bool
    max_violation: float
    worst_state: int


def _reachable(P: np.ndarray, start: int) -> np.ndarray:
    seen = np.zeros(P.shape[0], dtype=bool)
    stack = [start]
    seen[start] = True
    while stack:
        u = stack.pop()
        for v in np.nonzero(P[u] > 0)[0]:
            if not seen[v]:
                seen[v] = True
                stack.append(int(v))
    return seen


def is_irreducible(chain: FiniteChain) -> bool:
    P = chain.kernel
    return bool(_reachable(P, 0).all() and _reachable(P.T, 0).all())


def is_aperiodic(chain: FiniteChain) -> bool:
    """Period via gcd of (depth[u] + 1 - depth[v]) over edges of the BFS tree."""
    if not is_irreducible(chain):
        raise Reducible("period undefined for reducible kernels")
    P = chain.kernel
    s = P.shape[0]
    depth = np.full(s, -1)
    depth[0] = 0
    order = [0]
    qi = 0
    while qi < len(order):
        u = order[qi]
        qi += 1
        for v in np.nonzero(P[u] > 0)[0]:
            if depth[v] < 0:
                depth[v] = depth[u] + 1
                order.append(int(v))
    g = 0
    for u in range(s):
        for v in np.nonzero(P[u] > 0)[0]:
            g = math.gcd(g, depth[u] + 1 - depth[v])
    return g == 1


def stationary_dist(chain: FiniteChain) -> np.ndarray:
    """Stationary distribution by GTH elimination (subtraction-free, stable)."""
    if not is_irreducible(chain):
        raise Reducible("kernel is not irreducible")
    A = chain.kernel.astype(float).copy()
    s = A.shape[0]
    scales = np.ones(s)
    for k in range(s - 1, 0, -1):
        scales[k] = A[k, :k].sum()          # 1 - P_cens[k, k], never subtracted
        A[k, :k] /= scales[k]
        A[:k, :k] += np.outer(A[:k, k], A[k, :k])
    pi = np.zeros(s)
    pi[0] = 1.0
    for k in range(1, s):
        pi[k] = (pi[:k] @ A[:k, k]) / scales[k]
    return pi / pi.sum()


def drift_verify(chain: FiniteChain, lam: float, L: float) -> DriftReport:
    """Check (PV)(x) <= lam*V(x) + L*1_{small_set}(x) state by state."""
    PV = chain.kernel @ chain.lyapunov
    bound = lam * chain.lyapunov
    if chain.small_set:
        bound = bound.copy()
        bound[list(chain.small_set)] += L
    viol = PV - bound
    worst = int(np.argmax(viol))
    return DriftReport(holds=bool(viol.max() <= 1e-12),
                       max_violation=float(max(viol.max(), 0.0)),
                       worst_state=worst)


def _centered_obs(chain: FiniteChain, pi: np.ndarray) -> np.ndarray:
    h = chain.obs
    return h - pi @ h


def poisson_solve(chain: FiniteChain) -> PoissonSolution:
    """Solve (I - P) g = h - pi(h) with pi . g = 0.

    Uses the fundamental matrix Z = (I - P + 1 pi^T)^{-1}: g = Z h_centered
    automatically satisfies the normalization. The truncated Neumann series
    sum_k P^k h_centered is the test oracle, not the implementation.
    """
    if not chain.homogeneous:
        raise BadParams("poisson_solve expects homogeneous obs; see g_t_backward")
    pi = stationary_dist(chain)
    hbar = _centered_obs(chain, pi)
    s = chain.s
    Z = np.linalg.inv(np.eye(s) - chain.kernel + np.outer(np.ones(s), pi))
    g = Z @ hbar
    residual = float(np.abs((np.eye(s) - chain.kernel) @ g - hbar).max())
    residual = max(residual, float(np.abs(pi @ g).max()))
    return PoissonSolution(g=g, residual=residual)


def g_t_backward(chain: FiniteChain, horizon: int, tol: float = 1e-12):
    """Time-varying solutions g_t = sum_k P^k hbar_{t+k} for obs lists.

    The obs list is cycled past its length. The series is truncated once the
    chain's contraction (Dobrushin coefficient, or |lambda_2| fallback) drives
    the remainder under tol.
    """
    hs = chain.obs if isinstance(chain.obs, list) else [chain.obs]
    pi = stationary_dist(chain)
    hbars = [h - pi @ h for h in hs]
    P = chain.kernel
    # contraction per step
    s = chain.s
    dob = max(0.5 * np.abs(P[i] - P[j]).sum() for i in range(s) for j in range(s))
    if dob >= 1.0:
        eig = np.sort(np.abs(np.linalg.eigvals(P)))[-2]
        dob = min(float(eig), 1.0 - 1e-9)
    hmax = max(float(np.abs(h).max()) for h in hbars) or 1.0
    window = max(int(math.log(tol / hmax) / math.log(max(dob, 1e-12))) + 1, 8)
    gs = []
    for t in range(horizon):
        acc = np.zeros_like(hbars[0])
        Pk = np.eye(s)
        for k in range(window):
            acc += Pk @ hbars[(t + k) % len(hbars)]
            Pk = Pk @ P
        gs.append(acc)
    return gs


def exact_covariances(chain: FiniteChain, n: int) -> CovariancePair:
    """Exact Sigma_n = (1/n) Var(S_n) under the stationary start, and Sigma_inf.

    Sigma_n = Gamma_0 + sum_{k=1}^{n-1} (1 - k/n)(Gamma_k + Gamma_k^T) with
    Gamma_k = hbar^T diag(pi) P^k hbar. Sigma_inf = pi(H) with
    H(x) = E[(g(Y) - Pg(x))(g(Y) - Pg(x))^T | Y ~ P(x, .)].
    """
    if n < 1:
        raise BadParams("n must be >= 1")
    if not chain.homogeneous:
        raise BadParams("exact_covariances expects homogeneous obs")
    pi = stationary_dist(chain)
    hbar = _centered_obs(chain, pi)
    P = chain.kernel
    D = np.diag(pi)
    sigma_n = hbar.T @ D @ hbar
    Pk = np.eye(chain.s)
    for k in range(1, n):
        Pk = Pk @ P
        gam = hbar.T @ D @ Pk @ hbar
        sigma_n = sigma_n + (1.0 - k / n) * (gam + gam.T)
    g = poisson_solve(chain).g
    Pg = P @ g
    sigma_inf = np.zeros((chain.d, chain.d))
    for x in range(chain.s):
        diff = g - Pg[x]                      # rows: g(y) - Pg(x)
        Hx = (diff * P[x][:, None]).T @ diff
        sigma_inf += pi[x] * Hx
    return CovariancePair(sigma_n=PsdMatrix(sigma_n),
                          sigma_infty=PsdMatrix(sigma_inf), n=n)


def time_reversal(chain: FiniteChain) -> FiniteChain:
    """Reversed kernel P*(y,x) = pi(x) P(x,y) / pi(y); pi-stationary, involutive."""
    pi = stationary_dist(chain)
    P = chain.kernel
    Pstar = (P * pi[:, None]).T / pi[:, None]
    Pstar /= Pstar.sum(axis=1, keepdims=True)   # remove roundoff drift
    return FiniteChain(kernel=Pstar, obs=chain.obs, lyapunov=chain.lyapunov,
                       small_set=chain.small_set)


def meeting_time_sample(chain: FiniteChain, x: int, y: int, seed,
                        horizon: int = 10_000):
    """Meeting time of two copies advanced by the per-step maximal coupling.

    Each step the pair meets with probability 1 - TV(P(x,.), P(y,.)) (moving
    together through the overlap), otherwise the two coordinates move through
    the normalized residuals. Marginally each coordinate is a P-chain. Returns
    the meeting time, or None if no meeting within horizon.
    """
    s = chain.s
    if not (0 <= x < s and 0 <= y < s):
        raise BadParams(f"states must be in [0, {s})")
    if x == y:
        return 0
    rng = child_rng(seed, "meet", x, y)
    P = chain.kernel
    a, b = x, y
    for t in range(1, horizon + 1):
        p, q = P[a], P[b]
        common = np.minimum(p, q)
        gamma = common.sum()
        if rng.random() < gamma:
            # met: both land on the overlap draw
            z = rng.choice(s, p=common / gamma)
            return t
        ra = (p - common) / (1.0 - gamma)
        rb = (q - common) / (1.0 - gamma)
        a = int(rng.choice(s, p=ra))
        b = int(rng.choice(s, p=rb))
        if a == b:
            # residuals are mutually singular in total mass but can still
            # land on the same state only when supports overlap; they do not,
            # by construction (min removed), so this cannot happen
            return t
    return None


def simulate_chain_sums(chain: FiniteChain, n: int, size: int, seed,
                        start: str = "stationary") -> np.ndarray:
    """size realizations of S_n/sqrt(n), S_n = sum_{t=0}^{n-1} hbar(x_t).

    Vectorized across realizations; observations are centered under pi so the
    sums are exactly mean-zero under the stationary start.
    """
    if not chain.homogeneous:
        raise BadParams("simulate_chain_sums expects homogeneous obs")
    pi = stationary_dist(chain)
    hbar = _centered_obs(chain, pi)
    rng = child_rng(seed, "chain-sums", n)
    cum = np.cumsum(chain.kernel, axis=1)
    if start == "stationary":
        states = np.searchsorted(np.cumsum(pi), rng.random(size)).astype(np.int64)
    else:
        states = np.full(size, int(start), dtype=np.int64)
    S = np.zeros((size, chain.d))
    for _ in range(n):
        S += hbar[states]
        u = rng.random(size)
        states = (u[:, None] > cum[states]).sum(axis=1)
    return S / math.sqrt(n)
