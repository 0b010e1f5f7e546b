"""Nummelin splitting on finite chains.

The split chain augments the skeleton (every m-th step) with a Bernoulli
level: at a boundary whose state lies in the small set, the level-1 branch
restarts the next boundary from the minorizing measure nu, independently of
the past — a regeneration. Between boundaries the path is filled by exact
conditional bridge sampling, so the first coordinate remains a P-chain.
Cycle lengths, cycle martingale increments, and the K_n bookkeeping follow.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BadParams, MissingRegens, NoOverlap, TooFewCycles
from .markov_exact import FiniteChain, PoissonSolution, stationary_dist
from .seeding import child_rng


@dataclass(frozen=True)
class Minorization:
    """P^m(x, .) >= beta * nu(.) for all x in the small set; nu lives on it."""

    m: int
    beta: float
    nu: np.ndarray
    c_bar: tuple


@dataclass(frozen=True)
class SplitTrace:
    """One split-chain path.

    states[t] for t = 0..n; levels[k] in {0,1} at boundary indices k (skeleton
    scale, level drawn when x_{km} is in the small set) and -1 where no coin
    was tossed. regen_times_skeleton holds tau_i with level 1 at tau_i - 1,
    i.e. block tau_i starts from nu; regen_times = m * tau_i.
    """

    states: np.ndarray
    levels: np.ndarray
    m: int

    @property
    def n(self) -> int:
        return len(self.states) - 1

    @property
    def regen_times_skeleton(self) -> np.ndarray:
        return np.nonzero(self.levels == 1)[0] + 1

    @property
    def regen_times(self) -> np.ndarray:
        return self.regen_times_skeleton * self.m

    @property
    def cycle_lengths(self) -> np.ndarray:
        """Lambda_i = T_i - T_{i-1} with T_0 = 0."""
        T = self.regen_times
        if len(T) == 0:
            return np.array([], dtype=int)
        return np.diff(np.concatenate([[0], T]))

    def to_csv(self) -> str:
        """Columns t, state, boundary_level (empty off-boundary), is_regen."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["t", "state", "boundary_level", "is_regen"])
        regset = set(self.regen_times.tolist())
        for t, s in enumerate(self.states):
            level = ""
            if t % self.m == 0 and t // self.m < len(self.levels):
                lv = self.levels[t // self.m]
                level = "" if lv < 0 else int(lv)
            w.writerow([t, int(s), level, int(t in regset)])
        return buf.getvalue()


@dataclass(frozen=True)
class CycleIncrements:
    tilde_M: np.ndarray           # (num_cycles, d)
    K_n: int
    k_n: int
    remainder_R_n: np.ndarray     # M_n - sum of the cycles completed by time n
    M_n: np.ndarray
    boundary: np.ndarray          # g(x_0) - g(x_n)


def build_minorization(chain: FiniteChain, c_bar, m: int) -> Minorization:
    """Constructive minorization: nu(z) ~ min_{x in c_bar} P^m(x,z) on c_bar.

    beta is the unnormalized mass; beta = 0 means the chosen set and skeleton
    step admit no common component (try larger m or a different set).
    """
    c_bar = tuple(sorted(int(i) for i in c_bar))
    if not c_bar:
        raise BadParams("small set must be nonempty")
    if m < 1:
        raise BadParams("skeleton step m must be >= 1")
    Pm = np.linalg.matrix_power(chain.kernel, m)
    mins = Pm[list(c_bar)].min(axis=0)
    mass = np.zeros(chain.s)
    mass[list(c_bar)] = mins[list(c_bar)]      # nu is supported on c_bar
    beta = float(mass.sum())
    if beta <= 0.0:
        raise NoOverlap("minorization mass is zero; increase m or change the set")
    return Minorization(m=m, beta=beta, nu=mass / beta, c_bar=c_bar)


def _bridge_fill(P_powers, left_state, boundary_state, m, rng):
    """Sample x_1..x_{m-1} given x_0 = left_state and x_m = boundary_state.

    Backward conditioning: P(x_j = z | x_{j-1} = w, x_m = b) ~ P[w, z] *
    P^{m-j}[z, b]. Exact for finite chains.
    """
    out = np.empty(m - 1, dtype=np.int64)
    w = left_state
    for j in range(1, m):
        probs = P_powers[1][w] * P_powers[m - j][:, boundary_state]
        probs = probs / probs.sum()
        w = int(rng.choice(len(probs), p=probs))
        out[j - 1] = w
    return out


def simulate_split_chain(chain: FiniteChain, minor: Minorization, n: int,
                         seed, start: str = "stationary") -> SplitTrace:
    """Simulate the split chain for n steps (states 0..n inclusive)."""
    batch = simulate_split_chain_batch(chain, minor, n, 1, seed, start=start)
    return batch[0]


def simulate_split_chain_batch(chain: FiniteChain, minor: Minorization, n: int,
                               num_traces: int, seed,
                               start: str = "stationary"):
    """Simulate many independent split-chain traces.

    The m=1 case (every step is a boundary) is vectorized across traces; the
    general case loops per trace with exact bridge filling inside blocks.
    """
    if minor.beta < 0.02:
        import warnings
        warnings.warn("beta < 0.02: cycles are long; desk-scale n may contain "
                      "too few regenerations", RuntimeWarning)
    if minor.m == 1 and num_traces > 1:
        return _simulate_split_m1_batch(chain, minor, n, num_traces, seed, start)
    return [_simulate_split_single(chain, minor, n, child_rng(seed, "split", i),
                                   start) for i in range(num_traces)]


def _draw_start(chain, rng, size, start):
    if start == "stationary":
        pi = stationary_dist(chain)
        return np.searchsorted(np.cumsum(pi), rng.random(size)).astype(np.int64)
    return np.full(size, int(start), dtype=np.int64)


def _residual_kernel(chain, minor):
    Pm = np.linalg.matrix_power(chain.kernel, minor.m)
    resid = (Pm - minor.beta * minor.nu) / (1.0 - minor.beta) \
        if minor.beta < 1.0 else np.tile(minor.nu, (chain.s, 1))
    resid = np.clip(resid, 0.0, None)
    resid /= resid.sum(axis=1, keepdims=True)
    return Pm, resid


def _simulate_split_m1_batch(chain, minor, n, num_traces, seed, start):
    rng = child_rng(seed, "split-batch")
    _, resid = _residual_kernel(chain, minor)
    in_cbar = np.zeros(chain.s, dtype=bool)
    in_cbar[list(minor.c_bar)] = True
    cum_resid = np.cumsum(resid, axis=1)
    cum_full = np.cumsum(chain.kernel, axis=1)
    cum_nu = np.cumsum(minor.nu)
    states = np.empty((num_traces, n + 1), dtype=np.int64)
    levels = np.full((num_traces, n), -1, dtype=np.int8)
    states[:, 0] = _draw_start(chain, rng, num_traces, start)
    for k in range(n):
        x = states[:, k]
        on = in_cbar[x]
        coin = rng.random(num_traces) < minor.beta
        regen = on & coin
        levels[on, k] = coin[on].astype(np.int8)
        nxt = np.empty(num_traces, dtype=np.int64)
        u = rng.random(num_traces)
        if regen.any():
            nxt[regen] = np.searchsorted(cum_nu, u[regen])
        res = on & ~regen
        if res.any():
            nxt[res] = (u[res, None] > cum_resid[x[res]]).sum(axis=1)
        off = ~on
        if off.any():
            nxt[off] = (u[off, None] > cum_full[x[off]]).sum(axis=1)
        states[:, k + 1] = nxt
    return [SplitTrace(states=states[i], levels=levels[i], m=1)
            for i in range(num_traces)]


def _simulate_split_single(chain, minor, n, rng, start):
    m = minor.m
    num_blocks = n // m
    if num_blocks < 1:
        raise BadParams(f"n={n} shorter than one skeleton block m={m}")
    n = num_blocks * m                        # whole blocks only
    Pm, resid = _residual_kernel(chain, minor)
    P_powers = [np.linalg.matrix_power(chain.kernel, j) for j in range(m + 1)]
    in_cbar = set(minor.c_bar)
    states = np.empty(n + 1, dtype=np.int64)
    levels = np.full(num_blocks, -1, dtype=np.int8)
    states[0] = _draw_start(chain, rng, 1, start)[0]
    for k in range(num_blocks):
        x = int(states[k * m])
        if x in in_cbar:
            lv = int(rng.random() < minor.beta)
            levels[k] = lv
            row = minor.nu if lv else resid[x]
        else:
            row = Pm[x]
        nxt = int(rng.choice(chain.s, p=row))
        states[(k + 1) * m] = nxt
        if m > 1:
            states[k * m + 1:(k + 1) * m] = _bridge_fill(P_powers, x, nxt, m, rng)
    return SplitTrace(states=states, levels=levels, m=m)


@dataclass(frozen=True)
class TailFit:
    rho_hat: float
    b_hat: float
    r_squared: float
    degenerate: bool = False
    num_cycles: int = 0


def cycle_tail_fit(traces, include_first: bool = False,
                   min_cycles: int = 1000) -> TailFit:
    """Least-squares fit of log P(L > l) vs l over pooled skeleton cycle lengths.

    Cycles with index >= 2 are pooled by default (the first cycle has a
    different law); the fit range keeps survival counts >= 50.
    """
    Ls = []
    for tr in traces:
        L = tr.cycle_lengths // tr.m
        Ls.append(L if include_first else L[1:])
    L = np.concatenate(Ls) if Ls else np.array([], dtype=int)
    total = len(L)
    if total < min_cycles:
        raise TooFewCycles(f"{total} cycles pooled, need >= {min_cycles}")
    lmax = int(L.max())
    if lmax <= 1:
        return TailFit(rho_hat=0.0, b_hat=0.0, r_squared=1.0, degenerate=True,
                       num_cycles=total)
    ells = np.arange(1, lmax)                # survival at l: P(L > l)
    surv = np.array([(L > el).sum() for el in ells], dtype=float)
    keep = surv >= 50
    if keep.sum() < 2:
        return TailFit(rho_hat=0.0, b_hat=0.0, r_squared=1.0, degenerate=True,
                       num_cycles=total)
    x = ells[keep].astype(float)
    y = np.log(surv[keep] / total)
    A = np.vstack([x, np.ones_like(x)]).T
    coef, _, _, _ = np.linalg.lstsq(A, y, rcond=None)
    pred = A @ coef
    ss_res = float(((y - pred) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return TailFit(rho_hat=float(np.exp(coef[0])), b_hat=float(np.exp(coef[1])),
                   r_squared=r2, num_cycles=total)


def mean_cycle_length(traces) -> float:
    """Pooled mean of Lambda_i over cycles i >= 2 (the i.i.d. regime)."""
    parts = [tr.cycle_lengths[1:] for tr in traces if len(tr.cycle_lengths) > 1]
    allL = np.concatenate(parts) if parts else np.array([])
    if len(allL) == 0:
        raise TooFewCycles("no cycles with index >= 2")
    return float(allL.mean())


def cycle_increments(trace: SplitTrace, g: PoissonSolution, chain: FiniteChain,
                     n: int, mu_lambda: float = None) -> CycleIncrements:
    """Martingale increments xi_t, their cycle aggregates, and K_n/k_n.

    S_n = sum_{t<n} hbar(x_t) decomposes exactly as
    S_n = g(x_0) - g(x_n) + M_n with M_n = sum_{t=1..n} xi_t and
    xi_t = g(x_t) - (Pg)(x_{t-1}). tilde_M_i aggregates xi over cycle i.
    K_n = min{k >= 1 : T_k > n} + 1, so the trace must extend past the first
    regeneration after n plus one more cycle; otherwise MissingRegens.
    """
    if n > trace.n:
        raise BadParams(f"n={n} exceeds trace length {trace.n}")
    pi = stationary_dist(chain)
    hbar = chain.obs - pi @ chain.obs
    gv = g.g
    Pg = chain.kernel @ gv
    states = trace.states
    xi = gv[states[1:]] - Pg[states[:-1]]     # xi_t for t = 1..trace.n
    Mcum = np.concatenate([np.zeros((1, xi.shape[1])), np.cumsum(xi, axis=0)])
    T = trace.regen_times
    exceed = np.nonzero(T > n)[0]
    if len(exceed) == 0 or exceed[0] + 1 >= len(T):
        raise MissingRegens("horizon too short: need one full cycle past the "
                            "first regeneration after n")
    K_n = int(exceed[0]) + 2                  # 1-based index of first T > n, plus 1
    if T[K_n - 1] > trace.n:
        raise MissingRegens("horizon too short for cycle K_n")
    if mu_lambda is None:
        lam = trace.cycle_lengths
        if len(lam) < 2:
            raise TooFewCycles("need >= 2 cycles to estimate E[Lambda_2]")
        mu_lambda = float(lam[1:].mean())
    k_n = int(n // mu_lambda)
    bounds = np.concatenate([[0], T[:K_n]])
    tilde = Mcum[bounds[1:]] - Mcum[bounds[:-1]]
    completed = np.nonzero(T <= n)[0]
    M_last = Mcum[T[completed[-1]]] if len(completed) else Mcum[0]
    M_n = Mcum[n]
    return CycleIncrements(tilde_M=tilde, K_n=K_n, k_n=k_n,
                           remainder_R_n=M_n - M_last, M_n=M_n,
                           boundary=gv[states[0]] - gv[states[n]])


def kn_concentration(traces, n_grid, q: float = 2.0):
    """Rows (n, E|K_n - k_n|, E|K_n - k_n|^{q/2}, ratio, stderr).

    k_n = floor(n / mu) with mu pooled over all traces' cycles i >= 2; the
    ratio column is E|K_n - k_n| / sqrt(n).
    """
    mu = mean_cycle_length(traces)
    rows = []
    Ts = [tr.regen_times for tr in traces]
    for n in n_grid:
        devs = []
        for T in Ts:
            exceed = np.nonzero(T > n)[0]
            if len(exceed) == 0:
                raise MissingRegens(f"a trace has no regeneration past n={n}")
            K_n = int(exceed[0]) + 2
            devs.append(abs(K_n - int(n // mu)))
        devs = np.asarray(devs, dtype=float)
        rows.append({
            "n": int(n),
            "mean_abs": float(devs.mean()),
            "mean_abs_q": float((devs ** (q / 2.0)).mean()),
            "ratio": float(devs.mean() / math.sqrt(n)),
            "stderr": float(devs.std(ddof=1) / math.sqrt(len(devs)))
            if len(devs) > 1 else 0.0,
        })
    return rows
