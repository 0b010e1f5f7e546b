"""Big-small block decomposition with the optimized block length.

Indices 0..n-1 are tiled as [big ell][gap M][big ell][gap M]...[remainder].
Big-block sums of an M-dependent sequence are independent because the gaps
eat the dependence range. S_n = A + Delta holds exactly by construction
(Delta is computed by subtraction, so the identity is exact in floating
point; the two-way reconstruction check is separate).
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import BadLengths, BadParams, LengthMismatch
from .generators import SequenceSample


@dataclass(frozen=True)
class BlockPartition:
    n: int
    M: int
    ell: int
    big: tuple          # tuple of ranges
    small: tuple
    remainder: range

    @property
    def k(self) -> int:
        return len(self.big)

    def to_json(self) -> str:
        doc = {"n": self.n, "M": self.M, "ell": self.ell,
               "big": [[r.start, r.stop] for r in self.big],
               "small": [[r.start, r.stop] for r in self.small],
               "remainder": [self.remainder.start, self.remainder.stop]}
        return json.dumps(doc, sort_keys=True)


def block_partition(n: int, M: int, ell: int) -> BlockPartition:
    """B_j = [(j-1)(ell+M), (j-1)(ell+M)+ell), gaps of length M, then remainder."""
    if M < 0 or ell < M or ell < 1:
        raise BadLengths(f"need ell >= max(M,1) >= 0, got ell={ell}, M={M}")
    if n < 1:
        raise BadLengths("n must be >= 1")
    period = ell + M
    if n < period:
        warnings.warn(f"n={n} < ell+M={period}: remainder-only partition",
                      RuntimeWarning)
        return BlockPartition(n=n, M=M, ell=ell, big=(), small=(),
                              remainder=range(0, n))
    k = n // period
    big = tuple(range(j * period, j * period + ell) for j in range(k))
    small = tuple(range(j * period + ell, (j + 1) * period) for j in range(k))
    return BlockPartition(n=n, M=M, ell=ell, big=big, small=small,
                          remainder=range(k * period, n))


def optimal_block_length(n: int, M: int, p: float, q: float) -> int:
    """ell = floor((2M+1)^{2p/(2p+q-2)} * n^{(p+q-2)/(2p+q-2)}), clamped valid.

    Requires p >= 2 and q in (0, 2].
    """
    if p < 2 or not (0 < q <= 2) or n < 1 or M < 0:
        raise BadParams(f"need p >= 2, q in (0,2], n >= 1, M >= 0; "
                        f"got p={p}, q={q}, n={n}, M={M}")
    denom = 2 * p + q - 2
    raw = (2 * M + 1) ** (2 * p / denom) * n ** ((p + q - 2) / denom)
    # guard against 1-ulp undershoot of integer-valued powers
    ell = int(math.floor(raw + 1e-9))
    lo = max(M, 1)
    hi = max(n - M, lo)
    if ell < lo or ell > hi:
        clamped = min(max(ell, lo), hi)
        warnings.warn(f"optimal ell={ell} clamped to {clamped} for n={n}, M={M}",
                      RuntimeWarning)
        ell = clamped
    return ell


def block_sums(sample: SequenceSample, part: BlockPartition):
    """A = sum over big blocks, Delta = S_n - A (exact); plus diagnostics.

    Returns dict with A, Delta, S_n, the per-block sums U, and the two-way
    reconstruction error |Delta - (gap+remainder sums)| (float-roundoff size).
    """
    x = sample.data
    if x.shape[0] != part.n:
        raise LengthMismatch(f"sample n={x.shape[0]} vs partition n={part.n}")
    U = np.stack([x[r.start:r.stop].sum(axis=0) for r in part.big]) \
        if part.big else np.zeros((0, x.shape[1]))
    A = U.sum(axis=0)
    S_n = x.sum(axis=0)
    delta = S_n - A
    direct = x[part.remainder.start:part.remainder.stop].sum(axis=0)
    for r in part.small:
        direct = direct + x[r.start:r.stop].sum(axis=0)
    return {"A": A, "Delta": delta, "S_n": S_n, "U": U,
            "two_way_error": float(np.abs(delta - direct).max())}
