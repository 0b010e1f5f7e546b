"""Small dense PSD linear algebra and Gaussian targets.

Covariance matrices here are tiny (d <= 16), so everything goes through
symmetric eigendecompositions; robustness near singularity matters more than
speed. The closed-form Gaussian W2 lives here because it is the test oracle
for the transport estimators.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DimMismatch, NotPsd
from .seeding import child_rng


@dataclass(frozen=True)
class PsdMatrix:
    """Symmetric positive-semidefinite matrix with validated invariants."""

    entries: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise NotPsd(f"expected a square matrix, got shape {a.shape}")
        scale = max(np.abs(a).max(), 1.0)
        if np.abs(a - a.T).max() > 1e-12 * scale:
            raise NotPsd("matrix is not symmetric to 1e-12 relative")
        a = 0.5 * (a + a.T)
        eig = np.linalg.eigvalsh(a)
        tr = float(np.trace(a))
        tol = 1e-10 * max(tr / a.shape[0], 0.0) + 1e-14
        if eig.min() < -tol:
            raise NotPsd(f"eigenvalue {eig.min():.3e} below PSD tolerance -{tol:.3e}")
        object.__setattr__(self, "entries", a)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None):
        return np.asarray(self.entries, dtype=dtype)


@dataclass(frozen=True)
class GaussianSpec:
    """Target normal law N(mean, cov)."""

    mean: np.ndarray
    cov: PsdMatrix

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mean, dtype=float))
        if not np.all(np.isfinite(mu)):
            raise DimMismatch("mean must be finite")
        if mu.shape != (self.cov.dim,):
            raise DimMismatch(f"mean length {mu.shape} vs cov dim {self.cov.dim}")
        object.__setattr__(self, "mean", mu)

    @property
    def d(self) -> int:
        return self.cov.dim


def as_psd(mat) -> PsdMatrix:
    """Coerce an array (or PsdMatrix) to PsdMatrix."""
    if isinstance(mat, PsdMatrix):
        return mat
    return PsdMatrix(np.asarray(mat, dtype=float))


def gaussian_spec(cov, mean=None) -> GaussianSpec:
    cov = as_psd(cov)
    if mean is None:
        mean = np.zeros(cov.dim)
    return GaussianSpec(mean=np.asarray(mean, dtype=float), cov=cov)


def cholesky_factor(cov, return_rank: bool = False):
    """Lower-triangular L with L @ L.T == cov to 1e-10 relative Frobenius.

    Singular input is handled by a zero-pivot-tolerant outer-product
    factorization (valid for PSD matrices); rank deficiency is reported via a
    warning, or returned when return_rank=True.
    """
    cov = as_psd(cov)
    a = cov.entries
    tr = float(np.trace(a))
    eig_min = np.linalg.eigvalsh(a).min()
    if eig_min < -1e-8 * max(tr, 1e-300):
        raise NotPsd(f"eigenvalue {eig_min:.3e} < -1e-8 * trace")
    d = cov.dim
    L = np.zeros((d, d))
    rank = 0
    # pivot tolerance relative to the largest diagonal entry
    tol = 1e-12 * max(a.diagonal().max(), 1.0)
    for j in range(d):
        pivot = a[j, j] - L[j, :j] @ L[j, :j]
        if pivot > tol:
            L[j, j] = np.sqrt(pivot)
            for i in range(j + 1, d):
                L[i, j] = (a[i, j] - L[i, :j] @ L[j, :j]) / L[j, j]
            rank += 1
        # pivot ~ 0: PSD forces the whole remaining column to ~0; leave zeros
    if rank < d:
        warnings.warn(f"singular covariance: rank {rank} < dim {d}", RuntimeWarning)
    if return_rank:
        return L, rank
    return L


def sqrt_psd(mat) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition.

    Tiny negative eigenvalues from roundoff are clamped to zero.
    """
    a = as_psd(mat).entries
    w, v = np.linalg.eigh(a)
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.T


def sample_gaussian(spec: GaussianSpec, m: int, seed):
    """m i.i.d. draws from the spec'd normal, deterministic given seed.

    Returns a transport.PointCloud.
    """
    from .transport import PointCloud

    if m < 1:
        raise ValueError("m must be >= 1")
    rng = child_rng(seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # singular cov is fine here
        L = cholesky_factor(spec.cov)
    z = rng.standard_normal((m, spec.d))
    return PointCloud(z @ L.T + spec.mean)


def gaussian_w2_closed_form(a, b) -> float:
    """Exact W2 between Gaussians, given as GaussianSpec or covariance.

    W2^2 = ||mu_a - mu_b||^2 + tr(a) + tr(b) - 2 tr((a^{1/2} b a^{1/2})^{1/2});
    bare covariances are treated as centered laws.
    """
    mu_a = a.mean if isinstance(a, GaussianSpec) else None
    mu_b = b.mean if isinstance(b, GaussianSpec) else None
    a = as_psd(a.cov if isinstance(a, GaussianSpec) else a)
    b = as_psd(b.cov if isinstance(b, GaussianSpec) else b)
    if a.dim != b.dim:
        raise DimMismatch(f"dims {a.dim} vs {b.dim}")
    shift = 0.0
    if mu_a is not None or mu_b is not None:
        mu_a = np.zeros(a.dim) if mu_a is None else mu_a
        mu_b = np.zeros(b.dim) if mu_b is None else mu_b
        shift = float(((mu_a - mu_b) ** 2).sum())
    ra = sqrt_psd(a)
    cross = sqrt_psd(ra @ b.entries @ ra)
    w2sq = shift + float(np.trace(a.entries) + np.trace(b.entries)
                         - 2.0 * np.trace(cross))
    return np.sqrt(max(w2sq, 0.0))
